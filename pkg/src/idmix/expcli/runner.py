"""Run diagnostics from a config and write the artifact directory."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..ergodiag import ERGODIC, NON_ERGODIC, ergodic_time_average, lattice_ball_complement, weak_mixing_check
from ..errors import HypothesisError, IdmixError
from ..idlaw import charfn
from ..mixdiag import (
    CONSISTENT,
    DEFAULT_DELTAS,
    INCONCLUSIVE,
    CriterionTrace,
    codifference_analytic,
    combined_criterion,
    law_convergence_check,
    maruyama_check,
    norm_free_probe,
    pair_mixing_criterion,
    rescaled_criterion,
    smallball_trace,
)
from ..mmafield import FieldRealization, MmaModel, StationaryField
from .config import ExperimentConfig, build_model, build_sequence, sequence_label

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3
REFUSED = "refused"
SUMMARY_COLUMNS = ["diagnostic", "sequence", "verdict", "initial", "final", "threshold", "status", "message"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


@dataclass
class RunResult:
    exit_code: int
    outdir: Optional[Path]
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)


class Runner:
    def __init__(self, cfg: ExperimentConfig, outdir=None):
        self.cfg = cfg
        env = os.environ.get("OUTPUT_DIR")
        self.outdir = Path(outdir or env or cfg.output.get("directory", "runs/experiment"))
        self.model: Optional[StationaryField] = None
        self.rows: list = []
        self.failures: list = []
        self.files: list = []
        d = cfg.diagnostics
        self.threshold = float(d.get("threshold", 1e-6))
        self.j, self.k = int(d.get("j", 0)), int(d.get("k", 0))
        self.formats = cfg.output.get("formats", ["csv"])

    # files ---------------------------------------------------------------
    def _path(self, name) -> Path:
        p = self.outdir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def _write_rows(self, name, header, rows):
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def _write_trace(self, stem, tr: CriterionTrace):
        so_far = tr.verdict_so_far()
        l = tr.t.shape[1]
        rows = [[n] + list(tr.t[n]) + [tr.values[n], tr.stderr[n], tr.threshold[n], so_far[n]]
                for n in range(tr.values.size)]
        self._write_rows(f"{stem}.csv", ["n"] + [f"t{i + 1}" for i in range(l)]
                         + ["value", "stderr", "threshold", "verdict_so_far"], rows)
        norms = np.max(np.abs(tr.t), axis=1)
        self._write_rows(f"plot_{stem}.csv", ["x", "y"], list(zip(norms, tr.values)))

    def _record(self, diag, seq, verdict, initial=None, final=None, threshold=None, status="ok", message=""):
        self.rows.append([diag, seq, verdict, initial, final, threshold, status, message])

    def _trace_done(self, diag, label, tr, analytic=True):
        if analytic:
            tr.threshold = np.full(tr.values.shape, self.threshold)
        self._write_trace(f"{diag}__{label}", tr)
        self._record(diag, label, tr.verdict, tr.initial, tr.final, float(tr.threshold[-1]))

    # simulation ---------------------------------------------------------------
    def _theta_grid(self):
        d = self.cfg.diagnostics
        return np.linspace(float(d.get("theta_min", -2.0)), float(d.get("theta_max", 2.0)), int(d.get("theta_n", 21)))

    def _simulate(self, tag, points, replicates, h, window=None) -> FieldRealization:
        sim = self.cfg.simulation
        key_src = json.dumps({"model": self.cfg.model, "points": np.asarray(points).tolist(), "M": replicates,
                              "h": h, "seed": sim["seed"], "tail": sim.get("tail_rtol", 1e-8), "tag": tag},
                             sort_keys=True)
        key = hashlib.sha256(key_src.encode()).hexdigest()[:16]
        cache = self.outdir / "cache" / f"{tag}-{key}.npz"
        if cache.exists():
            real = FieldRealization.load(cache)
        else:
            kw = {"tail_rtol": float(sim.get("tail_rtol", 1e-8))} if isinstance(self.model, MmaModel) else {}
            real = self.model.simulate(points, replicates, h, int(sim["seed"]), window, **kw)
        if "npz" in self.formats:
            real.save(self._path(f"cache/{tag}-{key}.npz"))
        return real

    # diagnostics ------------------------------------------------------------
    def _seqs(self):
        return [(sequence_label(i, s), build_sequence(s, self.model.l)) for i, s in enumerate(self.cfg.sequences)]

    def d_integrability(self):
        if not isinstance(self.model, MmaModel):
            self._record("integrability", "", "not-applicable", status="skipped",
                         message="integrability conditions apply to mixed moving averages")
            return
        rep = self.model.check_integrability()
        rows = [[name, c.value, c.finite, c.error] for name, c in
                zip(("condition1", "condition2", "condition3"), (rep.condition1, rep.condition2, rep.condition3))]
        self._write_rows("integrability.csv", ["condition", "value", "finite", "error"], rows)
        self._record("integrability", "", "integrable" if rep.integrable else "non-integrable")

    def d_combined(self):
        for label, seq in self._seqs():
            self._guard("combined", label, lambda: self._trace_done("combined", label, combined_criterion(self.model, seq)))

    def d_pair(self):
        for label, seq in self._seqs():
            self._guard("pair", label, lambda: self._trace_done(
                "pair", label, pair_mixing_criterion(self.model, seq, self.j, self.k)))

    def d_rescaled(self):
        seed = int(self.cfg.diagnostics.get("scale_seed", 0))
        for label, seq in self._seqs():
            def go():
                tr = rescaled_criterion(self.model, seq, self.j, self.k, seed)
                self._trace_done("rescaled", label, tr)
                self.rows[-1][-1] = "scale=" + " ".join(f"{a:.17g}" for a in tr.meta["scale"])
            self._guard("rescaled", label, go)

    def d_maruyama(self):
        deltas = self.cfg.diagnostics.get("deltas", list(DEFAULT_DELTAS))
        for label, seq in self._seqs():
            def go():
                rep = maruyama_check(self.model, seq, deltas)
                self._trace_done("mm1", label, rep.mm1)
                for d, tr in rep.mm2.items():
                    self._trace_done(f"mm2_delta{d:g}", label, tr)
            self._guard("maruyama", label, go)

    def d_smallball(self):
        b = float(self.cfg.diagnostics.get("smallball_bound", 1.0))
        for label, seq in self._seqs():
            self._guard("smallball", label, lambda: self._trace_done("smallball", label, smallball_trace(self.model, seq, b)))

    def d_law(self):
        grid = self._theta_grid()
        if self.model.q > 1:
            grid = grid[:, None] * np.ones((1, self.model.q)) / np.sqrt(self.model.q)
        for label, seq in self._seqs():
            self._guard("law", label, lambda: self._trace_done("law", label, law_convergence_check(self.model, seq, grid)))

    def d_codifference(self):
        for label, seq in self._seqs():
            def go():
                pts = seq.generate()
                vals = [codifference_analytic(self.model, t, self.j, self.k) for t in pts]
                tr = CriterionTrace("codifference", pts, np.abs(vals), self.threshold)
                self._trace_done("codifference", label, tr)
                self._write_rows(f"codifference_values__{label}.csv",
                                 ["n"] + [f"t{i + 1}" for i in range(pts.shape[1])] + ["re", "im"],
                                 [[n] + list(t) + [v.real, v.imag] for n, (t, v) in enumerate(zip(pts, vals))])
            self._guard("codifference", label, go)

    def d_norm_free(self):
        def go():
            seqs = [s for _, s in self._seqs()]
            rep = norm_free_probe(self.model, seqs, self.j, self.k)
            self._write_rows("norm_free.csv", ["sequence", "kind", "tail", "verdict"],
                             [[lab, r["kind"], r["tail"], r["verdict"]] for (lab, _), r in zip(self._seqs(), rep.per_direction)])
            self._record("norm_free", "all", rep.verdict, message=f"shared verdict: {rep.shared_verdict}")
        self._guard("norm_free", "all", go)

    def d_weak_mixing(self):
        D = lattice_ball_complement(self.model.l)
        for label, seq in self._seqs():
            def go():
                pts = D.filter(seq.generate())
                self._trace_done("weak_mixing", label, weak_mixing_check(self.model, D, pts))
            self._guard("weak_mixing", label, go)

    def d_mc_triplet(self):
        def go():
            sim = self.cfg.simulation
            M = int(sim.get("replicates", 10000))
            h = sim.get("h", 0.01)
            origin = np.zeros((1, self.model.l))
            real = self._simulate("marginal", origin, M, h)
            x0 = real.values[:, 0, :]
            grid = self._theta_grid()
            direction = np.ones(self.model.q) / np.sqrt(self.model.q)
            thetas = grid[:, None] * direction[None, :]
            ecf = np.exp(1j * x0 @ thetas.T).mean(axis=0)
            trip = self.model.marginal_triplet()
            ref = np.asarray(charfn(trip, thetas if self.model.q > 1 else thetas[:, 0]))
            gaps = np.abs(ecf - ref)
            thr = 4.0 / np.sqrt(M)
            self._write_rows("mc_triplet.csv", ["theta", "ecf_re", "ecf_im", "triplet_re", "triplet_im", "gap", "threshold"],
                             [[g, e.real, e.imag, r.real, r.imag, d, thr] for g, e, r, d in zip(grid, ecf, ref, gaps)])
            self._write_rows("plot_mc_triplet.csv", ["x", "y"], list(zip(grid, gaps)))
            self._record("mc_triplet", "", "agree" if np.max(gaps) <= thr else "disagree",
                         float(gaps[0]), float(np.max(gaps)), thr)
        self._guard("mc_triplet", "", go)

    def d_empirical_pair(self):
        sim = self.cfg.simulation
        M = int(sim.get("replicates", 10000))
        h = sim.get("h", 0.01)
        for label, seq in self._seqs():
            def go():
                pts = seq.generate()
                grid = np.vstack([np.zeros((1, self.model.l)), pts])
                real = self._simulate(f"pair-{label}", grid, M, h)
                tr = pair_mixing_criterion(real, pts, self.j, self.k, model=self.model)
                self._trace_done("empirical_pair", label, tr, analytic=False)
            self._guard("empirical_pair", label, go)

    def d_ergodic(self):
        def go():
            sim = self.cfg.simulation
            T = float(sim.get("ergodic_T", 100.0))
            M = int(sim.get("ergodic_replicates", 64))
            rate = self.model.decay_rate
            spacing = float(sim.get("ergodic_spacing", min(1.0, 0.1 / rate) if rate and np.isfinite(rate) else 0.1))
            h = float(sim.get("ergodic_h", min(spacing, 0.05)))
            axis = np.arange(-T + spacing, T + 0.5 * spacing, spacing)
            if self.model.l > 1:
                grids = np.meshgrid(*([axis] * self.model.l), indexing="ij")
                points = np.stack([g.ravel() for g in grids], axis=-1)
            else:
                points = axis[:, None]
            real = self._simulate("ergodic", points, M, h)
            rep = ergodic_time_average(real, decay_rate=rate)
            self._write_rows("ergodic.csv", ["replicate", "time_average_re", "time_average_im"],
                             [[r, z.real, z.imag] for r, z in enumerate(rep.time_averages)])
            self._record("ergodic", "", rep.verdict, rep.gap, rep.gap, rep.threshold,
                         message="; ".join(rep.flags))
        self._guard("ergodic", "", go)

    def _guard(self, diag, label, fn):
        """Run one diagnostic; failures are recorded and the run continues."""
        try:
            fn()
        except HypothesisError as exc:
            self._record(diag, label, REFUSED, status=REFUSED, message=str(exc))
        except (IdmixError, ValueError, ArithmeticError, NotImplementedError, np.linalg.LinAlgError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            self.failures.append({"diagnostic": diag, "sequence": label, "error": msg})
            self._record(diag, label, "failed", status="failed", message=msg)

    # orchestration -------------------------------------------------------
    def run(self, diagnostics=None) -> RunResult:
        if self.outdir.exists():
            for name in ("summary.csv", "manifest.json"):
                (self.outdir / name).unlink(missing_ok=True)
        self.outdir.mkdir(parents=True, exist_ok=True)
        try:
            self.model = build_model(self.cfg.model)
        except (IdmixError, ValueError) as exc:
            self.failures.append({"diagnostic": "model", "sequence": "", "error": f"{type(exc).__name__}: {exc}"})
            self._finish()
            return RunResult(EXIT_RUNTIME, self.outdir, self.rows, self.failures)
        for name in diagnostics or self.cfg.diagnostics["run"]:
            getattr(self, f"d_{name}")()
        return RunResult(self._finish(), self.outdir, self.rows, self.failures)

    def simulate_only(self) -> RunResult:
        """Write realizations to the cache without running diagnostics."""
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.model = build_model(self.cfg.model)
        sim = self.cfg.simulation
        points = np.vstack([np.zeros((1, self.model.l))] + [s.generate() for _, s in self._seqs()])
        if "npz" not in self.formats:
            self.formats = list(self.formats) + ["npz"]
        real = self._simulate("realization", points, int(sim.get("replicates", 1000)), sim.get("h", 0.01))
        if "csv" in self.formats:
            real.to_csv(self._path("realization.csv"))
        self._record("simulate", "", "cached", status="ok", message=f"{real.replicates} replicates")
        return RunResult(self._finish(), self.outdir, self.rows, self.failures)

    def _finish(self) -> int:
        self._write_rows("summary.csv", SUMMARY_COLUMNS, self.rows)
        if self.failures:
            code = EXIT_RUNTIME
        else:
            verdicts = [r[2] for r in self.rows if r[6] == "ok"]
            code = EXIT_INCONCLUSIVE if verdicts and all(v == INCONCLUSIVE for v in verdicts) else EXIT_OK
        files = {}
        for name in sorted(set(self.files)):
            files[name] = hashlib.sha256((self.outdir / name).read_bytes()).hexdigest()
        manifest = {
            "library": "idmix",
            "version": __version__,
            "seed": self.cfg.seed,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config_source": self.cfg.source,
            "config": self.cfg.echo(),
            "config_text": self.cfg.text,
            "files": files,
            "failures": self.failures,
            "exit_code": code,
        }
        with open(self.outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return code


def run_config(cfg: ExperimentConfig, outdir=None, *, clean: bool = False) -> RunResult:
    if clean:
        target = Path(outdir or os.environ.get("OUTPUT_DIR") or cfg.output.get("directory", "runs/experiment"))
        if target.exists():
            shutil.rmtree(target)
    return Runner(cfg, outdir).run()


__all__ = ["Runner", "RunResult", "run_config", "EXIT_OK", "EXIT_VALIDATION", "EXIT_RUNTIME",
           "EXIT_INCONCLUSIVE", "CONSISTENT", "ERGODIC", "NON_ERGODIC"]
