"""Experiment configuration: TOML parsing, validation and model construction.

Grammar (TOML). Top level: optional ``preset = "<name>"`` whose config is
loaded first; every other table then overrides it key by key.

``[model]``        kind = "mma" | "constant" | "sum" | "subordinated"; l;
                   ``[model.kernel]`` (type = exponential | radial-exponential |
                   radial-gaussian | indicator | step | zero | constant, plus
                   rate / lo / hi / matrix / pieces),
                   ``[model.basis]`` (gamma, sigma, atoms, masses, dim),
                   weights (mixing probabilities), ``[[model.components]]``
                   (sum), ``[model.time]`` (subordinated: type = poisson | drift,
                   rate, jump).
``[[sequence]]``   kind = ray | diagonal | spiral | alternating | geometric |
                   custom; n; t_max; t_min; direction; points.
``[diagnostics]``  run = [names]; threshold; deltas; theta_min/theta_max/
                   theta_n; j; k; smallball_bound; scale_seed.
``[simulation]``   seed (required); replicates; h; window; tail_rtol;
                   ergodic_T; ergodic_replicates; ergodic_h; ergodic_spacing.
``[output]``       directory; formats (csv, npz).
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError, IdmixError
from ..idlaw import triplet_from_dict
from ..levybasis import GeneratingQuadruple
from ..mixdiag import SequenceSpec
from ..mmafield import (
    ConstantField,
    Kernel,
    MixtureKernel,
    MmaModel,
    StationaryField,
    StepKernel,
    SumField,
    constant_kernel,
    exponential_kernel,
    indicator_kernel,
    radial_exponential_kernel,
    radial_gaussian_kernel,
    zero_kernel,
)
from ..subord import SheetSpec, drift_subordinator, poisson_subordinator, subordinated_model

DIAGNOSTICS = (
    "integrability",
    "combined",
    "pair",
    "maruyama",
    "smallball",
    "law",
    "codifference",
    "rescaled",
    "norm_free",
    "weak_mixing",
    "mc_triplet",
    "empirical_pair",
    "ergodic",
)
SEQUENCE_KINDS = ("ray", "diagonal", "spiral", "alternating", "geometric", "custom")
KERNEL_TYPES = ("exponential", "radial-exponential", "radial-gaussian", "indicator", "step", "zero", "constant")
MODEL_KINDS = ("mma", "constant", "sum", "subordinated")
FORMATS = ("csv", "npz")


@dataclass
class ExperimentConfig:
    model: dict
    sequences: list
    diagnostics: dict
    simulation: dict
    output: dict
    raw: dict = field(default_factory=dict)
    text: str = ""
    source: Optional[str] = None

    @property
    def seed(self) -> int:
        return int(self.simulation["seed"])

    def echo(self) -> dict:
        return {"model": self.model, "sequence": self.sequences, "diagnostics": self.diagnostics,
                "simulation": self.simulation, "output": self.output}


# --------------------------------------------------------------------------
# locating fields in the source text


_HEADER = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"']+)\s*=")


def line_of(text: str, dotted: str) -> Optional[int]:
    """1-based line of ``dotted`` (``table.key``) in TOML ``text``, if found."""
    if not text:
        return None
    parts = dotted.split(".")
    table, key = ".".join(parts[:-1]), parts[-1]
    current = ""
    table_line = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            current = m.group(1).strip()
            if current == dotted and table_line is None:
                table_line = n
            continue
        k = _KEY.match(line)
        if k and current == table and k.group(1).strip("\"'") == key:
            return n
    return table_line


def _err(message, fieldname, text):
    return ConfigError(message, field=fieldname, line=line_of(text, fieldname))


# --------------------------------------------------------------------------
# loading


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_text(text: str, source: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed config: {exc}", line=line) from None
    return from_dict(raw, text=text, source=source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_text(text, str(path))


def from_dict(raw: dict, *, text: str = "", source: Optional[str] = None) -> ExperimentConfig:
    from .presets import PRESETS

    data = copy.deepcopy(raw)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise _err(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}", "preset", text)
        base = PRESETS[preset].config()
        # a user-supplied sequence list replaces the preset's list
        data = _deep_merge(base, data)
    unknown = set(data) - {"model", "sequence", "diagnostics", "simulation", "output"}
    if unknown:
        name = sorted(unknown)[0]
        raise _err(f"unknown section {name!r}", name, text)
    for sec in ("model", "diagnostics", "simulation"):
        if sec not in data:
            raise _err(f"missing section [{sec}]", sec, text)
    seqs = data.get("sequence", [{"kind": "ray"}])
    if isinstance(seqs, dict):
        seqs = [seqs]
    cfg = ExperimentConfig(
        model=data["model"],
        sequences=seqs,
        diagnostics=data["diagnostics"],
        simulation=data["simulation"],
        output=data.get("output", {}),
        raw=raw,
        text=text,
        source=source,
    )
    validate(cfg)
    return cfg


# --------------------------------------------------------------------------
# validation


def _positive(cfg, table, key, value, integer=False):
    fname = f"{table}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _err(f"{key} must be a number", fname, cfg.text)
    if integer and (not isinstance(value, int) or value < 1):
        raise _err(f"{key} must be a positive integer", fname, cfg.text)
    if not value > 0:
        raise _err(f"{key} must be positive", fname, cfg.text)


def validate(cfg: ExperimentConfig) -> None:
    """Raise ``ConfigError`` naming the first offending field."""
    text = cfg.text
    sim = cfg.simulation
    if "seed" not in sim:
        raise _err("simulation.seed is required", "simulation.seed", text)
    seed = sim["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise _err("seed must be a nonnegative integer", "simulation.seed", text)
    for key in ("replicates", "ergodic_replicates"):
        if key in sim:
            _positive(cfg, "simulation", key, sim[key], integer=True)
    for key in ("h", "tail_rtol", "ergodic_T", "ergodic_h", "ergodic_spacing"):
        if key in sim:
            vals = sim[key] if isinstance(sim[key], list) else [sim[key]]
            for v in vals:
                _positive(cfg, "simulation", key, v)

    diag = cfg.diagnostics
    names = diag.get("run", [])
    if not isinstance(names, list) or not names:
        raise _err("diagnostics.run must be a nonempty list", "diagnostics.run", text)
    for name in names:
        if name not in DIAGNOSTICS:
            raise _err(f"unknown diagnostic {name!r}; known: {', '.join(DIAGNOSTICS)}", "diagnostics.run", text)
    if "threshold" in diag:
        _positive(cfg, "diagnostics", "threshold", diag["threshold"])
    for d in diag.get("deltas", []):
        _positive(cfg, "diagnostics", "deltas", d)
    if "theta_n" in diag:
        _positive(cfg, "diagnostics", "theta_n", diag["theta_n"], integer=True)

    for i, seq in enumerate(cfg.sequences):
        kind = seq.get("kind", "ray")
        if kind not in SEQUENCE_KINDS:
            raise _err(f"unknown sequence kind {kind!r}", "sequence.kind", text)
        if "n" in seq:
            _positive(cfg, "sequence", "n", seq["n"], integer=True)
        if "t_max" in seq:
            _positive(cfg, "sequence", "t_max", seq["t_max"])
        if kind == "custom" and not seq.get("points"):
            raise _err("custom sequences need points", "sequence.points", text)

    out = cfg.output
    for f in out.get("formats", ["csv"]):
        if f not in FORMATS:
            raise _err(f"unknown output format {f!r}", "output.formats", text)

    _validate_model(cfg, cfg.model, "model")
    # the model and sequences must actually build
    try:
        model = build_model(cfg.model)
        for seq in cfg.sequences:
            build_sequence(seq, model.l).generate()
    except ConfigError:
        raise
    except (IdmixError, ValueError, TypeError, KeyError) as exc:
        raise _err(f"model or sequence does not build: {exc}", "model", text) from None


def _validate_model(cfg, m, prefix):
    text = cfg.text
    if not isinstance(m, dict):
        raise _err("model entries must be tables", prefix, text)
    kind = m.get("kind", "mma")
    if kind not in MODEL_KINDS:
        raise _err(f"unknown model kind {kind!r}", f"{prefix}.kind", text)
    if kind == "sum":
        comps = m.get("components")
        if not comps:
            raise _err("sum models need [[model.components]]", f"{prefix}.components", text)
        for c in comps:
            _validate_model(cfg, c, f"{prefix}.components")
        return
    if "basis" not in m:
        raise _err("missing basis table", f"{prefix}.basis", text)
    if kind in ("mma", "subordinated"):
        kern = m.get("kernel")
        kerns = kern if isinstance(kern, list) else [kern]
        for k in kerns:
            if not isinstance(k, dict) or k.get("type") not in KERNEL_TYPES:
                raise _err(f"kernel.type must be one of {', '.join(KERNEL_TYPES)}", f"{prefix}.kernel.type", text)
            if "rate" in k:
                _positive(cfg, f"{prefix}.kernel", "rate", k["rate"])
    if kind == "subordinated":
        t = m.get("time", {})
        if t.get("type") not in ("poisson", "drift"):
            raise _err("time.type must be poisson or drift", f"{prefix}.time.type", text)


# --------------------------------------------------------------------------
# construction


def build_kernel(k: dict, l: int) -> Kernel:
    typ = k["type"]
    matrix = k.get("matrix")
    if typ == "exponential":
        return exponential_kernel(float(k.get("rate", 1.0)), l, matrix)
    if typ == "radial-gaussian":
        return radial_gaussian_kernel(float(k.get("rate", 1.0)), l, matrix)
    if typ == "radial-exponential":
        return radial_exponential_kernel(float(k.get("rate", 1.0)), l, matrix)
    if typ == "indicator":
        return indicator_kernel(k.get("lo", [0.0] * l), k.get("hi", [1.0] * l), matrix)
    if typ == "step":
        return StepKernel([[(p["lo"], p["hi"], p.get("matrix", [[1.0]])) for p in k["pieces"]]])
    if typ == "zero":
        q = len(matrix) if matrix else 1
        d = len(matrix[0]) if matrix else 1
        return zero_kernel(q, d, l)
    if typ == "constant":
        return constant_kernel(matrix, l)
    raise ConfigError(f"unknown kernel type {typ!r}", field="model.kernel.type")


def build_model(m: dict) -> StationaryField:
    kind = m.get("kind", "mma")
    name = m.get("name", kind)
    if kind == "sum":
        return SumField([build_model(c) for c in m["components"]], name=name)
    l = int(m.get("l", 1))
    basis = triplet_from_dict(m["basis"], field_prefix="model.basis.")
    if kind == "constant":
        return ConstantField(basis, l, name=name)
    kern = m["kernel"]
    kernel = (MixtureKernel([build_kernel(k, l) for k in kern]) if isinstance(kern, list)
              else build_kernel(kern, l))
    weights = np.asarray(m.get("weights", [1.0]), dtype=float)
    if kind == "subordinated":
        t = m["time"]
        sub = (poisson_subordinator(float(t.get("rate", 1.0)), float(t.get("jump", 1.0)))
               if t["type"] == "poisson" else drift_subordinator(float(t.get("rate", 1.0))))
        return subordinated_model(kernel, SheetSpec(basis), sub, weights, name=name)
    return MmaModel(kernel, GeneratingQuadruple(basis, weights, l), name=name)


def build_sequence(seq: dict, l: int) -> SequenceSpec:
    kind = seq.get("kind", "ray")
    n = int(seq.get("n", 40))
    t_max = float(seq.get("t_max", 20.0))
    t_min = seq.get("t_min")
    if kind == "geometric":
        lo = float(t_min if t_min is not None else t_max / n)
        r = np.geomspace(lo, t_max, n)
        u = np.eye(l)[0] if seq.get("direction") is None else np.asarray(seq["direction"], dtype=float)
        u = u / np.max(np.abs(u))
        return SequenceSpec("custom", n, l, t_max, points=tuple(map(tuple, r[:, None] * u[None, :])))
    pts = seq.get("points")
    if pts is not None:
        pts = tuple(tuple(p) if isinstance(p, list) else (p,) for p in pts)
    return SequenceSpec(kind, n, l, t_max, None if t_min is None else float(t_min),
                        None if seq.get("direction") is None else tuple(seq["direction"]), pts)


def sequence_label(i: int, seq: dict) -> str:
    return seq.get("name") or f"{i}-{seq.get('kind', 'ray')}"
