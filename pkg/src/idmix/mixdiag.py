"""Mixing diagnostics for stationary ID fields.

Analytic diagnostics work on any ``StationaryField`` (joint cumulants and
pair structures); empirical ones work on a ``FieldRealization``. Every
diagnostic along a lag sequence returns a ``CriterionTrace`` whose verdict
follows from the stored values and thresholds alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BranchTrackingError, DimensionError, HypothesisError, WindowError
from .idlaw import find_admissible_scale, scan_atoms_2pi
from .mmafield import FieldRealization, Functional, ScaledField, StationaryField, SumField

CONSISTENT = "consistent-with-mixing"
INCONSISTENT = "inconsistent"
INCONCLUSIVE = "inconclusive"

ANALYTIC_THRESHOLD = 1e-6
EMPIRICAL_SIGMAS = 4.0
DEFAULT_DELTAS = (1e-3, 1e-2, 1e-1, 1.0)
BRANCH_ZERO_TOL = 1e-12


# --------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class SequenceSpec:
    """Lags ``t_n`` in R^l with ``|t_n|_inf`` increasing to ``t_max``.

    kinds: ``ray`` (along ``direction``), ``diagonal``, ``spiral`` (golden
    angle in the first two axes), ``alternating`` (ray with flipping sign)
    and ``custom`` (explicit ``points``).
    """

    kind: str = "ray"
    n: int = 40
    l: int = 1
    t_max: float = 20.0
    t_min: Optional[float] = None
    direction: Optional[tuple] = None
    points: Optional[tuple] = None
    monotone_from: int = 0

    def radii(self) -> np.ndarray:
        lo = self.t_max / self.n if self.t_min is None else self.t_min
        return np.linspace(lo, self.t_max, self.n)

    def generate(self) -> np.ndarray:
        """``(n, l)`` array of lags."""
        if self.kind == "custom":
            if self.points is None:
                raise ValueError("custom sequence needs points")
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            if pts.shape[1] != self.l and pts.shape[0] == self.l and self.l > 1:
                pts = pts.T
            if pts.shape[1] != self.l:
                pts = pts.reshape(-1, self.l)
            self._check_monotone(pts)
            return pts
        r = self.radii()
        l = self.l
        if self.kind in ("ray", "alternating"):
            u = np.eye(l)[0] if self.direction is None else np.asarray(self.direction, dtype=float)
            if u.shape != (l,) or not np.any(u):
                raise DimensionError("direction must be a nonzero vector in R^l")
            u = u / np.max(np.abs(u))
            pts = r[:, None] * u[None, :]
            if self.kind == "alternating":
                pts *= np.where(np.arange(self.n) % 2 == 0, 1.0, -1.0)[:, None]
        elif self.kind == "diagonal":
            pts = r[:, None] * np.ones((1, l))
        elif self.kind == "spiral":
            if l == 1:
                pts = (r * np.where(np.arange(self.n) % 2 == 0, 1.0, -1.0))[:, None]
            else:
                ang = np.arange(self.n) * math.pi * (3.0 - math.sqrt(5.0))
                v = np.stack([np.cos(ang), np.sin(ang)], axis=1)
                v = v / np.max(np.abs(v), axis=1, keepdims=True)
                pts = np.zeros((self.n, l))
                pts[:, :2] = r[:, None] * v
        else:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        return pts

    def _check_monotone(self, pts):
        norms = np.max(np.abs(pts), axis=1)[self.monotone_from:]
        if norms.size > 1 and np.any(np.diff(norms) <= 0):
            raise ValueError("sup-norms of the sequence must increase strictly")


def _as_points(seq, l):
    if isinstance(seq, SequenceSpec):
        if seq.l != l:
            raise DimensionError(f"sequence lives in R^{seq.l}, field in R^{l}")
        return seq.generate()
    pts = np.asarray(seq, dtype=float)
    return pts.reshape(-1, l)


# --------------------------------------------------------------------------
# traces and verdicts


def decide(values, thresholds) -> str:
    """Verdict from a trace and per-point thresholds.

    Consistent when the last fifth of the trace lies below threshold;
    inconclusive when it does not but the trace is decreasing (last value
    below the first and a non-positive slope over the tail); inconsistent
    otherwise.
    """
    v = np.asarray(values, dtype=float)
    thr = np.broadcast_to(np.asarray(thresholds, dtype=float), v.shape)
    if v.size == 0 or np.any(np.isnan(thr)) or np.any(np.isnan(v)):
        return INCONCLUSIVE
    tail = max(1, math.ceil(v.size / 5))
    if np.all(v[-tail:] <= thr[-tail:]):
        return CONSISTENT
    if v.size >= 2 and v[-1] < v[0]:
        tv = v[-max(tail, 2):]
        slope = np.polyfit(np.arange(tv.size), tv, 1)[0] if tv.size >= 2 else 0.0
        if slope <= 0:
            return INCONCLUSIVE
    return INCONSISTENT


@dataclass
class CriterionTrace:
    name: str
    t: np.ndarray
    values: np.ndarray
    threshold: np.ndarray
    stderr: Optional[np.ndarray] = None
    errors: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        self.threshold = np.broadcast_to(np.asarray(self.threshold, dtype=float), self.values.shape).copy()
        if self.stderr is None:
            self.stderr = np.full(self.values.shape, np.nan)

    @property
    def verdict(self) -> str:
        return decide(self.values, self.threshold)

    def verdict_so_far(self) -> list:
        return [decide(self.values[: n + 1], self.threshold[: n + 1]) for n in range(self.values.size)]

    @property
    def initial(self) -> float:
        return float(self.values[0])

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def decay_fit(self) -> dict:
        """Least-squares fit ``log value ~ a - rate * |t|_inf`` over positive values."""
        norms = np.max(np.abs(self.t), axis=1)
        pos = self.values > 1e-300
        if pos.sum() < 2:
            return {"rate": float("nan"), "intercept": float("nan"), "points": int(pos.sum())}
        slope, icpt = np.polyfit(norms[pos], np.log(self.values[pos]), 1)
        return {"rate": float(-slope), "intercept": float(icpt), "points": int(pos.sum())}

    def to_csv(self, path) -> None:
        so_far = self.verdict_so_far()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n"] + [f"t{i + 1}" for i in range(self.t.shape[1])]
                       + ["value", "stderr", "threshold", "verdict_so_far"])
            for n in range(self.values.size):
                w.writerow([n] + [f"{x:.17g}" for x in self.t[n]]
                           + [f"{self.values[n]:.17g}", f"{self.stderr[n]:.17g}",
                              f"{self.threshold[n]:.17g}", so_far[n]])


# --------------------------------------------------------------------------
# distinguished logarithm


def distinguished_log(phi: Callable, *, n_init: int = 64, max_depth: int = 40) -> complex:
    """Continuous logarithm of ``r -> phi(r)`` at ``r = 1`` with ``log phi(0) = 0``.

    ``phi`` is evaluated on arrays of ``r`` in [0, 1]. Steps whose phase
    change exceeds pi/2 are bisected; a value within 1e-12 of zero raises
    ``BranchTrackingError``.
    """
    r = np.linspace(0.0, 1.0, n_init + 1)
    vals = np.asarray(phi(r), dtype=complex)
    if abs(vals[0] - 1.0) > 1e-9:
        raise BranchTrackingError("the homotopy must start at phi(0) = 1")
    phase = 0.0
    stack = [(r[i], r[i + 1], vals[i], vals[i + 1], 0) for i in range(n_init)][::-1]
    while stack:
        a, b, fa, fb, depth = stack.pop()
        if abs(fb) < BRANCH_ZERO_TOL:
            raise BranchTrackingError(f"characteristic function vanishes near r={b:.6g}")
        step = np.angle(fb / fa)
        if abs(step) > np.pi / 2:
            if depth >= max_depth:
                raise BranchTrackingError(f"phase not resolved on [{a:.6g}, {b:.6g}]")
            m = 0.5 * (a + b)
            fm = complex(np.asarray(phi(np.array([m])), dtype=complex)[0])
            if abs(fm) < BRANCH_ZERO_TOL:
                raise BranchTrackingError(f"characteristic function vanishes near r={m:.6g}")
            stack.append((m, b, fm, fb, depth + 1))
            stack.append((a, m, fa, fm, depth + 1))
            continue
        phase += step
    return complex(np.log(abs(vals[-1])), phase)


# --------------------------------------------------------------------------
# codifference


@dataclass(frozen=True)
class CodifferenceMatrix:
    """``values[j, k] = tau(X_0^(k), X_t^(j))``."""

    t: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    meta: dict = field(default_factory=dict)


def _codiff_functional(j, k):
    return Functional(lambda x, y: (np.exp(1j * x[:, k]) - 1.0) * np.conj(np.exp(1j * y[:, j]) - 1.0))


def codifference_analytic(model: StationaryField, t, j: int = 0, k: int = 0, *, return_error=False):
    """``Sigma(t)[k, j] + int (e^{i x_k} - 1) conj(e^{i y_j} - 1) Q_0t(dx, dy)``."""
    _check_index(model, j, k)
    jp = model.joint_pair(t)
    jump, err = jp.levy_pair_functional(_codiff_functional(j, k), return_error=True)
    val = complex(jp.gauss_cross[k, j] + jump)
    return (val, err + jp.gauss_error) if return_error else val


def codifference_matrix(model: StationaryField, t) -> CodifferenceMatrix:
    q = model.q
    vals = np.zeros((q, q), dtype=complex)
    errs = np.zeros((q, q))
    for j in range(q):
        for k in range(q):
            vals[j, k], errs[j, k] = codifference_analytic(model, t, j, k, return_error=True)
    return CodifferenceMatrix(np.atleast_1d(np.asarray(t, dtype=float)), vals, errs,
                              {"convention": "values[j, k] = tau(X_0^(k), X_t^(j))"})


def codifference_from_charfns(joint: Callable, marg0: Callable, margt: Callable) -> complex:
    """Codifference from characteristic functions via distinguished logs.

    ``joint(r)`` is ``E exp(i r (X1 - X2))``, ``marg0(r)`` is
    ``E exp(i r X1)`` and ``margt(r)`` is ``E exp(-i r X2)``.
    """
    return distinguished_log(joint) - distinguished_log(marg0) - distinguished_log(margt)


def codifference_oracle(model: StationaryField, t, j: int = 0, k: int = 0) -> complex:
    """Distinguished-log codifference from the model's characteristic functions."""
    _check_index(model, j, k)
    q = model.q
    ek, ej = np.eye(q)[k], np.eye(q)[j]

    def joint(r):
        return np.array([np.exp(model.joint_cumulant(ri * ek, -ri * ej, t)) for ri in np.atleast_1d(r)])

    def m0(r):
        return np.array([np.exp(model.marginal_cumulant(ri * ek)) for ri in np.atleast_1d(r)])

    def mt(r):
        return np.array([np.exp(model.marginal_cumulant(-ri * ej)) for ri in np.atleast_1d(r)])

    return codifference_from_charfns(joint, m0, mt)


def _check_index(model, j, k):
    if not (0 <= j < model.q and 0 <= k < model.q):
        raise DimensionError(f"component indices ({j}, {k}) out of range for q={model.q}")


# --------------------------------------------------------------------------
# empirical characteristic functions


@dataclass(frozen=True)
class EcfEstimate:
    value: complex
    stderr_re: float
    stderr_im: float
    usable: bool

    @property
    def stderr(self) -> float:
        return float(np.hypot(self.stderr_re, self.stderr_im))


def _mean_se(z):
    z = np.asarray(z, dtype=complex)
    M = z.size
    if M < 2:
        return complex(z.mean()), float("nan"), float("nan"), False
    return (complex(z.mean()), float(np.std(z.real, ddof=1) / math.sqrt(M)),
            float(np.std(z.imag, ddof=1) / math.sqrt(M)), True)


def ecf_estimator(real: FieldRealization, theta1, theta2, lag, origin=None) -> EcfEstimate:
    """Mean of ``exp(i<theta1, X_origin> + i<theta2, X_{origin+lag}>)`` over replicates."""
    q = real.q
    th1 = np.broadcast_to(np.asarray(theta1, dtype=float), (q,))
    th2 = np.broadcast_to(np.asarray(theta2, dtype=float), (q,))
    p0 = np.zeros(real.l) if origin is None else np.atleast_1d(np.asarray(origin, dtype=float))
    lag = np.atleast_1d(np.asarray(lag, dtype=float))
    x0 = real.at(p0)
    xt = real.at(p0 + lag)
    z = np.exp(1j * (x0 @ th1 + xt @ th2))
    if not np.any(th1) and not np.any(th2):
        return EcfEstimate(1.0 + 0j, 0.0, 0.0, real.replicates >= 2)
    v, sr, si, ok = _mean_se(z)
    return EcfEstimate(v, sr, si, ok)


def _gap_with_se(z, a, b):
    """``|mean z - mean a * mean b|`` and a delta-method standard error."""
    M = z.size
    za, ab, bb = z.mean(), a.mean(), b.mean()
    value = abs(za - ab * bb)
    if M < 2:
        return value, float("nan")
    infl = z - ab * b - bb * a
    se = math.sqrt(np.var(infl.real, ddof=1) + np.var(infl.imag, ddof=1)) / math.sqrt(M)
    return value, se


# --------------------------------------------------------------------------
# pair criterion


def require_no_2pi_atoms(model: StationaryField) -> None:
    """Refuse when the Levy measure of ``X_0`` has atoms on a ``2 pi Z`` line."""
    atoms = model.q0_atoms()
    if atoms is None:
        return
    scan = scan_atoms_2pi(atoms)
    if len(scan):
        raise HypothesisError(
            f"Levy measure of X_0 has {len(scan)} atom(s) with a coordinate in 2*pi*Z "
            f"(first: {scan.offending[0].tolist()}); use rescaled_criterion, which picks a "
            "diagonal scale moving them off these lines")


def pair_mixing_criterion(source, seq, j: int = 0, k: int = 0, *, model: Optional[StationaryField] = None,
                          origin=None, check_atoms: bool = True) -> CriterionTrace:
    """Trace of ``|E e^{i(X_t^(j) - X_0^(k))} - E e^{i X_0^(j)} E e^{-i X_0^(k)}|``.

    ``source`` is a field model (analytic, threshold 1e-6) or a realization
    (empirical, threshold 4 standard errors). For realizations the atom
    check runs only when ``model`` is given.
    """
    if isinstance(source, FieldRealization):
        return _pair_empirical(source, seq, j, k, model, origin, check_atoms)
    model = source
    _check_index(model, j, k)
    if check_atoms:
        require_no_2pi_atoms(model)
    pts = _as_points(seq, model.l)
    q = model.q
    ej, ek = np.eye(q)[j], np.eye(q)[k]
    prod = np.exp(model.marginal_cumulant(ej) + model.marginal_cumulant(-ek))
    vals = np.array([abs(np.exp(model.joint_cumulant(-ek, ej, t)) - prod) for t in pts])
    return CriterionTrace(f"pair_mixing[{j},{k}]", pts, vals, ANALYTIC_THRESHOLD,
                          meta={"mode": "analytic", "product": [prod.real, prod.imag]})


def _pair_empirical(real, seq, j, k, model, origin, check_atoms):
    if model is not None and check_atoms:
        require_no_2pi_atoms(model)
    if not (0 <= j < real.q and 0 <= k < real.q):
        raise DimensionError("component index out of range")
    pts = _as_points(seq, real.l)
    p0 = np.zeros(real.l) if origin is None else np.atleast_1d(np.asarray(origin, dtype=float))
    x0 = real.at(p0)
    a = np.exp(1j * x0[:, j])
    b = np.exp(-1j * x0[:, k])
    vals, ses = [], []
    for t in pts:
        xt = real.at(p0 + t)
        z = np.exp(1j * (xt[:, j] - x0[:, k]))
        v, se = _gap_with_se(z, a, b)
        vals.append(v)
        ses.append(se)
    ses = np.array(ses)
    return CriterionTrace(f"pair_mixing[{j},{k}]", pts, vals, EMPIRICAL_SIGMAS * ses, stderr=ses,
                          meta={"mode": "empirical", "replicates": real.replicates})


def multipoint_ecf_probe(real: FieldRealization, lam_points, mu_points, theta1, theta2, seq) -> CriterionTrace:
    """Empirical ``|E e^{i<th1, X_lam> + i<th2, X_{mu+t}>} - E e^{i<th1, X_lam>} E e^{i<th2, X_mu>}|``."""
    l, q = real.l, real.q
    lam = np.asarray(lam_points, dtype=float).reshape(-1, l)
    mu = np.asarray(mu_points, dtype=float).reshape(-1, l)
    th1 = np.asarray(theta1, dtype=float).reshape(-1)
    th2 = np.asarray(theta2, dtype=float).reshape(-1)
    if th1.size != lam.shape[0] * q or th2.size != mu.shape[0] * q:
        raise DimensionError("theta vectors must have (points x q) entries")

    def stacked(points):
        try:
            return np.concatenate([real.at(p) for p in points], axis=1)
        except WindowError as exc:
            raise WindowError(f"multipoint probe leaves the simulated grid: {exc}") from None

    xl = stacked(lam)
    a = np.exp(1j * (xl @ th1))
    b0 = np.exp(1j * (stacked(mu) @ th2))
    pts = _as_points(seq, l)
    vals, ses = [], []
    for t in pts:
        bt = np.exp(1j * (stacked(mu + t) @ th2))
        v, se = _gap_with_se(a * bt, a, b0)
        vals.append(v)
        ses.append(se)
    ses = np.array(ses)
    return CriterionTrace("multipoint_ecf", pts, vals, EMPIRICAL_SIGMAS * ses, stderr=ses,
                          meta={"mode": "empirical", "m": int(lam.shape[0]), "replicates": real.replicates})


# --------------------------------------------------------------------------
# Maruyama-type functionals


def _norms(x):
    return np.linalg.norm(x, axis=1)


def _gauss_norm(jp):
    return float(np.linalg.norm(jp.gauss_cross, 2))


def jump_mass_functional(delta: float) -> Functional:
    """Indicator of ``|x| |y| > delta``."""
    return Functional(lambda x, y: (_norms(x) * _norms(y) > delta).astype(float),
                      lambda x, y: _norms(x) * _norms(y) - delta)


def min_product_functional() -> Functional:
    return Functional(lambda x, y: np.minimum(1.0, _norms(x) * _norms(y)),
                      lambda x, y: _norms(x) * _norms(y) - 1.0)


def smallball_functional(bound: float = 1.0) -> Functional:
    def g(x, y):
        r2 = _norms(x) ** 2 + _norms(y) ** 2
        return np.where((r2 > 0) & (r2 <= bound), _norms(x) * _norms(y), 0.0)

    return Functional(g, lambda x, y: _norms(x) ** 2 + _norms(y) ** 2 - bound)


@dataclass
class MaruyamaReport:
    mm1: CriterionTrace
    mm2: dict

    @property
    def verdict(self) -> str:
        verdicts = [self.mm1.verdict] + [tr.verdict for tr in self.mm2.values()]
        return aggregate_verdicts(verdicts)


def maruyama_check(model: StationaryField, seq, deltas: Sequence[float] = DEFAULT_DELTAS) -> MaruyamaReport:
    """Traces of ``|Sigma(t_n)|`` and ``Q_0t_n(|x| |y| > delta)`` for each delta."""
    pts = _as_points(seq, model.l)
    mm1, mm2 = [], {d: [] for d in deltas}
    err1, err2 = [], {d: [] for d in deltas}
    for t in pts:
        jp = model.joint_pair(t)
        mm1.append(_gauss_norm(jp))
        err1.append(jp.gauss_error)
        for d in deltas:
            v, e = jp.levy_pair_functional(jump_mass_functional(d), return_error=True)
            mm2[d].append(float(np.real(v)))
            err2[d].append(e)
    tr1 = CriterionTrace("mm1", pts, mm1, ANALYTIC_THRESHOLD, errors=np.array(err1))
    tr2 = {d: CriterionTrace(f"mm2[delta={d:g}]", pts, mm2[d], ANALYTIC_THRESHOLD, errors=np.array(err2[d]),
                             meta={"delta": d}) for d in deltas}
    return MaruyamaReport(tr1, tr2)


def smallball_integral(model: StationaryField, t, bound: float = 1.0, *, return_error=False):
    """``int_{0 < |x|^2 + |y|^2 <= bound} |x| |y| Q_0t(dx, dy)``."""
    jp = model.joint_pair(t)
    v, e = jp.levy_pair_functional(smallball_functional(bound), return_error=True)
    v = float(np.real(v))
    return (v, e) if return_error else v


def smallball_trace(model: StationaryField, seq, bound: float = 1.0) -> CriterionTrace:
    pts = _as_points(seq, model.l)
    res = [smallball_integral(model, t, bound, return_error=True) for t in pts]
    return CriterionTrace("smallball", pts, [v for v, _ in res], ANALYTIC_THRESHOLD,
                          errors=np.array([e for _, e in res]), meta={"bound": bound})


def combined_criterion(model: StationaryField, seq) -> CriterionTrace:
    """Trace of ``|Sigma(t_n)| + int min(1, |x| |y|) Q_0t_n(dx, dy)``."""
    pts = _as_points(seq, model.l)
    vals, errs, gauss, jump = [], [], [], []
    for t in pts:
        jp = model.joint_pair(t)
        v, e = jp.levy_pair_functional(min_product_functional(), return_error=True)
        g = _gauss_norm(jp)
        gauss.append(g)
        jump.append(float(np.real(v)))
        vals.append(g + float(np.real(v)))
        errs.append(e + jp.gauss_error)
    return CriterionTrace("combined", pts, vals, ANALYTIC_THRESHOLD, errors=np.array(errs),
                          meta={"gauss_part": gauss, "jump_part": jump})


# --------------------------------------------------------------------------
# aggregation and variants


def aggregate_verdicts(verdicts) -> str:
    verdicts = list(verdicts)
    if verdicts and all(v == CONSISTENT for v in verdicts):
        return CONSISTENT
    if any(v == INCONSISTENT for v in verdicts):
        return INCONSISTENT
    return INCONCLUSIVE


def pairwise_mixing_aggregate(traces) -> str:
    """Conjunction of per-pair verdicts (``traces``: mapping or iterable)."""
    items = traces.values() if isinstance(traces, dict) else traces
    return aggregate_verdicts(tr.verdict if isinstance(tr, CriterionTrace) else tr for tr in items)


def law_convergence_check(model: StationaryField, seq, theta_grid) -> CriterionTrace:
    """Trace of ``max_theta |E e^{i<theta, X_t - X_0>} - |E e^{i<theta, X_0>}|^2|``."""
    q = model.q
    grid = np.asarray(theta_grid, dtype=float).reshape(-1, q)
    pts = _as_points(seq, model.l)
    th = grid if q > 1 else grid[:, 0]
    # exp of the summed exponents, so independent lags give an exact zero
    marg = np.exp(np.atleast_1d(model.marginal_cumulant(-th)) + np.atleast_1d(model.marginal_cumulant(th)))
    vals = []
    for t in pts:
        joint = np.exp(np.atleast_1d(model.joint_cumulant(-grid if q > 1 else -grid[:, 0],
                                                          grid if q > 1 else grid[:, 0], t)))
        vals.append(float(np.max(np.abs(joint - marg))))
    return CriterionTrace("law_convergence", pts, vals, ANALYTIC_THRESHOLD, meta={"thetas": grid.shape[0]})


def rescaled_criterion(model: StationaryField, seq, j: int = 0, k: int = 0, seed: int = 0) -> CriterionTrace:
    """Pair criterion for ``M_a X`` with ``a`` chosen to clear every ``2 pi Z`` line."""
    atoms = model.q0_atoms()
    a = np.ones(model.q)
    if atoms is not None and atoms.points.shape[0]:
        a = find_admissible_scale(atoms, seed)
    mapped = model if np.all(a == 1.0) else ScaledField(model, np.diag(a))
    trace = pair_mixing_criterion(mapped, seq, j, k)
    trace.name = f"rescaled_pair_mixing[{j},{k}]"
    trace.meta["scale"] = a.tolist()
    return trace


@dataclass
class NormFreeReport:
    verdict: str
    shared_verdict: Optional[str]
    per_direction: list


def norm_free_probe(model: StationaryField, seqs, j: int = 0, k: int = 0,
                    criterion: str = "pair") -> NormFreeReport:
    """Run one criterion along several sequences and compare their verdicts."""
    rows = []
    for seq in seqs:
        if criterion == "pair":
            tr = pair_mixing_criterion(model, seq, j, k)
        elif criterion == "combined":
            tr = combined_criterion(model, seq)
        else:
            raise ValueError(f"unknown criterion {criterion!r}")
        rows.append({"kind": getattr(seq, "kind", "custom"), "tail": tr.final, "verdict": tr.verdict})
    verdicts = {r["verdict"] for r in rows}
    shared = verdicts.pop() if len(verdicts) == 1 else None
    return NormFreeReport("direction-uniform" if shared else "direction-dependent", shared, rows)


def sum_of_independents_check(models, seq, *, oracle: Optional[StationaryField] = None) -> CriterionTrace:
    """Combined criterion of an independent sum against the sum of component traces.

    ``meta["max_gap"]`` holds the largest difference; with ``oracle`` (an
    independently built model of the same sum) ``meta["oracle_gap"]`` holds
    the difference to its trace.
    """
    models = list(models)
    summed = SumField(models)
    comps = [combined_criterion(m, seq) for m in models]
    tr = combined_criterion(summed, seq)
    total = np.sum([c.values for c in comps], axis=0)
    tr.name = "sum_of_independents"
    tr.meta["component_traces"] = [c.values.tolist() for c in comps]
    tr.meta["max_gap"] = float(np.max(np.abs(tr.values - total)))
    if oracle is not None:
        tr.meta["oracle_gap"] = float(np.max(np.abs(tr.values - combined_criterion(oracle, seq).values)))
    return tr
