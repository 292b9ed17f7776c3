"""Weak mixing and ergodicity: density-one sets, Cesaro averages, time averages."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._quadrature import gauss_rule, integrate_box, panel_edges
from .errors import HypothesisError, QuadratureError
from .mixdiag import CONSISTENT, INCONSISTENT, CriterionTrace, _as_points, codifference_analytic, combined_criterion
from .mmafield import FieldRealization, StationaryField

ERGODIC = "ergodic"
NON_ERGODIC = "non-ergodic"
INCONCLUSIVE = "inconclusive"


# --------------------------------------------------------------------------
# density-one sets


@dataclass(frozen=True)
class DensityOneSet:
    """A subset ``E`` of R^l given by its indicator.

    ``edges(T)`` optionally lists, per axis, coordinates where the indicator
    changes inside ``(-T, T]``; ``density(T)`` is an optional closed form
    of ``(2T)^-l |E cap (-T, T]^l|``.
    """

    indicator: Callable
    l: int = 1
    description: str = ""
    edges: Optional[Callable] = None
    density: Optional[Callable] = None

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.l)
        return np.asarray(self.indicator(pts), dtype=bool)

    def filter(self, points) -> np.ndarray:
        """Keep the lags that lie in the set."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.l)
        return pts[self.contains(pts)]


def full_space(l: int = 1) -> DensityOneSet:
    return DensityOneSet(lambda p: np.ones(p.shape[0], dtype=bool), l, "R^l",
                         density=lambda T: 1.0)


def half_space(l: int = 1) -> DensityOneSet:
    return DensityOneSet(lambda p: p[:, 0] >= 0, l, "{x_1 >= 0}",
                         edges=lambda T: [[0.0]] + [[]] * (l - 1), density=lambda T: 0.5)


def lattice_ball_complement(l: int = 1, radius: Optional[Callable] = None,
                            spacing: float = 2 * math.pi) -> DensityOneSet:
    """Complement of sup-norm balls of radius ``radius(k)`` around ``spacing * k``, ``k`` in Z^l.

    The default radius ``1 / (1 + |k|_inf)`` shrinks fast enough for the
    removed fraction to vanish, so the complement has density one; a
    constant radius leaves a removed fraction of ``(2 r / spacing)^l``.
    Radii must stay below ``spacing / 2`` so the balls are disjoint.
    """
    rad = radius or (lambda k: 1.0 / (1.0 + np.max(np.abs(k), axis=-1)))

    def centers_near(T):
        n = int(math.ceil(T / spacing)) + 1
        ax = np.arange(-n, n + 1)
        grids = np.meshgrid(*([ax] * l), indexing="ij")
        k = np.stack([g.ravel() for g in grids], axis=-1)
        return k, np.broadcast_to(np.asarray(rad(k), dtype=float), (k.shape[0],))

    def indicator(p):
        k = np.round(p / spacing)
        r = np.broadcast_to(np.asarray(rad(k), dtype=float), (p.shape[0],))
        return np.max(np.abs(p - spacing * k), axis=1) > r

    def edges(T):
        k, r = centers_near(T)
        out = []
        for i in range(l):
            c = spacing * k[:, i]
            out.append(np.unique(np.concatenate([c - r, c + r])))
        return out

    def density(T):
        k, r = centers_near(T)
        c = spacing * k
        overlap = np.clip(np.minimum(c + r[:, None], T) - np.maximum(c - r[:, None], -T), 0.0, None)
        removed = np.sum(np.prod(overlap, axis=1))
        return 1.0 - removed / (2 * T) ** l

    desc = "complement of lattice balls" + ("" if radius is None else " (custom radius)")
    return DensityOneSet(indicator, l, desc, edges, density)


@dataclass
class DensityReport:
    T: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    closed_form: Optional[np.ndarray]
    limit: float
    density_one: bool


def density_of_set(s: DensityOneSet, T_grid, *, tol: float = 1e-2, fail_tol: float = 1e-4) -> DensityReport:
    """``(2T)^-l int_{(-T,T]^l} 1_E`` on a grid of ``T`` with a limit estimate.

    The limit extrapolates ``a + b / T`` through the two largest ``T``; the
    set is classified density-one when the limit is within ``tol`` of 1.
    """
    Ts = np.sort(np.asarray(T_grid, dtype=float))
    vals, errs = [], []
    for T in Ts:
        lo, hi = -T * np.ones(s.l), T * np.ones(s.l)
        bps = s.edges(T) if s.edges is not None else None
        if bps is not None:
            # constant on every cell of the edge grid: the midpoint rule is exact
            res = integrate_box(lambda p: s.contains(p).astype(float), lo, hi, bps,
                                order=1, n_sub=1, max_level=2, max_nodes=8_000_000)
        else:
            res = integrate_box(lambda p: s.contains(p).astype(float), lo, hi, None,
                                n_sub=max(2, int(math.ceil(T))), max_level=4, max_nodes=4_000_000)
        vol = (2 * T) ** s.l
        if res.error / vol > fail_tol:
            raise QuadratureError(f"density of {s.description!r} at T={T:g} did not converge",
                                  error=res.error / vol)
        vals.append(float(res.value) / vol)
        errs.append(res.error / vol)
    vals = np.array(vals)
    closed = None if s.density is None else np.array([s.density(T) for T in Ts])
    ref = closed if closed is not None else vals
    if Ts.size >= 2:
        T1, T2 = Ts[-2], Ts[-1]
        limit = float((T2 * ref[-1] - T1 * ref[-2]) / (T2 - T1))
    else:
        limit = float(ref[-1])
    return DensityReport(Ts, vals, np.array(errs), closed, limit, abs(limit - 1.0) <= tol)


# --------------------------------------------------------------------------
# Cesaro averages


@dataclass(frozen=True)
class FourierTransform:
    """``t -> sum_a m_a exp(i <a, t>)`` for a finite atomic measure."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float).ravel())

    @property
    def l(self) -> int:
        return self.points.shape[1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float).reshape(-1, self.l)
        return np.exp(1j * t @ self.points.T) @ self.masses

    def mass_at_zero(self) -> float:
        return float(self.masses[np.all(self.points == 0, axis=1)].sum())


def _axis_average(freq: float, T: float, order: int) -> complex:
    """GL average of ``exp(i freq x)`` over ``(-T, T]``."""
    if freq == 0:
        return 1.0 + 0j
    n = max(2, int(math.ceil(2 * T * abs(freq) / math.pi)) + 2)
    x, w = gauss_rule(panel_edges(-T, T, (), n), order)
    return complex(np.exp(1j * freq * x) @ w) / (2 * T)


def cesaro_average(f, T: float, l: Optional[int] = None, *, return_error: bool = False, order: int = 8):
    """``(2T)^-l int_{(-T, T]^l} f``.

    ``FourierTransform`` inputs are averaged axis by axis (each atom
    factorises); the error estimate compares Gauss-Legendre orders 16 and 10.
    Generic callables use the adaptive tensor rule.
    """
    if isinstance(f, FourierTransform):
        vals = {}
        for p in (16, 10):
            tot = 0j
            for a, m in zip(f.points, f.masses):
                tot += m * np.prod([_axis_average(ai, T, p) for ai in a])
            vals[p] = tot
        value, err = vals[16], abs(vals[16] - vals[10])
    else:
        if l is None:
            raise ValueError("dimension l is required for a generic integrand")
        lo, hi = -T * np.ones(l), T * np.ones(l)
        res = integrate_box(lambda p: np.asarray(f(p), dtype=complex), lo, hi, None, order=order,
                            n_sub=max(2, int(math.ceil(T))), rtol=1e-10, atol=1e-13,
                            max_level=6, max_nodes=4_000_000)
        vol = (2 * T) ** l
        value, err = complex(res.value) / vol, res.error / vol
        if err > 1e-6:
            raise QuadratureError(f"Cesaro average over (-{T:g}, {T:g}]^{l} did not converge", error=err)
    return (value, err) if return_error else value


def lemma_rate_bound(ft: FourierTransform, T: float) -> float:
    """``sum_{a != 0} m_a prod_i min(1, 1 / (T |a_i|))``."""
    total = 0.0
    for a, m in zip(ft.points, ft.masses):
        if np.all(a == 0):
            continue
        with np.errstate(divide="ignore"):
            fac = np.where(a == 0, 1.0, np.minimum(1.0, 1.0 / (T * np.abs(a))))
        total += m * float(np.prod(fac))
    return total


# --------------------------------------------------------------------------
# weak mixing and ergodicity


def weak_mixing_check(model: StationaryField, D: DensityOneSet, seq) -> CriterionTrace:
    """Combined criterion along a sequence whose lags all lie in ``D``."""
    pts = _as_points(seq, model.l)
    inside = D.contains(pts)
    if not np.all(inside):
        bad = pts[~inside][0]
        raise HypothesisError(f"sequence point {bad.tolist()} lies outside the density-one set")
    tr = combined_criterion(model, pts)
    tr.name = "weak_mixing"
    tr.meta["density_one_set"] = D.description
    return tr


@dataclass
class ErgodicReport:
    time_averages: np.ndarray
    ensemble_mean: complex
    ensemble_stderr: float
    gap: float
    verdict: str
    flags: list = field(default_factory=list)

    @property
    def threshold(self) -> float:
        return 4.0 * self.ensemble_stderr


def ergodic_time_average(real: FieldRealization, g: Optional[Callable] = None, *,
                         decay_rate: Optional[float] = None, point=None) -> ErgodicReport:
    """Grid time averages of ``g(X_t)`` per replicate against the ensemble mean.

    The ensemble mean of ``g(X_point)`` over the independent replicates has
    standard error ``s``; the gap is the root-mean-square distance of the
    per-replicate time averages from it. Non-ergodic when the gap exceeds
    ``4 s``. With a declared decay rate, a window shorter than 100
    decorrelation lengths marks the result inconclusive.
    """
    g = g or (lambda x: np.exp(1j * x[..., 0]))
    vals = np.asarray(g(real.values), dtype=complex)  # (M, N)
    ta = vals.mean(axis=1)
    p = real.t_points[0] if point is None else point
    at_p = np.asarray(g(real.at(p)), dtype=complex)
    M = at_p.size
    ens = complex(at_p.mean())
    se = float(np.sqrt(np.var(at_p.real, ddof=1) + np.var(at_p.imag, ddof=1)) / math.sqrt(M)) if M > 1 else float("nan")
    gap = float(np.sqrt(np.mean(np.abs(ta - ens) ** 2)))
    flags = []
    extent = np.ptp(real.t_points, axis=0)
    if decay_rate is not None and np.isfinite(decay_rate) and np.min(extent) * decay_rate < 100:
        flags.append("window shorter than 100 decorrelation lengths")
    if M < 2:
        flags.append("fewer than two replicates")
    if gap == 0.0:
        verdict = ERGODIC
    elif flags:
        verdict = INCONCLUSIVE
    else:
        verdict = ERGODIC if gap <= 4.0 * se else NON_ERGODIC
    return ErgodicReport(ta, ens, se, gap, verdict, flags)


def fuse_verdicts(weak_mixing: str, ergodic: str) -> str:
    """Agreement of the two finite-sample diagnostics."""
    if weak_mixing == CONSISTENT and ergodic == ERGODIC:
        return "ergodic and weakly mixing"
    if weak_mixing == INCONSISTENT and ergodic == NON_ERGODIC:
        return "neither ergodic nor weakly mixing"
    return "inconclusive: increase T/M"


@dataclass
class NndReport:
    gram: np.ndarray
    min_eigenvalue: float
    hermitian_defect: float
    ok: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "re", "im"])
            for a in range(self.gram.shape[0]):
                for b in range(self.gram.shape[1]):
                    z = self.gram[a, b]
                    w.writerow([a, b, f"{z.real:.17g}", f"{z.imag:.17g}"])


def codiff_nnd_check(model: StationaryField, points, j: int = 0, k: int = 0, *, rtol: float = 1e-8) -> NndReport:
    """Gram matrix ``[tau^(jk)(t_a - t_b)]`` and its smallest Hermitian eigenvalue."""
    pts = np.asarray(points, dtype=float).reshape(-1, model.l)
    n = pts.shape[0]
    cache = {}
    G = np.zeros((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            lag = pts[a] - pts[b]
            key = tuple(np.round(lag, 12))
            if key not in cache:
                cache[key] = codifference_analytic(model, lag, j, k)
            G[a, b] = cache[key]
    H = 0.5 * (G + G.conj().T)
    lam = float(np.min(np.linalg.eigvalsh(H)))
    scale = float(np.linalg.norm(G, 2)) if n else 0.0
    return NndReport(G, lam, float(np.max(np.abs(G - G.conj().T))) if n else 0.0, lam >= -rtol * max(scale, 1e-300))
