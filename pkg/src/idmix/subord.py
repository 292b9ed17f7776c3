"""Extended subordination of a homogeneous Levy sheet by a subordinator sheet.

A cell ``A`` of the subordinated basis has, given ``Lambda_T(A) = v``, the
ID law with exponent ``v psi_X``. Its exponent is therefore
``Leb(A) kappa_T(psi_X(theta))`` with ``kappa_T(w) = log E exp(w T(1))``,
evaluated as ``psi_T(-i w)`` for ``Re w <= 0``. Sampling follows the same
two-stage recipe: draw ``v`` per cell, then the X increment for measure
``v``. No pathwise meta-time is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HypothesisError, NonIntegrableError
from .idlaw import (
    MERGE_DECIMALS,
    AtomicLevy,
    CharTriplet,
    add_measures,
    compound_poisson,
    cumulant,
    gaussian_jump_measure,
)
from .levybasis import GeneratingQuadruple, sample_law, stream
from .mmafield import FieldRealization, Kernel, MmaModel, QuadratureSpec


@dataclass(frozen=True)
class SheetSpec:
    """Homogeneous Levy sheet on R^k with unit-volume increment law ``base_triplet``.

    ``nonneg=True`` marks a subordinator sheet: one-dimensional, no
    Gaussian part, jumps on (0, inf) with ``int min(1, x) Q(dx) < inf`` and
    a nonnegative drift once the small jumps are uncompensated.
    """

    base_triplet: CharTriplet
    k: int = 1
    nonneg: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("sheet parameter dimension must be >= 1")
        if self.nonneg:
            _check_subordinator(self.base_triplet)

    @property
    def drift0(self) -> float:
        """Drift without small-jump compensation (subordinators only)."""
        t = self.base_triplet
        return float(t.gamma[0] - t.levy.sampled_compensator()[0])


def _check_subordinator(t: CharTriplet) -> None:
    if t.dim != 1:
        raise HypothesisError("a subordinator sheet must be real-valued")
    if np.any(t.sigma) or np.any(t.levy.gaussian_part()):
        raise HypothesisError("a subordinator sheet has no Gaussian part")
    pts, w = t.levy.discretize()
    if pts.size and np.any(pts[:, 0] <= 0):
        raise HypothesisError("a subordinator's Levy measure lives on (0, inf)")
    if pts.size and not np.isfinite(np.sum(w * np.minimum(1.0, pts[:, 0]))):
        raise HypothesisError("int min(1, x) Q(dx) must be finite for a subordinator")
    drift0 = t.gamma[0] - t.levy.sampled_compensator()[0]
    if drift0 < -1e-12:
        raise HypothesisError(f"subordinator drift must be nonnegative, got {drift0:.6g}")


def drift_subordinator(rate: float = 1.0) -> SheetSpec:
    """Deterministic meta-time: ``Lambda_T(A) = rate * Leb(A)``."""
    return SheetSpec(CharTriplet(np.array([float(rate)]), np.zeros((1, 1)), AtomicLevy.empty(1)), nonneg=True)


def poisson_subordinator(rate: float = 1.0, jump: float = 1.0) -> SheetSpec:
    return SheetSpec(compound_poisson([jump], [rate]), nonneg=True)


def laplace_exponent(t: SheetSpec, w):
    """``kappa_T(w) = log E exp(w T(1))`` for ``Re w <= 0``."""
    w = np.asarray(w, dtype=complex)
    if np.any(w.real > 1e-12):
        raise ValueError("the subordinator exponent is only used on Re w <= 0")
    return cumulant(t.base_triplet, -1j * w)


def subordinated_cell_cumulant(x: SheetSpec, t: SheetSpec, cell_measure: float, theta):
    """Exponent of ``M(A)`` for a cell of Lebesgue measure ``cell_measure``."""
    if not t.nonneg:
        raise HypothesisError("the time sheet must be a subordinator (nonneg=True)")
    psi = np.asarray(cumulant(x.base_triplet, theta), dtype=complex)
    return cell_measure * laplace_exponent(t, psi)


def subordinated_cell_mc(x: SheetSpec, t: SheetSpec, cell_measure: float, theta, M: int, seed: int):
    """Monte-Carlo ``E exp(i <theta, M(A)>)`` by the two-stage draw; returns (estimate, stderr)."""
    draws = sample_subordinated(x, t, np.full(M, float(cell_measure)), stream(seed, 0, 0), stream(seed, 0, 1))
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.exp(1j * draws @ th)
    se = math.sqrt(np.var(z.real, ddof=1) + np.var(z.imag, ddof=1)) / math.sqrt(M)
    return complex(z.mean()), se


def sample_subordinated(x: SheetSpec, t: SheetSpec, measures, rng_t, rng_x) -> np.ndarray:
    """Cells of Lebesgue measure ``measures``: draw ``v = Lambda_T``, then X with measure ``v``."""
    v = sample_law(t.base_triplet, measures, rng_t)[:, 0]
    v = np.clip(v, 0.0, None)  # rounding in the drift can leave -1e-17
    return sample_law(x.base_triplet, v, rng_x)


def subordinated_triplet(x: SheetSpec, t: SheetSpec, *, order: int = 20,
                         poisson_tail: float = 1e-15) -> CharTriplet:
    """Unit-cell triplet of the subordinated sheet (Bochner subordination).

    ``Sigma = b Sigma_X``, ``Q = b Q_X + sum_i rho_i law(X_{s_i})`` for a
    subordinator with drift ``b`` and atoms ``rho_i`` at ``s_i``; the law of
    ``X_s`` is Gaussian when X is Gaussian (tensor Gauss-Hermite nodes) and
    a truncated compound-Poisson series when X is finite atomic. The drift
    is assembled on the same nodes so the triplet reproduces
    ``kappa_T(psi_X)``.
    """
    if not t.nonneg:
        raise HypothesisError("the time sheet must be a subordinator (nonneg=True)")
    tt, xt = t.base_triplet, x.base_triplet
    b = t.drift0
    d = xt.dim
    if isinstance(tt.levy, AtomicLevy) and tt.levy.points.shape[0] == 0:
        return xt.scaled(b) if b > 0 else CharTriplet(np.zeros(d), np.zeros((d, d)), AtomicLevy.empty(d))
    if not isinstance(tt.levy, AtomicLevy):
        raise NotImplementedError("closed-form subordinated triplets need an atomic subordinator")
    gamma = b * xt.gamma
    sigma = b * xt.sigma
    levy = xt.levy.scaled(b) if b > 0 else AtomicLevy.empty(d)
    gauss_only = isinstance(xt.levy, AtomicLevy) and xt.levy.points.shape[0] == 0
    for s, rho in zip(tt.levy.points[:, 0], tt.levy.masses):
        if gauss_only:
            part = gaussian_jump_measure(rho, s * xt.gamma, s * xt.sigma, order=order)
        elif isinstance(xt.levy, AtomicLevy) and not np.any(xt.sigma):
            part = _cp_law_atoms(xt, s, rho, poisson_tail)
        else:
            raise NotImplementedError("X must be Gaussian or finite compound Poisson")
        pts, w = part.discretize()
        small = np.linalg.norm(pts, axis=1) <= 1.0
        gamma = gamma + (w * small) @ pts
        levy = add_measures(levy, part)
    return CharTriplet(gamma, sigma, levy)


def _cp_law_atoms(xt: CharTriplet, s: float, rho: float, tail: float) -> AtomicLevy:
    """``rho * law(X_s)`` off the origin for compound-Poisson X with drift."""
    Q = xt.levy
    lam = float(Q.masses.sum())
    drift = xt.gamma - Q.sampled_compensator()
    probs = Q.masses / lam
    # distribution of the jump sum after n jumps, convolved iteratively
    pts = np.zeros((1, xt.dim))
    w = np.ones(1)
    out_p, out_w = [], []
    n, pois = 0, math.exp(-lam * s)
    cum = pois
    while True:
        loc = pts + s * drift
        out_p.append(loc)
        out_w.append(rho * pois * w)
        if 1.0 - cum < tail or n > 200:
            break
        n += 1
        pois *= lam * s / n
        cum += pois
        pts = (pts[:, None, :] + Q.points[None, :, :]).reshape(-1, xt.dim)
        w = (w[:, None] * probs[None, :]).ravel()
        pts, w = _merge_points(pts, w)
    P = np.vstack(out_p)
    W = np.concatenate(out_w)
    keep = (np.linalg.norm(P, axis=1) > 1e-12) & (W > 0)
    return AtomicLevy(P[keep], W[keep]).merged()


def _merge_points(pts, w):
    key = np.round(pts, MERGE_DECIMALS)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    return uniq, np.bincount(inv.ravel(), weights=w, minlength=uniq.shape[0])


def subordinated_quadruple(x: SheetSpec, t: SheetSpec, weights=None, l: int = 1, **kw) -> GeneratingQuadruple:
    w = np.ones(1) if weights is None else weights
    return GeneratingQuadruple(subordinated_triplet(x, t, **kw), w, l)


def subordinated_model(kernel: Kernel, x: SheetSpec, t: SheetSpec, weights=None,
                       quadrature: Optional[QuadratureSpec] = None, name: str = "subordinated-mma") -> MmaModel:
    """MMA over the subordinated basis; integrability is checked on the derived quadruple."""
    q = subordinated_quadruple(x, t, weights, kernel.l)
    model = MmaModel(kernel, q, quadrature, name=name)
    rep = model.check_integrability()
    if not rep.integrable:
        raise NonIntegrableError(f"kernel is not integrable against the subordinated basis: {rep}")
    return model


def simulate_subordinated_mma(kernel: Kernel, x: SheetSpec, t: SheetSpec, t_points, h, M: int, seed: int,
                              window=None, weights=None, model: Optional[MmaModel] = None) -> FieldRealization:
    """Two-stage cell draws convolved with the kernel.

    The T draws of replicate ``r`` use the stream ``(seed, r, 0)`` and the X
    draws ``(seed, r, 1)``.
    """
    model = model or subordinated_model(kernel, x, t, weights)

    def draw(part, r):
        return sample_subordinated(x, t, part.measures, stream(seed, r, 0), stream(seed, r, 1))

    real = model.simulate(t_points, M, h, seed, window, draw=draw)
    real.meta["subordinated"] = True
    return real
