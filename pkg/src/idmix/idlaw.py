"""Infinitely divisible laws on R^d as characteristic triplets.

A law is stored as ``CharTriplet(gamma, sigma, levy)`` with the truncation
function ``1{|x| <= 1}`` in the Levy-Khintchine exponent. Levy measures come
in three representations: a finite list of atoms (exact), a parametric
measure carried by a quadrature rule plus a jump sampler, and the pushforward
of another measure under a linear map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import special

from .errors import AdmissibleScaleError, DimensionError, QuadratureError

ORIGIN_TOL = 1e-12
TWO_PI_TOL = 1e-12
MERGE_DECIMALS = 12


def _as_matrix(a, d=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if d is not None and a.shape != (d, d):
        raise DimensionError(f"expected a {d}x{d} matrix, got shape {a.shape}")
    return a


# --------------------------------------------------------------------------
# Levy measures


class LevyMeasure:
    """Common interface: every measure can be discretized into weighted points."""

    dim: int
    atomless: bool = False

    def discretize(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def integrate(self, g):
        """Return ``sum_i w_i g(x_i)`` over the discretization of the measure."""
        pts, w = self.discretize()
        if pts.shape[0] == 0:
            probe = np.asarray(g(np.zeros((0, self.dim))))
            return np.zeros(probe.shape[1:], dtype=probe.dtype)
        return np.tensordot(w, np.asarray(g(pts)), axes=(0, 0))

    @property
    def is_zero(self) -> bool:
        return self.discretize()[0].shape[0] == 0

    def scaled(self, c: float) -> "LevyMeasure":
        raise NotImplementedError

    def gaussian_part(self) -> np.ndarray:
        """Covariance of a Gaussian stand-in for removed small jumps."""
        return np.zeros((self.dim, self.dim))

    def truncation_error(self, theta_norm: float) -> float:
        return 0.0

    # sampling ---------------------------------------------------------
    def sampled_compensator(self) -> np.ndarray:
        """``int x 1{|x|<=1}`` over the part of the measure that gets sampled."""
        pts, w = self.discretize()
        if pts.shape[0] == 0:
            return np.zeros(self.dim)
        small = np.linalg.norm(pts, axis=1) <= 1.0
        return (w * small) @ pts

    def sample_sums(self, rng: np.random.Generator, measures: np.ndarray) -> np.ndarray:
        """Sum of jumps of a compound Poisson draw per cell, shape ``(K, d)``."""
        raise NotImplementedError


class AtomicLevy(LevyMeasure):
    """Finite atomic Levy measure ``sum_j m_j delta_{x_j}``.

    ``approximate`` marks quadrature-built atom lists that stand in for a
    non-atomic measure; ``discretization_error`` records the budget.
    """

    def __init__(self, points, masses, *, approximate=False, discretization_error=0.0):
        masses = np.asarray(masses, dtype=float).ravel()
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            # scalar atoms for d = 1, or one vector atom
            points = points[:, None] if points.size == masses.size else points[None, :]
        if points.shape[0] != masses.size:
            raise DimensionError("one mass per atom required")
        if np.any(~np.isfinite(masses)) or np.any(masses <= 0):
            raise ValueError("atom masses must be positive and finite")
        if points.size and np.any(np.linalg.norm(points, axis=1) <= ORIGIN_TOL):
            raise ValueError("Levy measures carry no mass at the origin")
        self.points = points
        self.masses = masses
        self.dim = points.shape[1]
        self.approximate = approximate
        self.discretization_error = discretization_error
        self.points.setflags(write=False)
        self.masses.setflags(write=False)

    @classmethod
    def empty(cls, d: int) -> "AtomicLevy":
        return cls(np.zeros((0, d)), np.zeros(0))

    def discretize(self):
        return self.points, self.masses

    def scaled(self, c):
        if c < 0:
            raise ValueError("measure scale must be nonnegative")
        if c == 0:
            return AtomicLevy.empty(self.dim)
        return AtomicLevy(self.points, c * self.masses, approximate=self.approximate,
                          discretization_error=c * self.discretization_error)

    def merged(self) -> "AtomicLevy":
        """Combine atoms whose coordinates agree to 12 decimals."""
        if self.points.shape[0] < 2:
            return self
        keys = np.round(self.points, MERGE_DECIMALS) + 0.0
        uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        masses = np.bincount(inv.ravel(), weights=self.masses, minlength=uniq.shape[0])
        return AtomicLevy(self.points[first], masses, approximate=self.approximate,
                          discretization_error=self.discretization_error)

    def sample_sums(self, rng, measures):
        measures = np.asarray(measures, dtype=float)
        if self.points.shape[0] == 0:
            return np.zeros((measures.size, self.dim))
        counts = rng.poisson(np.outer(measures, self.masses))
        return counts @ self.points

    def __repr__(self):
        return f"AtomicLevy(points={self.points.tolist()}, masses={self.masses.tolist()})"


class ParametricLevy(LevyMeasure):
    """Levy measure known through a density, a quadrature rule and a sampler.

    The quadrature ``(nodes, weights)`` and the sampler both describe the
    part of the measure on ``|x| > eps``; ``rate`` is its total mass.
    Jumps below ``eps`` are either dropped or replaced by a centred Gaussian
    with covariance ``small_cov`` (``small_jumps="gaussian"``).
    """

    def __init__(self, nodes, weights, *, rate, sampler=None, eps=0.0, small_cov=None,
                 small_jumps="drop", density=None, quad_error=0.0, description="",
                 atomless=True):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.asarray(weights, dtype=float).ravel()
        if nodes.shape[0] != weights.size:
            raise DimensionError("one weight per node required")
        keep = (np.linalg.norm(nodes, axis=1) > ORIGIN_TOL) & (weights > 0)
        self.nodes = nodes[keep]
        self.weights = weights[keep]
        self.dim = nodes.shape[1]
        self.rate = float(rate)
        if not np.isfinite(self.rate):
            raise ValueError("the sampled part must have finite mass; raise eps")
        self.sampler = sampler
        self.eps = float(eps)
        self.small_cov = np.zeros((self.dim, self.dim)) if small_cov is None else _as_matrix(small_cov, self.dim)
        if small_jumps not in ("drop", "gaussian"):
            raise ValueError("small_jumps must be 'drop' or 'gaussian'")
        self.small_jumps = small_jumps
        self.density = density
        self.quad_error = float(quad_error)
        self.description = description
        self.atomless = atomless

    def discretize(self):
        return self.nodes, self.weights

    def scaled(self, c):
        if c < 0:
            raise ValueError("measure scale must be nonnegative")
        if c == 0:
            return AtomicLevy.empty(self.dim)
        sampler = self.sampler
        return ParametricLevy(self.nodes, c * self.weights, rate=c * self.rate, sampler=sampler,
                              eps=self.eps, small_cov=c * self.small_cov,
                              small_jumps=self.small_jumps, density=self.density,
                              quad_error=c * self.quad_error, description=self.description,
                              atomless=self.atomless)

    def gaussian_part(self):
        return self.small_cov if self.small_jumps == "gaussian" else np.zeros((self.dim, self.dim))

    def truncation_error(self, theta_norm):
        # |e^{iu} - 1 - iu| <= u^2/2, and <= |u|^3/6 after removing the quadratic term
        trace = float(np.trace(self.small_cov))
        if self.small_jumps == "drop":
            trunc = 0.5 * theta_norm ** 2 * trace
        else:
            trunc = theta_norm ** 3 * self.eps * trace / 6.0
        return trunc + self.quad_error * (1.0 + theta_norm ** 2)

    def sample_sums(self, rng, measures):
        measures = np.asarray(measures, dtype=float)
        out = np.zeros((measures.size, self.dim))
        if self.rate == 0:
            return out
        if self.sampler is None:
            from .errors import SamplerMissingError
            raise SamplerMissingError("parametric Levy measure has no sampler")
        counts = rng.poisson(measures * self.rate)
        total = int(counts.sum())
        if total:
            jumps = np.asarray(self.sampler(rng, total), dtype=float).reshape(total, self.dim)
            owner = np.repeat(np.arange(measures.size), counts)
            np.add.at(out, owner, jumps)
        return out


class PushforwardLevy(LevyMeasure):
    """Image ``Q o M^{-1}`` of ``base`` under ``x -> M x``; images at 0 are dropped."""

    def __init__(self, base: LevyMeasure, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[1] != base.dim:
            raise DimensionError("pushforward matrix must have base.dim columns")
        self.base = base
        self.matrix = matrix
        self.dim = matrix.shape[0]
        self.atomless = base.atomless and np.linalg.matrix_rank(matrix) == base.dim

    def discretize(self):
        pts, w = self.base.discretize()
        img = pts @ self.matrix.T
        keep = np.linalg.norm(img, axis=1) > ORIGIN_TOL
        return img[keep], w[keep]

    def scaled(self, c):
        return PushforwardLevy(self.base.scaled(c), self.matrix)

    def gaussian_part(self):
        return self.matrix @ self.base.gaussian_part() @ self.matrix.T

    def truncation_error(self, theta_norm):
        return self.base.truncation_error(theta_norm * np.linalg.norm(self.matrix, 2))

    def sample_sums(self, rng, measures):
        return self.base.sample_sums(rng, measures) @ self.matrix.T

    def sampled_compensator(self):
        if isinstance(self.base, (AtomicLevy, ParametricLevy)):
            return LevyMeasure.sampled_compensator(self)
        pts, w = self.discretize()
        small = np.linalg.norm(pts, axis=1) <= 1.0
        return (w * small) @ pts if pts.size else np.zeros(self.dim)


class SumLevy(LevyMeasure):
    """Sum of Levy measures on the same space."""

    def __init__(self, parts):
        parts = [p for p in parts if not p.is_zero or p.gaussian_part().any()]
        if not parts:
            raise ValueError("SumLevy needs at least one nonzero part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DimensionError("summed Levy measures must share a dimension")
        self.parts = tuple(parts)
        self.dim = dims.pop()
        self.atomless = all(p.atomless for p in parts)

    def discretize(self):
        pieces = [p.discretize() for p in self.parts]
        return (np.concatenate([a for a, _ in pieces], axis=0),
                np.concatenate([b for _, b in pieces]))

    def scaled(self, c):
        if c == 0:
            return AtomicLevy.empty(self.dim)
        return SumLevy([p.scaled(c) for p in self.parts])

    def gaussian_part(self):
        return sum(p.gaussian_part() for p in self.parts)

    def truncation_error(self, theta_norm):
        return sum(p.truncation_error(theta_norm) for p in self.parts)

    def sampled_compensator(self):
        return sum(p.sampled_compensator() for p in self.parts)

    def sample_sums(self, rng, measures):
        return sum(p.sample_sums(rng, measures) for p in self.parts)


def add_measures(a: LevyMeasure, b: LevyMeasure) -> LevyMeasure:
    if a.dim != b.dim:
        raise DimensionError(f"Levy measures live on R^{a.dim} and R^{b.dim}")
    if a.is_zero and not a.gaussian_part().any():
        return b
    if b.is_zero and not b.gaussian_part().any():
        return a
    if isinstance(a, AtomicLevy) and isinstance(b, AtomicLevy):
        return AtomicLevy(np.vstack([a.points, b.points]), np.concatenate([a.masses, b.masses]),
                          approximate=a.approximate or b.approximate,
                          discretization_error=a.discretization_error + b.discretization_error).merged()
    return SumLevy([a, b])


# --------------------------------------------------------------------------
# triplets


@dataclass(frozen=True)
class CharTriplet:
    """Characteristic triplet ``(gamma, sigma, levy)`` of an ID law on R^d."""

    gamma: np.ndarray
    sigma: np.ndarray
    levy: LevyMeasure = field(default=None)

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float)).ravel()
        d = gamma.size
        sigma = _as_matrix(self.sigma, d)
        if not np.allclose(sigma, sigma.T, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma must be symmetric")
        norm = np.linalg.norm(sigma, 2)
        if d and np.linalg.eigvalsh(sigma).min() < -1e-10 * max(norm, 1e-300):
            raise ValueError("sigma must be positive semidefinite")
        levy = AtomicLevy.empty(d) if self.levy is None else self.levy
        if levy.dim != d:
            raise DimensionError(f"Levy measure on R^{levy.dim} for a triplet on R^{d}")
        small = levy.integrate(lambda x: np.minimum(1.0, np.sum(x * x, axis=1)))
        if not np.isfinite(small):
            raise ValueError("Levy measure must integrate min(1, |x|^2)")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "levy", levy)

    @property
    def dim(self) -> int:
        return self.gamma.size

    def scaled(self, c: float) -> "CharTriplet":
        """Triplet of the law with exponent ``c * psi``."""
        if c < 0:
            raise ValueError("scale must be nonnegative")
        return CharTriplet(c * self.gamma, c * self.sigma, self.levy.scaled(c))


def zero_triplet(d: int = 1) -> CharTriplet:
    return CharTriplet(np.zeros(d), np.zeros((d, d)), AtomicLevy.empty(d))


def gaussian_triplet(cov, drift=None) -> CharTriplet:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    drift = np.zeros(d) if drift is None else drift
    return CharTriplet(drift, cov, AtomicLevy.empty(d))


def compound_poisson(points, masses, drift=None) -> CharTriplet:
    """Uncompensated compound Poisson law plus an optional extra drift.

    The triplet drift absorbs ``int_{|x|<=1} x Q(dx)`` so that the law is the
    plain sum of Poisson-many jumps.
    """
    levy = AtomicLevy(points, masses)
    d = levy.dim
    gamma = levy.sampled_compensator()
    if drift is not None:
        gamma = gamma + np.asarray(drift, dtype=float)
    return CharTriplet(gamma, np.zeros((d, d)), levy)


def _theta_array(t: CharTriplet, theta):
    # d = 1 accepts a scalar, a length-1 vector, or a 1-d array of scalars
    theta = np.asarray(theta)
    if theta.dtype.kind not in "fc":
        theta = theta.astype(float)
    if theta.ndim == 0:
        single, theta = True, theta.reshape(1, 1)
    elif theta.ndim == 1:
        if t.dim == 1 and theta.size != 1:
            single, theta = False, theta[:, None]
        else:
            single, theta = True, theta[None, :]
    else:
        single = False
    if theta.shape[-1] != t.dim:
        raise DimensionError(f"theta has length {theta.shape[-1]}, triplet dimension is {t.dim}")
    return theta, single


def cumulant(t: CharTriplet, theta, *, return_error: bool = False, tol: Optional[float] = None):
    """Levy-Khintchine exponent ``psi(theta)``.

    ``theta`` may be a single vector or an ``(n, d)`` stack, real or complex
    (complex arguments are used for Laplace-type exponents of subordinators).
    For atomic measures the jump integral is an exact finite sum; for
    parametric measures the truncation and quadrature budget is returned when
    ``return_error`` is set, and exceeding ``tol`` raises ``QuadratureError``.
    """
    th, single = _theta_array(t, theta)
    sig = t.sigma + t.levy.gaussian_part()
    val = 1j * (th @ t.gamma) - 0.5 * np.einsum("ni,ij,nj->n", th, sig, th)
    pts, w = t.levy.discretize()
    if pts.shape[0]:
        ph = th @ pts.T
        small = np.linalg.norm(pts, axis=1) <= 1.0
        val = val + (np.exp(1j * ph) - 1.0 - 1j * ph * small) @ w
    err = np.array([t.levy.truncation_error(float(np.linalg.norm(v))) for v in th])
    if tol is not None and np.any(err > tol):
        raise QuadratureError("cumulant jump integral exceeds tolerance", error=float(err.max()))
    if single:
        val, err = complex(val[0]), float(err[0])
    return (val, err) if return_error else val


def charfn(t: CharTriplet, theta, **kw):
    """Characteristic function ``exp(psi(theta))``."""
    if kw.get("return_error"):
        val, err = cumulant(t, theta, **kw)
        return np.exp(val), err
    return np.exp(cumulant(t, theta, **kw))


def convolve(a: CharTriplet, b: CharTriplet) -> CharTriplet:
    """Triplet of the sum of independent ``a`` and ``b`` variables."""
    if a.dim != b.dim:
        raise DimensionError(f"cannot convolve laws on R^{a.dim} and R^{b.dim}")
    return CharTriplet(a.gamma + b.gamma, a.sigma + b.sigma, add_measures(a.levy, b.levy))


def product_triplet(*parts: CharTriplet) -> CharTriplet:
    """Law of ``(Y_1, ..., Y_r)`` with independent blocks ``Y_i ~ parts[i]``.

    Each block's Levy measure is embedded on its own coordinate subspace, so
    the truncation indicator is unchanged and drifts concatenate.
    """
    dims = [p.dim for p in parts]
    d = sum(dims)
    gamma = np.concatenate([p.gamma for p in parts])
    sigma = np.zeros((d, d))
    levy: LevyMeasure = AtomicLevy.empty(d)
    start = 0
    for p, k in zip(parts, dims):
        sigma[start:start + k, start:start + k] = p.sigma
        embed = np.zeros((d, k))
        embed[start:start + k] = np.eye(k)
        if isinstance(p.levy, AtomicLevy):
            if p.levy.points.shape[0]:
                part = AtomicLevy(p.levy.points @ embed.T, p.levy.masses)
                levy = add_measures(levy, part)
        elif not p.levy.is_zero:
            levy = add_measures(levy, PushforwardLevy(p.levy, embed))
        start += k
    return CharTriplet(gamma, sigma, levy)


def linear_map(t: CharTriplet, M) -> CharTriplet:
    """Triplet of ``M X`` for ``X ~ t``.

    The drift is recompensated for the new truncation region,
    ``gamma' = M gamma + int M x (1{|Mx|<=1} - 1{|x|<=1}) Q(dx)``.
    Atoms whose image lies within 1e-12 of the origin are dropped with a
    warning.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != t.dim:
        raise DimensionError(f"map has {M.shape[1]} columns, law dimension is {t.dim}")
    pts, w = t.levy.discretize()
    gamma = M @ t.gamma
    if pts.shape[0]:
        img = pts @ M.T
        inside_new = np.linalg.norm(img, axis=1) <= 1.0
        inside_old = np.linalg.norm(pts, axis=1) <= 1.0
        gamma = gamma + (w * (inside_new.astype(float) - inside_old)) @ img
    sigma = M @ t.sigma @ M.T
    sigma = 0.5 * (sigma + sigma.T)
    levy = t.levy
    if isinstance(levy, AtomicLevy):
        if levy.points.shape[0]:
            img = levy.points @ M.T
            keep = np.linalg.norm(img, axis=1) > ORIGIN_TOL
            if not keep.all():
                warnings.warn(f"{int((~keep).sum())} atom(s) mapped to the origin were dropped",
                              stacklevel=2)
            new = AtomicLevy(img[keep], levy.masses[keep], approximate=levy.approximate,
                             discretization_error=levy.discretization_error).merged()
        else:
            new = AtomicLevy.empty(M.shape[0])
    else:
        new = PushforwardLevy(levy, M)
    return CharTriplet(gamma, sigma, new)


# --------------------------------------------------------------------------
# atoms on 2 pi Z


class AtomScan(NamedTuple):
    offending: np.ndarray
    applicable: bool

    def __len__(self):
        return self.offending.shape[0]


def _in_two_pi_z(y, tol=TWO_PI_TOL):
    k = np.round(y / (2 * np.pi))
    return np.abs(y - 2 * np.pi * k) <= tol


def scan_atoms_2pi(Q: LevyMeasure) -> AtomScan:
    """Atoms of ``Q`` with at least one coordinate in ``2 pi Z``.

    ``0`` belongs to ``2 pi Z``, so an atom with a zero coordinate is
    reported. Atomless measures return an empty, not-applicable scan;
    pushforwards and sums are scanned through their atomic parts.
    """
    atoms = atomic_part(Q)
    if atoms is None:
        return AtomScan(np.zeros((0, Q.dim)), applicable=False)
    if atoms.points.shape[0] == 0:
        return AtomScan(np.zeros((0, Q.dim)), applicable=True)
    bad = np.any(_in_two_pi_z(atoms.points), axis=1)
    return AtomScan(atoms.points[bad], applicable=True)


def atomic_part(Q: LevyMeasure) -> Optional[AtomicLevy]:
    """Exact atoms of ``Q``; ``None`` if ``Q`` is atomless by declaration."""
    if isinstance(Q, AtomicLevy):
        return Q
    if isinstance(Q, PushforwardLevy):
        base = atomic_part(Q.base)
        if base is None:
            return None
        if base.points.shape[0] == 0:
            return AtomicLevy.empty(Q.dim)
        img = base.points @ Q.matrix.T
        keep = np.linalg.norm(img, axis=1) > ORIGIN_TOL
        return AtomicLevy(img[keep], base.masses[keep]).merged()
    if isinstance(Q, SumLevy):
        parts = [atomic_part(p) for p in Q.parts]
        parts = [p for p in parts if p is not None]
        if not parts:
            return None
        out = AtomicLevy.empty(Q.dim)
        for p in parts:
            out = add_measures(out, p)
        return out
    if getattr(Q, "atomless", False):
        return None
    raise TypeError(f"cannot determine atoms of {type(Q).__name__}")


def find_admissible_scale(Q: LevyMeasure, seed: int = 0, *, max_proposals: int = 1000,
                          margin: float = 1e-6) -> np.ndarray:
    """Per-coordinate scale ``a`` with no atom of ``diag(a) Q`` on a 2 pi Z line.

    The identity scale is tried first, then random proposals drawn from a
    generator seeded with ``seed``. Accepted proposals keep every scaled
    coordinate at least ``margin`` away from ``2 pi Z``.
    """
    d = Q.dim
    atoms = atomic_part(Q)
    if atoms is None or atoms.points.shape[0] == 0:
        return np.ones(d)
    pts = atoms.points
    if np.any(np.abs(pts) <= TWO_PI_TOL):
        raise AdmissibleScaleError(
            "an atom has a zero coordinate; no diagonal rescaling moves it off 2 pi Z")

    def ok(a, tol):
        return not np.any(_in_two_pi_z(pts * a, tol))

    a = np.ones(d)
    if ok(a, margin):
        return a
    rng = np.random.default_rng(seed)
    for _ in range(max_proposals):
        a = rng.uniform(0.5, 1.5, size=d)
        if ok(a, margin):
            return a
    raise AdmissibleScaleError(f"no admissible scale after {max_proposals} proposals")


# --------------------------------------------------------------------------
# parametric constructors


def gaussian_jump_measure(rate: float, mean, cov, order: int = 10) -> ParametricLevy:
    """``rate * N(mean, cov)`` as a finite Levy measure (Gauss-Hermite rule)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    cov = _as_matrix(cov, d)
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z, wz = np.polynomial.hermite_e.hermegauss(order)
    wz = wz / np.sqrt(2 * np.pi)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    wgrids = np.meshgrid(*([wz] * d), indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=-1)
    ws = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    nodes = mean + zs @ root.T

    def sampler(rng, n):
        return mean + rng.standard_normal((n, d)) @ root.T

    def density(x):
        from scipy.stats import multivariate_normal
        return rate * multivariate_normal(mean, cov, allow_singular=True).pdf(x)

    return ParametricLevy(nodes, rate * ws, rate=rate, sampler=sampler, density=density,
                          description=f"{rate:g} * N(mean, cov)")


def gamma_levy_measure(a: float, b: float, eps: float = 1e-3, *, panels: int = 48,
                       order: int = 8, small_jumps: str = "drop") -> ParametricLevy:
    """Levy measure ``a x^{-1} e^{-b x} dx`` on (0, inf) of the gamma subordinator.

    Jumps below ``eps`` are truncated. The rule is composite Gauss-Legendre in
    ``log x``; ``quad_error`` compares it against a rule with half the panels.
    """
    x_max = (40.0 + np.log1p(a)) / b
    if eps >= x_max:
        raise ValueError("eps too large for this gamma measure")

    from ._quadrature import gauss_rule, panel_edges

    def rule(n):
        # |x| = 1 is a panel edge: the compensator is discontinuous there
        edges = panel_edges(np.log(eps), np.log(x_max), [0.0], max(1, n // 2))
        u, wu = gauss_rule(edges, order)
        x = np.exp(u)
        return x, a * np.exp(-b * x) * wu

    x, w = rule(panels)
    xc, wc = rule(panels // 2)
    test = lambda v: np.minimum(1.0, v * v)  # noqa: E731
    quad_error = abs(w @ test(x) - wc @ test(xc))
    rate = a * special.exp1(b * eps)
    small_var = a * (1.0 - np.exp(-b * eps) * (1.0 + b * eps)) / b ** 2
    lo_mass = np.log(1.0 / (b * eps)) if b * eps < 1 else 0.0
    hi_mass = np.exp(-max(1.0, b * eps)) if b * eps < 1 else special.exp1(b * eps)

    def sampler(rng, n):
        out = np.empty(0)
        while out.size < n:
            m = 2 * (n - out.size) + 16
            pick_lo = rng.random(m) < lo_mass / (lo_mass + hi_mass)
            start = max(1.0 / b, eps)
            lo = eps * np.exp(rng.random(m) * lo_mass)
            hi = start + rng.exponential(1.0 / b, m)
            prop = np.where(pick_lo, lo, hi)
            acc = np.where(pick_lo, np.exp(-b * prop), start / prop)
            out = np.concatenate([out, prop[rng.random(m) < acc]])
        return out[:n, None]

    def density(v):
        v = np.asarray(v, dtype=float)
        return np.where(v > 0, a * np.exp(-b * v) / np.where(v > 0, v, 1.0), 0.0)

    return ParametricLevy(x[:, None], w, rate=rate, sampler=sampler, eps=eps,
                          small_cov=[[small_var]], small_jumps=small_jumps, density=density,
                          quad_error=quad_error, description=f"gamma({a:g}, {b:g})")


def gamma_subordinator(a: float, b: float, eps: float = 1e-3, **kw) -> CharTriplet:
    """Zero-drift gamma subordinator with Laplace exponent ``-a log(1 + w/b)``."""
    levy = gamma_levy_measure(a, b, eps, **kw)
    gamma = a * (1.0 - np.exp(-b)) / b  # int_0^1 x Q(dx), small jumps included
    return CharTriplet([gamma], [[0.0]], levy)


# --------------------------------------------------------------------------
# serialization (model-spec tables, see idmix.expcli.config)


def triplet_to_dict(t: CharTriplet) -> dict:
    """Plain-data form for the model-spec file; only atomic measures round-trip."""
    out = {"gamma": t.gamma.tolist(), "sigma": t.sigma.tolist()}
    levy = t.levy
    if isinstance(levy, AtomicLevy):
        if levy.points.shape[0]:
            out["atoms"] = levy.points.tolist()
            out["masses"] = levy.masses.tolist()
    else:
        raise TypeError("only atomic Levy measures serialize to the model-spec format")
    return out


def triplet_from_dict(data: dict, *, field_prefix: str = "") -> CharTriplet:
    from .errors import ConfigError

    def get(key, default=None):
        return data.get(key, default)

    try:
        if "sigma" in data:
            sigma = np.atleast_2d(np.asarray(get("sigma"), dtype=float))
            d = sigma.shape[0]
        elif "gamma" in data:
            d = np.atleast_1d(get("gamma")).size
            sigma = np.zeros((d, d))
        elif "atoms" in data:
            d = np.atleast_2d(get("atoms")).shape[1]
            sigma = np.zeros((d, d))
        else:
            d = int(get("dim", 1))
            sigma = np.zeros((d, d))
        atoms = get("atoms")
        if atoms is not None:
            pts = np.asarray(atoms, dtype=float).reshape(-1, d)
            masses = np.asarray(get("masses", [1.0] * pts.shape[0]), dtype=float)
            levy = AtomicLevy(pts, masses)
        else:
            levy = AtomicLevy.empty(d)
        gamma = np.asarray(get("gamma", [0.0] * d), dtype=float)
        if get("compound_poisson", False):
            gamma = gamma + levy.sampled_compensator()
        return CharTriplet(gamma, sigma, levy)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field=field_prefix or None) from exc
