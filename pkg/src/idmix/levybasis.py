"""Time-homogeneous factorisable Levy bases on S x R^l with finite S."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .idlaw import CharTriplet, zero_triplet


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; order of use is irrelevant."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


@dataclass(frozen=True)
class GeneratingQuadruple:
    """``(gamma, Sigma, Q)`` of the base exponent plus weights ``pi`` on S."""

    base: CharTriplet
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    l: int = 1
    labels: tuple = ()

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(w <= 0):
            raise ValueError("mixing weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixing weights must sum to 1, got {w.sum()!r}")
        if self.l < 1:
            raise ValueError("spatial dimension l must be >= 1")
        object.__setattr__(self, "weights", w)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"A{i + 1}" for i in range(w.size)))

    @property
    def d(self) -> int:
        return self.base.dim

    @property
    def n_mix(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class CellPartition:
    """Regular grid of boxes of edge ``h`` covering ``[lo, hi]``, times S.

    Cells are ordered with the mixing index outermost, then C-order over
    the spatial grid.
    """

    lo: np.ndarray
    hi: np.ndarray
    h: np.ndarray
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        h = np.broadcast_to(np.asarray(self.h, dtype=float), lo.shape).copy()
        if np.any(h <= 0) or np.any(hi <= lo):
            raise ValueError("cell partition needs positive edges and a nonempty window")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=float)))

    @property
    def l(self) -> int:
        return self.lo.size

    @cached_property
    def counts(self) -> np.ndarray:
        # the last cell may overhang hi by less than one edge
        return np.maximum(1, np.ceil((self.hi - self.lo) / self.h - 1e-9)).astype(int)

    @cached_property
    def centers(self) -> np.ndarray:
        """Spatial cell centres, shape ``(n_spatial, l)``."""
        axes = [self.lo[i] + (np.arange(self.counts[i]) + 0.5) * self.h[i] for i in range(self.l)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def n_spatial(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def measures(self) -> np.ndarray:
        """``Pi(cell) = pi(A) * vol(box)`` for every cell, mixing index outermost."""
        return np.repeat(self.weights * self.volume, self.n_spatial)

    def __len__(self):
        return self.weights.size * self.n_spatial


def cell_law(q: GeneratingQuadruple, cell_measure: float) -> CharTriplet:
    """Law of ``Lambda(B)`` for a set of measure ``Pi(B) = cell_measure``."""
    if cell_measure < 0:
        raise ValueError("cell measure must be nonnegative")
    if cell_measure == 0:
        return zero_triplet(q.d)
    return q.base.scaled(cell_measure)


def sample_law(t: CharTriplet, measures, rng: np.random.Generator) -> np.ndarray:
    """One draw per entry of ``measures`` from the law with exponent ``m * psi``.

    Gaussian part exact, jumps by Poisson counts (atomic) or by the
    measure's sampler above its truncation level (parametric).
    """
    m = np.atleast_1d(np.asarray(measures, dtype=float))
    d = t.dim
    drift = t.gamma - t.levy.sampled_compensator()
    out = np.outer(m, drift)
    cov = t.sigma + t.levy.gaussian_part()
    if np.any(cov):
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        out += np.sqrt(m)[:, None] * (rng.standard_normal((m.size, d)) @ root.T)
    if not t.levy.is_zero:
        out += t.levy.sample_sums(rng, m)
    return out


def sample_increments(q: GeneratingQuadruple, p: CellPartition, seed: int, replicate: int = 0) -> np.ndarray:
    """Independent increments ``Lambda(cell)`` for every cell of ``p``.

    Returns an ``(len(p), d)`` array in the partition's cell order. The
    generator is keyed on ``(seed, replicate)`` so replicates can be drawn
    in any order or in parallel.
    """
    if p.weights.size != q.n_mix or not np.allclose(p.weights, q.weights):
        raise ValueError("partition weights must match the quadruple's mixing weights")
    return sample_law(q.base, p.measures, stream(seed, replicate))
