"""Mixed moving average fields ``X_t = int_S int_{R^l} f(A, t - s) Lambda(dA, ds)``.

Integrals over ``S x R^l`` are an exact sum over the finite mixing space and
composite Gauss-Legendre tensor rules over ``s``. Kernels declare their
support box, the hyperplanes where they jump, and (for unbounded support) a
decay envelope from which a truncation radius is derived.

Besides ``MmaModel`` this module holds the other stationary ID fields the
diagnostics accept: ``ConstantField`` (the non-ergodic control),
``SumField`` (independent sums) and ``ScaledField`` (``M X_t``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate as sci_integrate

from ._quadrature import integrate_box
from .errors import DimensionError, HypothesisError, NonIntegrableError, QuadratureError, WindowError
from .idlaw import (
    AtomicLevy,
    CharTriplet,
    LevyMeasure,
    ORIGIN_TOL,
    add_measures,
    atomic_part,
    cumulant,
    linear_map,
)
from .levybasis import CellPartition, GeneratingQuadruple, sample_law, stream

# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class Decay:
    """Envelope ``|f(A, s)| <= const * phi(|s|_inf)``.

    ``kind="exp"``: ``phi(r) = exp(-rate r)``; ``kind="gauss"``:
    ``phi(r) = exp(-rate r^2)``; ``kind="poly"``: ``phi(r) = (1 + r) ** -rate``.
    """

    const: float
    rate: float
    kind: str = "exp"

    def envelope(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "exp":
            return self.const * np.exp(-self.rate * r)
        if self.kind == "gauss":
            return self.const * np.exp(-self.rate * r * r)
        if self.kind == "poly":
            return self.const * (1.0 + r) ** (-self.rate)
        raise ValueError(f"unknown decay kind {self.kind!r}")

    def tail_energy(self, R: float, l: int) -> float:
        """``int_{|s|_inf > R} envelope(|s|_inf)^2 ds``."""
        shell = lambda r: self.envelope(r) ** 2 * 2 * l * (2 * r) ** (l - 1)  # noqa: E731
        if self.kind == "poly" and 2 * self.rate <= l:
            return np.inf
        val, _ = sci_integrate.quad(shell, R, np.inf, limit=200)
        return float(val)

    def radius(self, rtol: float, l: int) -> float:
        """Smallest ``R`` with tail energy at most ``rtol`` of the total."""
        total = self.tail_energy(0.0, l)
        if not np.isfinite(total):
            return np.inf
        lo, hi = 0.0, 1.0
        while self.tail_energy(hi, l) > rtol * total:
            lo, hi = hi, 2 * hi
            if hi > 1e8:
                return np.inf
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.tail_energy(mid, l) > rtol * total:
                lo = mid
            else:
                hi = mid
        return hi


class Kernel:
    """Kernel ``f: S x R^l -> R^{q x d}``.

    ``func(A, s)`` receives a mixing index and an ``(N, l)`` array and
    returns ``(N, q, d)``. ``lo``/``hi`` bound the support (may be
    infinite, then ``decay`` should be given); ``breakpoints`` lists per axis
    the coordinates where ``f`` may jump. ``level_sets_null`` declares that
    ``{s: f(A, s) x = y}`` is Lebesgue-null for every ``y != 0``, so that
    atoms of ``Q`` do not create atoms of the field's Levy measure.
    """

    def __init__(self, func, q, d, l, lo=None, hi=None, breakpoints=None, decay=None,
                 n_mix=None, level_sets_null=False, name="kernel"):
        self.func = func
        self.q, self.d, self.l = int(q), int(d), int(l)
        self.lo = np.full(self.l, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (self.l,)).copy()
        self.hi = np.full(self.l, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, dtype=float), (self.l,)).copy()
        if breakpoints is None:
            breakpoints = [()] * self.l
        self.breakpoints = [np.asarray(b, dtype=float).ravel() for b in breakpoints]
        if len(self.breakpoints) != self.l:
            raise DimensionError("one breakpoint list per spatial axis")
        self.decay = decay
        self.n_mix = n_mix
        self.level_sets_null = level_sets_null
        self.name = name

    def __call__(self, A: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, self.l)
        out = np.asarray(self.func(A, s), dtype=float)
        return out.reshape(s.shape[0], self.q, self.d)

    @property
    def finite_support(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    @property
    def empty_support(self) -> bool:
        return bool(np.any(self.hi <= self.lo))

    @property
    def support_radius(self) -> float:
        if self.empty_support:
            return 0.0
        return float(np.max(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def support_box(self, A: int):
        return self.lo, self.hi

    def exact_atoms(self, A: int, Q: AtomicLevy) -> Optional[AtomicLevy]:
        """Atoms that ``ds x Q`` puts on ``f(A, s) x``; ``None`` if unknown."""
        if self.level_sets_null or self.empty_support:
            return AtomicLevy.empty(self.q)
        return None


class StepKernel(Kernel):
    """Piecewise-constant kernel: per mixing index, a sum of ``C 1_{[lo, hi]}(s)``."""

    def __init__(self, pieces, name="step"):
        # pieces: list over A of lists of (lo, hi, matrix)
        if pieces and not isinstance(pieces[0], list):
            pieces = [pieces]
        norm = []
        for plist in pieces:
            rows = []
            for lo, hi, mat in plist:
                lo = np.atleast_1d(np.asarray(lo, dtype=float))
                hi = np.atleast_1d(np.asarray(hi, dtype=float))
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                rows.append((lo, hi, mat))
            norm.append(rows)
        first = norm[0][0]
        l = first[0].size
        q, d = first[2].shape
        for plist in norm:
            for lo, hi, mat in plist:
                if lo.size != l or hi.size != l or mat.shape != (q, d):
                    raise DimensionError("step pieces must share l, q and d")
                if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                    raise ValueError("step pieces must be bounded")
        self.pieces = norm
        all_lo = np.min([p[0] for plist in norm for p in plist], axis=0)
        all_hi = np.max([p[1] for plist in norm for p in plist], axis=0)
        bps = [np.unique(np.concatenate([[p[0][i], p[1][i]] for plist in norm for p in plist]))
               for i in range(l)]

        def func(A, s):
            out = np.zeros((s.shape[0], q, d))
            for lo, hi, mat in self.pieces[A if len(self.pieces) > 1 else 0]:
                inside = np.all((s >= lo) & (s <= hi), axis=1)
                out[inside] += mat
            return out

        super().__init__(func, q, d, l, all_lo, all_hi, bps, None,
                         n_mix=len(norm) if len(norm) > 1 else None, name=name)

    def support_box(self, A):
        plist = self.pieces[A if len(self.pieces) > 1 else 0]
        return (np.min([p[0] for p in plist], axis=0), np.max([p[1] for p in plist], axis=0))

    def constant_cells(self, A):
        """Cells of the breakpoint grid with their volume and kernel value."""
        plist = self.pieces[A if len(self.pieces) > 1 else 0]
        axes = [np.unique(np.concatenate([[p[0][i], p[1][i]] for p in plist])) for i in range(self.l)]
        mids = [0.5 * (a[:-1] + a[1:]) for a in axes]
        lens = [np.diff(a) for a in axes]
        grids = np.meshgrid(*mids, indexing="ij")
        lgrids = np.meshgrid(*lens, indexing="ij")
        centers = np.stack([g.ravel() for g in grids], axis=-1)
        vols = np.prod(np.stack([g.ravel() for g in lgrids], axis=-1), axis=-1)
        return centers, vols, self(A, centers)

    def exact_atoms(self, A, Q):
        centers, vols, mats = self.constant_cells(A)
        pts, masses = [], []
        for vol, mat in zip(vols, mats):
            if vol <= 0 or not np.any(mat):
                continue
            img = Q.points @ mat.T
            keep = np.linalg.norm(img, axis=1) > ORIGIN_TOL
            pts.append(img[keep])
            masses.append(vol * Q.masses[keep])
        if not pts or sum(p.shape[0] for p in pts) == 0:
            return AtomicLevy.empty(self.q)
        return AtomicLevy(np.vstack(pts), np.concatenate(masses)).merged()


class MixtureKernel(Kernel):
    """Different kernels for different points of the mixing space."""

    def __init__(self, kernels, name="mixture"):
        k0 = kernels[0]
        for k in kernels:
            if (k.q, k.d, k.l) != (k0.q, k0.d, k0.l):
                raise DimensionError("mixture components must share q, d, l")
        self.kernels = list(kernels)
        lo = np.min([k.lo for k in kernels], axis=0)
        hi = np.max([k.hi for k in kernels], axis=0)
        bps = [np.unique(np.concatenate([k.breakpoints[i] for k in kernels])) for i in range(k0.l)]
        decays = [k.decay for k in kernels]
        decay = None
        if all(dc is not None for dc in decays) and len({dc.kind for dc in decays}) == 1:
            decay = Decay(max(dc.const for dc in decays), min(dc.rate for dc in decays), decays[0].kind)
        super().__init__(lambda A, s: self.kernels[A](A, s), k0.q, k0.d, k0.l, lo, hi, bps, decay,
                         n_mix=len(kernels), level_sets_null=all(k.level_sets_null for k in kernels),
                         name=name)

    def support_box(self, A):
        return self.kernels[A].support_box(A)

    def exact_atoms(self, A, Q):
        return self.kernels[A].exact_atoms(A, Q)


def _matrix(matrix, q=1, d=1):
    return np.eye(q, d) if matrix is None else np.atleast_2d(np.asarray(matrix, dtype=float))


def exponential_kernel(rate: float, l: int = 1, matrix=None) -> Kernel:
    """``C exp(-rate * sum(s)) 1{s >= 0}``: the OU-type causal kernel."""
    C = _matrix(matrix)
    q, d = C.shape

    def func(A, s):
        val = np.where(np.all(s >= 0, axis=1), np.exp(-rate * np.sum(s, axis=1)), 0.0)
        return val[:, None, None] * C

    return Kernel(func, q, d, l, np.zeros(l), None, [[0.0]] * l,
                  Decay(float(np.linalg.norm(C, 2)), rate), level_sets_null=True,
                  name=f"exponential(rate={rate:g})")


def radial_exponential_kernel(rate: float, l: int = 2, matrix=None) -> Kernel:
    """Isotropic ``C exp(-rate |s|_2)`` on all of R^l."""
    C = _matrix(matrix)
    q, d = C.shape

    def func(A, s):
        return np.exp(-rate * np.linalg.norm(s, axis=1))[:, None, None] * C

    return Kernel(func, q, d, l, None, None, [[0.0]] * l,
                  Decay(float(np.linalg.norm(C, 2)), rate), level_sets_null=True,
                  name=f"radial_exponential(rate={rate:g})")


def radial_gaussian_kernel(rate: float, l: int = 2, matrix=None) -> Kernel:
    """Isotropic ``C exp(-rate |s|_2^2)``; smooth, so tensor rules converge fast."""
    C = _matrix(matrix)
    q, d = C.shape

    def func(A, s):
        return np.exp(-rate * np.sum(s * s, axis=1))[:, None, None] * C

    return Kernel(func, q, d, l, None, None, [()] * l,
                  Decay(float(np.linalg.norm(C, 2)), rate, "gauss"), level_sets_null=True,
                  name=f"radial_gaussian(rate={rate:g})")


def indicator_kernel(lo, hi, matrix=None) -> StepKernel:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    return StepKernel([[(lo, hi, _matrix(matrix))]], name="indicator")


def zero_kernel(q=1, d=1, l=1) -> Kernel:
    return Kernel(lambda A, s: np.zeros((s.shape[0], q, d)), q, d, l,
                  np.zeros(l), np.zeros(l), level_sets_null=True, name="zero")


def constant_kernel(matrix=None, l=1) -> Kernel:
    """``f == C`` everywhere; not integrable unless the basis is trivial."""
    C = _matrix(matrix)
    q, d = C.shape
    return Kernel(lambda A, s: np.broadcast_to(C, (s.shape[0], q, d)).copy(), q, d, l,
                  name="constant")


# --------------------------------------------------------------------------
# results


class Functional(NamedTuple):
    """Integrand ``g(x, y)`` for the pair Levy measure.

    ``switch(x, y)`` is optional; its zero set is where ``g`` jumps or kinks,
    and in one dimension those points become quadrature breakpoints.
    ``needs_both`` says ``g`` vanishes when either argument is zero.
    """

    g: Callable
    switch: Optional[Callable] = None
    needs_both: bool = True


@dataclass(frozen=True)
class JointPairStructure:
    """Gaussian cross-covariance and pair Levy functional of ``(X_0, X_t)``.

    ``gauss_cross[a, b]`` is the Gaussian covariance of ``X_0^(a)`` and
    ``X_t^(b)``.
    """

    t: np.ndarray
    gauss_cross: np.ndarray
    gauss_zero: np.ndarray
    gauss_error: float
    functional: Callable = field(repr=False)

    def levy_pair_functional(self, g, *, switch=None, needs_both=True, return_error=False):
        fn = g if isinstance(g, Functional) else Functional(g, switch, needs_both)
        value, err = self.functional(fn)
        return (value, err) if return_error else value


@dataclass(frozen=True)
class ConditionValue:
    value: float
    finite: bool
    error: float


@dataclass(frozen=True)
class IntegrabilityReport:
    condition1: ConditionValue
    condition2: ConditionValue
    condition3: ConditionValue

    @property
    def integrable(self) -> bool:
        return self.condition1.finite and self.condition2.finite and self.condition3.finite


@dataclass
class FieldRealization:
    """Replicates of a field sampled on a list of points.

    ``values`` has shape ``(replicates, len(t_points), q)``.
    """

    t_points: np.ndarray
    values: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_points = np.atleast_2d(np.asarray(self.t_points, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1] != self.t_points.shape[0]:
            raise DimensionError("values must be (replicates, points, q)")

    @property
    def replicates(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[2]

    @property
    def l(self) -> int:
        return self.t_points.shape[1]

    def index_of(self, point, tol: float = 1e-9) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        dist = np.max(np.abs(self.t_points - point), axis=1)
        i = int(np.argmin(dist))
        if dist[i] > tol:
            raise WindowError(f"point {point.tolist()} is not on the simulated grid")
        return i

    def at(self, point) -> np.ndarray:
        """``(replicates, q)`` values at one grid point."""
        return self.values[:, self.index_of(point), :]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate"] + [f"t{i + 1}" for i in range(self.l)] + [f"x{i + 1}" for i in range(self.q)])
            for r in range(self.replicates):
                for n, tp in enumerate(self.t_points):
                    w.writerow([r] + [f"{v:.17g}" for v in tp] + [f"{v:.17g}" for v in self.values[r, n]])

    def save(self, path) -> None:
        """Binary cache: ``.npz`` with arrays and a JSON metadata string."""
        with open(path, "wb") as fh:
            np.savez(fh, t_points=self.t_points, values=self.values, seed=np.array(self.seed),
                     meta=np.array(json.dumps(self.meta, sort_keys=True, default=str)))

    @classmethod
    def load(cls, path) -> "FieldRealization":
        with np.load(path, allow_pickle=False) as z:
            return cls(z["t_points"], z["values"], int(z["seed"]), json.loads(str(z["meta"])))


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8
    n_sub: int = 2
    rtol: float = 1e-11
    atol: float = 1e-14
    max_level: int = 9
    tail_rtol: float = 1e-14
    fail_tol: float = 1e-6
    max_nodes: int = 2_000_000


# --------------------------------------------------------------------------
# fields


class StationaryField:
    """Interface shared by every stationary ID field the diagnostics accept."""

    q: int
    l: int
    decay_rate: Optional[float] = None
    expected_mixing: Optional[bool] = None

    def marginal_triplet(self) -> CharTriplet:
        raise NotImplementedError

    def marginal_cumulant(self, theta):
        raise NotImplementedError

    def joint_cumulant(self, theta0, theta_t, t):
        """Exponent of ``E exp(i<theta0, X_0> + i<theta_t, X_t>)``."""
        raise NotImplementedError

    def joint_pair(self, t) -> JointPairStructure:
        raise NotImplementedError

    def q0_atoms(self) -> Optional[AtomicLevy]:
        """Atoms of the Levy measure of ``X_0``; ``None`` when atomless."""
        raise NotImplementedError

    def simulate(self, t_points, replicates, h, seed, window=None) -> FieldRealization:
        raise NotImplementedError

    # conveniences ------------------------------------------------------
    def charfn(self, theta):
        return np.exp(self.marginal_cumulant(theta))

    def joint_charfn(self, theta0, theta_t, t):
        return np.exp(self.joint_cumulant(theta0, theta_t, t))

    def _lag(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.size != self.l:
            raise DimensionError(f"lag has {t.size} coordinates, field is indexed by R^{self.l}")
        return t


def _theta_stack(theta, q):
    th = np.asarray(theta, dtype=float)
    if th.ndim == 0:
        th = th.reshape(1, 1)
    elif th.ndim == 1:
        th = th[:, None] if (q == 1 and th.size != 1) else th[None, :]
    if th.shape[-1] != q:
        raise DimensionError(f"theta has {th.shape[-1]} coordinates, field dimension is {q}")
    return th


def _squeeze(val, theta, q):
    th = np.asarray(theta)
    single = th.ndim == 0 or (th.ndim == 1 and (q != 1 or th.size == 1))
    return complex(val[0]) if single else val


def _crossings_1d(fn, lo, hi, n_grid=2048, iters=60):
    """Roots of a vectorized scalar family on [lo, hi] (sign changes on a grid).

    ``fn(s)`` maps ``(N,)`` to ``(N, m)``; returns all crossing points.
    """
    grid = np.linspace(lo, hi, n_grid)
    vals = fn(grid)
    sgn = np.sign(vals)
    idx_s, idx_m = np.nonzero(sgn[:-1] * sgn[1:] < 0)
    if idx_s.size == 0:
        return np.zeros(0)
    a = grid[idx_s].copy()
    b = grid[idx_s + 1].copy()
    fa = vals[idx_s, idx_m]
    for _ in range(iters):
        mid = 0.5 * (a + b)
        fm = fn(mid)[np.arange(mid.size), idx_m]
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, mid)
    return np.unique(0.5 * (a + b))


class MmaModel(StationaryField):
    """Mixed moving average driven by a factorisable homogeneous Levy basis."""

    def __init__(self, kernel: Kernel, quadruple: GeneratingQuadruple,
                 quadrature: Optional[QuadratureSpec] = None, name: str = "mma"):
        if kernel.d != quadruple.d:
            raise DimensionError(f"kernel acts on R^{kernel.d}, basis is R^{quadruple.d}-valued")
        if kernel.l != quadruple.l:
            raise DimensionError("kernel and basis disagree on l")
        if kernel.n_mix is not None and kernel.n_mix != quadruple.n_mix:
            raise DimensionError("kernel mixture size differs from the mixing space")
        self.kernel = kernel
        self.quadruple = quadruple
        self.quadrature = quadrature or QuadratureSpec()
        self.name = name
        self.q, self.d, self.l = kernel.q, kernel.d, kernel.l
        if kernel.decay is not None and kernel.decay.kind == "exp":
            self.decay_rate = kernel.decay.rate
        elif kernel.finite_support or (kernel.decay is not None and kernel.decay.kind == "gauss"):
            self.decay_rate = np.inf
        self.expected_mixing = True

    # geometry ----------------------------------------------------------
    @cached_property
    def tail_radius(self) -> float:
        k = self.kernel
        if k.finite_support or k.empty_support:
            return np.inf
        if k.decay is None:
            return np.inf
        return k.decay.radius(self.quadrature.tail_rtol, self.l)

    def _eff_box(self, A, radius=None):
        lo, hi = self.kernel.support_box(A)
        R = self.tail_radius if radius is None else radius
        lo = np.maximum(lo, -R)
        hi = np.minimum(hi, R)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NonIntegrableError(
                f"kernel {self.kernel.name!r} has unbounded support and no decay envelope")
        return lo, hi

    def _pair_box(self, A, t, mode):
        """s-box for integrands in ``f(A, -s)`` and ``f(A, t - s)``.

        Decaying kernels are cut at the tail radius around the segment
        joining 0 and t, not around each kernel separately, so pair
        quantities keep their relative accuracy at large lags.
        """
        lo, hi = self.kernel.support_box(A)
        a_lo, a_hi = -hi, -lo
        b_lo, b_hi = t - hi, t - lo
        if mode == "intersection":
            box_lo, box_hi = np.maximum(a_lo, b_lo), np.minimum(a_hi, b_hi)
        else:
            box_lo, box_hi = np.minimum(a_lo, b_lo), np.maximum(a_hi, b_hi)
        R = self.tail_radius
        box_lo = np.maximum(box_lo, np.minimum(0.0, t) - R)
        box_hi = np.minimum(box_hi, np.maximum(0.0, t) + R)
        if not (np.all(np.isfinite(box_lo)) and np.all(np.isfinite(box_hi))):
            raise NonIntegrableError(
                f"kernel {self.kernel.name!r} has unbounded support and no decay envelope")
        return box_lo, box_hi

    def _pair_breaks(self, t):
        return [np.concatenate([-b, t[i] - b]) for i, b in enumerate(self.kernel.breakpoints)]

    @property
    def _levy_nodes(self):
        return self.quadruple.base.levy.discretize()

    def _check(self, res, what, tol=None):
        tol = self.quadrature.fail_tol if tol is None else tol
        scale = float(np.max(np.abs(res.value))) if np.size(res.value) else 0.0
        if res.error > tol * max(1.0, scale):
            raise QuadratureError(f"{what} did not converge", error=res.error)
        return res

    def _integrate(self, integrand, lo, hi, bps, what, check=True):
        qs = self.quadrature
        res = integrate_box(integrand, lo, hi, bps, order=qs.order, n_sub=qs.n_sub, rtol=qs.rtol,
                            atol=qs.atol, max_level=qs.max_level, max_nodes=qs.max_nodes)
        return self._check(res, what) if check else res

    def _extra_breaks_1d(self, A, lo, hi, switch_of_s):
        """Zero crossings of ``switch_of_s`` on [lo, hi] (one spatial axis only)."""
        if self.l != 1 or switch_of_s is None or not hi[0] > lo[0]:
            return np.zeros(0)
        return _crossings_1d(switch_of_s, lo[0], hi[0])

    # integrability ---------------------------------------------------
    def _condition_integrands(self, A):
        base = self.quadruple.base
        X, w = self._levy_nodes
        xn = np.linalg.norm(X, axis=1) if X.size else np.zeros(0)

        def integrand(s):
            F = self.kernel(A, s)
            drift = F @ base.gamma
            if X.size:
                img = np.einsum("nqd,md->nmq", F, X)
                inorm = np.linalg.norm(img, axis=2)
                corr = (inorm <= 1.0).astype(float) - (xn <= 1.0)[None, :]
                drift = drift + np.einsum("nmq,m->nq", img * corr[:, :, None], w)
                c3 = np.minimum(1.0, inorm ** 2) @ w
            else:
                c3 = np.zeros(s.shape[0])
            c1 = np.linalg.norm(drift, axis=1)
            c2 = np.linalg.norm(F @ base.sigma @ np.swapaxes(F, 1, 2), axis=(1, 2))
            return np.stack([c1, c2, c3], axis=1)

        return integrand

    def _switch_drift(self, A):
        X, _ = self._levy_nodes
        if not X.size:
            return None

        def fn(s):
            F = self.kernel(A, s[:, None])
            return np.linalg.norm(np.einsum("nqd,md->nmq", F, X), axis=2) - 1.0

        return fn

    def check_integrability(self, growth_levels: int = 12) -> IntegrabilityReport:
        """Evaluate the three integrability integrals.

        Kernels with bounded support or a decay envelope are integrated on a
        finite box (the envelope bounds the neglected tail). Otherwise the
        integrals are computed on windows ``[-2^k, 2^k]^l``; if successive
        increments fail to shrink geometrically the condition is flagged
        infinite.
        """
        totals = np.zeros(3)
        errs = np.zeros(3)
        finite = np.ones(3, dtype=bool)
        k = self.kernel
        for A, piA in enumerate(self.quadruple.weights):
            integrand = self._condition_integrands(A)
            lo0, hi0 = k.support_box(A)
            if k.empty_support:
                continue
            if (np.all(np.isfinite(lo0)) and np.all(np.isfinite(hi0))) or k.decay is not None:
                lo, hi = self._eff_box(A)
                bps = list(k.breakpoints)
                if self.l == 1:
                    extra = self._extra_breaks_1d(A, lo, hi, self._switch_drift(A))
                    bps = [np.concatenate([bps[0], extra])]
                res = self._integrate(integrand, lo, hi, bps, "integrability integrals", check=False)
                totals += piA * res.value
                errs += piA * res.error
                if k.decay is not None and not k.finite_support:
                    tail = k.decay.tail_energy(self.tail_radius, self.l)
                    if not np.isfinite(tail):
                        finite[:] = False
                continue
            values = []
            for lev in range(growth_levels):
                R = 2.0 ** lev
                lo = np.maximum(lo0, -R)
                hi = np.minimum(hi0, R)
                res = self._integrate(integrand, lo, hi, k.breakpoints, "integrability integrals",
                                      check=False)
                values.append(res.value)
            values = np.array(values)
            inc = np.abs(np.diff(values, axis=0))
            for c in range(3):
                last = inc[-3:, c]
                converged = np.all(last <= 0.5 * inc[-4:-1, c] + 1e-12) and last[-1] <= 1e-8 * max(1.0, abs(values[-1, c]))
                if converged or np.all(inc[:, c] == 0):
                    totals[c] += piA * values[-1, c]
                    errs[c] += piA * last[-1]
                else:
                    finite[c] = False
                    totals[c] = np.inf
                    errs[c] = np.inf
        conds = [ConditionValue(float(totals[i]) if finite[i] else np.inf, bool(finite[i]), float(errs[i]))
                 for i in range(3)]
        return IntegrabilityReport(*conds)

    def _require_integrable(self):
        if self.kernel.empty_support:
            return
        if not self.kernel.finite_support and self.kernel.decay is None:
            rep = self.check_integrability()
            if not rep.integrable:
                raise NonIntegrableError(f"kernel {self.kernel.name!r} is not integrable: {rep}")

    # marginal -----------------------------------------------------------
    @cached_property
    def _marginal(self):
        self._require_integrable()
        base = self.quadruple.base
        X, w = self._levy_nodes
        xn = np.linalg.norm(X, axis=1) if X.size else np.zeros(0)
        q = self.q
        sigma = np.zeros((q, q))
        gamma = np.zeros(q)
        err = 0.0
        atoms_pts, atoms_w = [], []
        for A, piA in enumerate(self.quadruple.weights):
            if self.kernel.empty_support:
                continue
            lo, hi = self._eff_box(A)

            def integrand(s, A=A):
                F = self.kernel(A, s)
                S = F @ base.sigma @ np.swapaxes(F, 1, 2)
                drift = F @ base.gamma
                if X.size:
                    img = np.einsum("nqd,md->nmq", F, X)
                    inorm = np.linalg.norm(img, axis=2)
                    corr = (inorm <= 1.0).astype(float) - (xn <= 1.0)[None, :]
                    drift = drift + np.einsum("nmq,m->nq", img * corr[:, :, None], w)
                    c3 = np.minimum(1.0, inorm ** 2) @ w
                else:
                    c3 = np.zeros(s.shape[0])
                return np.concatenate([S.reshape(s.shape[0], -1), drift, c3[:, None]], axis=1)

            bps = list(self.kernel.breakpoints)
            if self.l == 1:
                bps = [np.concatenate([bps[0], self._extra_breaks_1d(A, lo, hi, self._switch_drift(A))])]
            res = self._integrate(integrand, lo, hi, bps, "marginal triplet", check=False)
            # the drift jumps where |f x| = 1; only the Gaussian part is held to fail_tol
            self._check(type(res)(res.value[: q * q], res.error, res.nodes, res.weights, res.level),
                        "marginal Gaussian part")
            sigma += piA * res.value[: q * q].reshape(q, q)
            gamma += piA * res.value[q * q: q * q + q]
            err += piA * res.error
            if X.size and res.nodes.shape[0]:
                F = self.kernel(A, res.nodes)
                img = np.einsum("nqd,md->nmq", F, X).reshape(-1, q)
                mass = (piA * res.weights[:, None] * w[None, :]).ravel()
                keep = (np.linalg.norm(img, axis=1) > ORIGIN_TOL) & (mass > 0)
                atoms_pts.append(img[keep])
                atoms_w.append(mass[keep])
        return sigma, gamma, err, atoms_pts, atoms_w

    def marginal_triplet(self) -> CharTriplet:
        """``(gamma_int, Sigma_int, v_int)`` of ``X_0``.

        ``v_int`` is exact for step kernels with an atomic basis and otherwise
        the quadrature-weighted atom list of the final rule, flagged
        ``approximate`` with the rule's error estimate attached.
        """
        sigma, gamma, err, pts, ws = self._marginal
        sigma = 0.5 * (sigma + sigma.T)
        base_levy = self.quadruple.base.levy
        if isinstance(self.kernel, (StepKernel,)) and isinstance(base_levy, AtomicLevy):
            levy = self.q0_atoms() or AtomicLevy.empty(self.q)
        elif pts and sum(p.shape[0] for p in pts):
            levy = AtomicLevy(np.vstack(pts), np.concatenate(ws), approximate=True,
                              discretization_error=err).merged()
        else:
            levy = AtomicLevy.empty(self.q)
        return CharTriplet(gamma, sigma, levy)

    def marginal_cumulant(self, theta):
        """``int int psi(f(A, s)' theta) ds pi(dA)`` by direct quadrature."""
        th = _theta_stack(theta, self.q)
        zero = np.zeros((th.shape[0], self.q))
        val = self._psi_integral(th, zero, np.zeros(self.l), marginal=True)
        return _squeeze(val, theta, self.q)

    def joint_cumulant(self, theta0, theta_t, t):
        t = self._lag(t)
        th0 = _theta_stack(theta0, self.q)
        tht = _theta_stack(theta_t, self.q)
        th0, tht = np.broadcast_arrays(th0, tht)
        val = self._psi_integral(th0, tht, t)
        return _squeeze(val, theta0, self.q)

    def _psi_integral(self, th0, tht, t, marginal=False):
        """``int psi(f(-s)' th0 + f(t - s)' tht) ds`` summed over the mixing space.

        Joint values are split as two marginal integrals plus the
        interaction ``psi(u0 + ut) - psi(u0) - psi(ut)``, which vanishes
        unless both kernels are active and so lives on the intersection box.
        """
        out = np.zeros(th0.shape[0], dtype=complex)
        if self.kernel.empty_support:
            return out
        self._require_integrable()
        if marginal:
            return self._marginal_psi(th0)
        out = self._marginal_psi(th0) + self._marginal_psi(tht)
        base = self.quadruple.base
        n_th = th0.shape[0]
        for A, piA in enumerate(self.quadruple.weights):
            lo, hi = self._pair_box(A, t, "intersection")
            if np.any(hi <= lo):
                continue
            bps = self._pair_breaks(t)

            def integrand(s, A=A):
                u0 = np.einsum("nqd,kq->nkd", self.kernel(A, -s), th0).reshape(-1, self.d)
                ut = np.einsum("nqd,kq->nkd", self.kernel(A, t - s), tht).reshape(-1, self.d)
                vals = cumulant(base, u0 + ut) - cumulant(base, u0) - cumulant(base, ut)
                return np.asarray(vals).reshape(s.shape[0], n_th)

            res = self._integrate(integrand, lo, hi, bps, "cumulant integral")
            out += piA * res.value
        return out

    def _marginal_psi(self, th):
        cache = self.__dict__.setdefault("_psi_cache", {})
        out = np.zeros(th.shape[0], dtype=complex)
        todo = []
        for i, row in enumerate(th):
            key = row.tobytes()
            if key in cache:
                out[i] = cache[key]
            elif np.any(row):
                todo.append(i)
        if not todo:
            return out
        sub = th[todo]
        base = self.quadruple.base
        acc = np.zeros(len(todo), dtype=complex)
        for A, piA in enumerate(self.quadruple.weights):
            lo, hi = self._eff_box(A)
            lo, hi = -hi, -lo
            bps = [-b for b in self.kernel.breakpoints]

            def integrand(s, A=A):
                u = np.einsum("nqd,kq->nkd", self.kernel(A, -s), sub)
                return np.asarray(cumulant(base, u.reshape(-1, self.d))).reshape(s.shape[0], len(todo))

            acc += piA * self._integrate(integrand, lo, hi, bps, "cumulant integral").value
        for i, v in zip(todo, acc):
            cache[th[i].tobytes()] = v
            out[i] = v
        return out

    # pair structure ---------------------------------------------------
    def joint_pair(self, t) -> JointPairStructure:
        """Gaussian cross-covariance ``Sigma(t)`` and the pair Levy functional."""
        t = self._lag(t)
        self._require_integrable()
        base = self.quadruple.base
        q = self.q
        cross = np.zeros((q, q))
        zero = self.marginal_triplet().sigma
        gerr = 0.0
        if np.any(base.sigma) and not self.kernel.empty_support:
            for A, piA in enumerate(self.quadruple.weights):
                lo, hi = self._pair_box(A, t, "intersection")

                def integrand(s, A=A):
                    F0 = self.kernel(A, -s)
                    Ft = self.kernel(A, t - s)
                    return (F0 @ base.sigma @ np.swapaxes(Ft, 1, 2)).reshape(s.shape[0], -1)

                res = self._integrate(integrand, lo, hi, self._pair_breaks(t), "Sigma(t)")
                cross += piA * res.value.reshape(q, q)
                gerr += piA * res.error

        def functional(fn: Functional):
            return self._pair_functional(t, fn)

        return JointPairStructure(t, cross, zero, gerr, functional)

    def _pair_functional(self, t, fn: Functional):
        X, w = self._levy_nodes
        if not X.size or self.kernel.empty_support:
            return 0.0, 0.0
        total, err = 0.0, 0.0
        mode = "intersection" if fn.needs_both else "union"
        for A, piA in enumerate(self.quadruple.weights):
            lo, hi = self._pair_box(A, t, mode)

            def images(s, A=A):
                F0 = self.kernel(A, -s)
                Ft = self.kernel(A, t - s)
                return np.einsum("nqd,md->nmq", F0, X), np.einsum("nqd,md->nmq", Ft, X)

            def integrand(s):
                a, b = images(s)
                n, m = a.shape[:2]
                a2, b2 = a.reshape(n * m, self.q), b.reshape(n * m, self.q)
                vals = np.asarray(fn.g(a2, b2)).reshape(n, m)
                nonzero = (np.linalg.norm(a, axis=2) > ORIGIN_TOL) | (np.linalg.norm(b, axis=2) > ORIGIN_TOL)
                return np.where(nonzero, vals, 0.0) @ w

            bps = self._pair_breaks(t)
            if self.l == 1 and fn.switch is not None and hi[0] > lo[0]:
                def sw(s):
                    a, b = images(s[:, None])
                    n, m = a.shape[:2]
                    return np.asarray(fn.switch(a.reshape(n * m, self.q), b.reshape(n * m, self.q))).reshape(n, m)
                bps = [np.concatenate([bps[0], _crossings_1d(sw, lo[0], hi[0])])]
            res = self._integrate(integrand, lo, hi, bps, "pair Levy functional")
            val = res.value
            total = total + piA * (val.item() if np.ndim(val) == 0 else val)
            err += piA * res.error
        return total, err

    # atoms ----------------------------------------------------------------
    def q0_atoms(self) -> Optional[AtomicLevy]:
        """Exact atoms of the Levy measure of ``X_0``.

        Returns ``None`` when the basis Levy measure is atomless. Raises
        ``HypothesisError`` when the kernel cannot certify its atoms.
        """
        base_atoms = atomic_part(self.quadruple.base.levy)
        if base_atoms is None:
            return None
        out = AtomicLevy.empty(self.q)
        if base_atoms.points.shape[0] == 0:
            return out
        for A, piA in enumerate(self.quadruple.weights):
            part = self.kernel.exact_atoms(A, base_atoms)
            if part is None:
                raise HypothesisError(
                    f"cannot determine atoms of the field's Levy measure for kernel {self.kernel.name!r}")
            if part.points.shape[0]:
                out = add_measures(out, part.scaled(piA))
        return out

    # simulation -----------------------------------------------------------
    def simulation_window(self, t_points, h, tail_rtol=1e-8):
        """Window covering ``t - supp f`` for every requested point, aligned to ``h``."""
        t_points = np.atleast_2d(np.asarray(t_points, dtype=float))
        k = self.kernel
        if k.empty_support:
            return t_points.min(axis=0), t_points.min(axis=0) + h
        R = np.inf
        if not k.finite_support:
            if k.decay is None:
                raise NonIntegrableError("cannot simulate a kernel without bounded support or decay")
            R = k.decay.radius(tail_rtol, self.l)
        los, his = [], []
        for A in range(self.quadruple.n_mix):
            lo, hi = k.support_box(A)
            lo, hi = np.maximum(lo, -R), np.minimum(hi, R)
            los.append(t_points.min(axis=0) - hi)
            his.append(t_points.max(axis=0) - lo)
        need_lo, need_hi = np.min(los, axis=0), np.max(his, axis=0)
        anchor = t_points.min(axis=0)
        h = np.broadcast_to(np.asarray(h, dtype=float), need_lo.shape)
        lo = anchor - np.ceil((anchor - need_lo) / h - 1e-9) * h
        hi = lo + np.maximum(1, np.ceil((need_hi - lo) / h - 1e-9)) * h
        return lo, hi

    def kernel_matrix(self, t_points, partition: CellPartition) -> np.ndarray:
        """``(N q, K d)`` matrix mapping stacked cell increments to field values."""
        t_points = np.atleast_2d(np.asarray(t_points, dtype=float))
        c = partition.centers
        N, K = t_points.shape[0], c.shape[0]
        blocks = []
        for A in range(self.quadruple.n_mix):
            diff = (t_points[:, None, :] - c[None, :, :]).reshape(-1, self.l)
            F = self.kernel(A, diff).reshape(N, K, self.q, self.d)
            blocks.append(np.transpose(F, (0, 2, 1, 3)).reshape(N * self.q, K * self.d))
        return np.concatenate(blocks, axis=1)

    def simulate(self, t_points, replicates, h, seed, window=None, *, tail_rtol=1e-8,
                 batch=256, draw=None) -> FieldRealization:
        """Discretized stochastic integral ``X_t ~ sum_cells f(A, t - s_c) Lambda(cell)``.

        Every replicate draws one basis realization (generator keyed on
        ``(seed, replicate)``) and evaluates all requested points from it.
        ``draw(partition, replicate)`` overrides the increment sampler.
        """
        t_points = np.atleast_2d(np.asarray(t_points, dtype=float))
        if t_points.shape[1] != self.l:
            raise DimensionError("t_points must have l columns")
        need_lo, need_hi = self.simulation_window(t_points, h, tail_rtol)
        if window is None:
            lo, hi = need_lo, need_hi
        else:
            lo = np.atleast_1d(np.asarray(window[0], dtype=float))
            hi = np.atleast_1d(np.asarray(window[1], dtype=float))
            if not self.kernel.empty_support and (np.any(lo > need_lo + 1e-9) or np.any(hi < need_hi - 1e-9)):
                raise WindowError(
                    f"window [{lo.tolist()}, {hi.tolist()}] does not cover [{need_lo.tolist()}, {need_hi.tolist()}]")
        part = CellPartition(lo, hi, h, self.quadruple.weights)
        Fmat = self.kernel_matrix(t_points, part)
        if draw is None:
            def draw(p, r):
                return sample_law(self.quadruple.base, p.measures, stream(seed, r))
        N = t_points.shape[0]
        out = np.empty((replicates, N, self.q))
        for start in range(0, replicates, batch):
            reps = range(start, min(replicates, start + batch))
            inc = np.stack([draw(part, r).ravel() for r in reps], axis=1)
            out[start:start + len(reps)] = (Fmat @ inc).T.reshape(len(reps), N, self.q)
        meta = {"h": np.atleast_1d(h).tolist(), "window": [lo.tolist(), hi.tolist()],
                "tail_rtol": tail_rtol, "cells": len(part), "model": self.name}
        return FieldRealization(t_points, out, seed, meta)


class ConstantField(StationaryField):
    """``X_t = Z`` for all ``t``: stationary and ID, but neither mixing nor ergodic."""

    def __init__(self, triplet: CharTriplet, l: int = 1, name="constant-field"):
        self.triplet = triplet
        self.q = triplet.dim
        self.l = l
        self.name = name
        self.expected_mixing = False

    def marginal_triplet(self):
        return self.triplet

    def marginal_cumulant(self, theta):
        return _squeeze(np.atleast_1d(cumulant(self.triplet, _theta_stack(theta, self.q))), theta, self.q)

    def joint_cumulant(self, theta0, theta_t, t):
        self._lag(t)
        th0, tht = np.broadcast_arrays(_theta_stack(theta0, self.q), _theta_stack(theta_t, self.q))
        return _squeeze(np.atleast_1d(cumulant(self.triplet, th0 + tht)), theta0, self.q)

    def joint_pair(self, t):
        t = self._lag(t)
        levy = self.triplet.levy

        def functional(fn: Functional):
            return float(np.real_if_close(levy.integrate(lambda x: fn.g(x, x)))) if not np.iscomplexobj(
                levy.integrate(lambda x: fn.g(x, x))) else complex(levy.integrate(lambda x: fn.g(x, x))), 0.0

        return JointPairStructure(t, self.triplet.sigma.copy(), self.triplet.sigma.copy(), 0.0, functional)

    def q0_atoms(self):
        return atomic_part(self.triplet.levy)

    def simulate(self, t_points, replicates, h=None, seed=0, window=None, **kw):
        t_points = np.atleast_2d(np.asarray(t_points, dtype=float))
        Z = np.stack([sample_law(self.triplet, [1.0], stream(seed, r))[0] for r in range(replicates)])
        vals = np.broadcast_to(Z[:, None, :], (replicates, t_points.shape[0], self.q)).copy()
        return FieldRealization(t_points, vals, seed, {"model": self.name})


class SumField(StationaryField):
    """Sum of independent stationary ID fields with a common ``q`` and ``l``."""

    def __init__(self, components, name="sum"):
        components = list(components)
        if not components:
            raise ValueError("need at least one component")
        q, l = components[0].q, components[0].l
        if any(c.q != q or c.l != l for c in components):
            raise DimensionError("summed fields must share q and l")
        self.components = components
        self.q, self.l = q, l
        self.name = name
        rates = [c.decay_rate for c in components]
        self.decay_rate = None if any(r is None for r in rates) else min(rates)
        exp = [c.expected_mixing for c in components]
        self.expected_mixing = None if any(e is None for e in exp) else all(exp)

    def marginal_triplet(self):
        out = self.components[0].marginal_triplet()
        from .idlaw import convolve
        for c in self.components[1:]:
            out = convolve(out, c.marginal_triplet())
        return out

    def marginal_cumulant(self, theta):
        return sum(c.marginal_cumulant(theta) for c in self.components)

    def joint_cumulant(self, theta0, theta_t, t):
        return sum(c.joint_cumulant(theta0, theta_t, t) for c in self.components)

    def joint_pair(self, t):
        pairs = [c.joint_pair(t) for c in self.components]

        def functional(fn):
            vals = [p.functional(fn) for p in pairs]
            return sum(v for v, _ in vals), sum(e for _, e in vals)

        return JointPairStructure(self._lag(t), sum(p.gauss_cross for p in pairs),
                                  sum(p.gauss_zero for p in pairs), sum(p.gauss_error for p in pairs),
                                  functional)

    def q0_atoms(self):
        parts = [c.q0_atoms() for c in self.components]
        parts = [p for p in parts if p is not None]
        if not parts:
            return None
        out = AtomicLevy.empty(self.q)
        for p in parts:
            out = add_measures(out, p)
        return out

    def simulate(self, t_points, replicates, h, seed, window=None, **kw):
        total = None
        for i, c in enumerate(self.components):
            sub_seed = int(np.random.SeedSequence(int(seed), spawn_key=(1_000_003, i)).generate_state(1)[0])
            real = c.simulate(t_points, replicates, h, sub_seed, window, **kw)
            total = real.values if total is None else total + real.values
        return FieldRealization(t_points, total, seed, {"model": self.name, "h": np.atleast_1d(h).tolist()})


class ScaledField(StationaryField):
    """``M X_t`` for a fixed ``p x q`` matrix ``M``."""

    def __init__(self, base: StationaryField, matrix, name=None):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if M.shape[1] != base.q:
            raise DimensionError("matrix must have base.q columns")
        self.base = base
        self.matrix = M
        self.q = M.shape[0]
        self.l = base.l
        self.name = name or f"scaled({getattr(base, 'name', 'field')})"
        self.decay_rate = base.decay_rate
        self.expected_mixing = base.expected_mixing

    def marginal_triplet(self):
        return linear_map(self.base.marginal_triplet(), self.matrix)

    def marginal_cumulant(self, theta):
        th = _theta_stack(theta, self.q) @ self.matrix
        val = np.atleast_1d(self.base.marginal_cumulant(th if self.base.q > 1 or th.shape[0] > 1 else th[0]))
        return _squeeze(val, theta, self.q)

    def joint_cumulant(self, theta0, theta_t, t):
        th0, tht = np.broadcast_arrays(_theta_stack(theta0, self.q), _theta_stack(theta_t, self.q))
        a, b = th0 @ self.matrix, tht @ self.matrix
        if a.shape[0] == 1:
            a, b = a[0], b[0]
        val = np.atleast_1d(self.base.joint_cumulant(a, b, t))
        return _squeeze(val, theta0, self.q)

    def joint_pair(self, t):
        inner = self.base.joint_pair(t)
        M = self.matrix

        def functional(fn):
            g = lambda x, y: fn.g(x @ M.T, y @ M.T)  # noqa: E731
            sw = None if fn.switch is None else (lambda x, y: fn.switch(x @ M.T, y @ M.T))
            return inner.functional(Functional(g, sw, fn.needs_both))

        return JointPairStructure(inner.t, M @ inner.gauss_cross @ M.T, M @ inner.gauss_zero @ M.T,
                                  inner.gauss_error * np.linalg.norm(M, 2) ** 2, functional)

    def q0_atoms(self):
        atoms = self.base.q0_atoms()
        if atoms is None:
            return None
        if atoms.points.shape[0] == 0:
            return AtomicLevy.empty(self.q)
        img = atoms.points @ self.matrix.T
        keep = np.linalg.norm(img, axis=1) > ORIGIN_TOL
        return AtomicLevy(img[keep], atoms.masses[keep]).merged()

    def simulate(self, t_points, replicates, h, seed, window=None, **kw):
        real = self.base.simulate(t_points, replicates, h, seed, window, **kw)
        return FieldRealization(real.t_points, real.values @ self.matrix.T, seed, dict(real.meta))
