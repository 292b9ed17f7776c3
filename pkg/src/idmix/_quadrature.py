"""Composite Gauss-Legendre tensor rules with doubling refinement."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=64)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_edges(a: float, b: float, breakpoints=(), n_sub: int = 1) -> np.ndarray:
    """Edges of a composite rule on [a, b].

    Every breakpoint strictly inside (a, b) becomes an edge, then each
    resulting segment is split into ``n_sub`` equal panels.
    """
    inner = [p for p in np.asarray(breakpoints, dtype=float).ravel() if a < p < b]
    seg = np.unique(np.concatenate([[a], inner, [b]]))
    pieces = [np.linspace(lo, hi, n_sub + 1)[:-1] for lo, hi in zip(seg[:-1], seg[1:])]
    return np.concatenate(pieces + [[b]])


def gauss_rule(edges: np.ndarray, order: int):
    x, w = _leggauss(order)
    lo = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    nodes = lo + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def tensor_rule(rules):
    """Tensor product of 1-D ``(nodes, weights)`` rules -> ``(N, l)`` nodes."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


@dataclass(frozen=True)
class BoxIntegral:
    value: np.ndarray
    error: float
    nodes: np.ndarray
    weights: np.ndarray
    level: int


def box_rule(lo, hi, breakpoints, order: int, n_sub: int):
    rules = []
    for axis, (a, b) in enumerate(zip(lo, hi)):
        bps = breakpoints[axis] if breakpoints is not None else ()
        rules.append(gauss_rule(panel_edges(a, b, bps, n_sub), order))
    return tensor_rule(rules)


def integrate_box(
    func,
    lo,
    hi,
    breakpoints=None,
    *,
    order: int = 8,
    n_sub: int = 2,
    rtol: float = 1e-10,
    atol: float = 1e-13,
    max_level: int = 7,
    max_nodes: int = 4_000_000,
) -> BoxIntegral:
    """Integrate ``func`` over the box ``[lo, hi]`` with doubling refinement.

    ``func`` maps an ``(N, l)`` node array to an ``(N, ...)`` array. The
    panel count per segment doubles until two successive levels agree to
    ``max(atol, rtol * |value|)`` in the max norm; the error is the last
    difference. Empty or degenerate boxes integrate to zero.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise QuadratureError("integration box must be finite", error=np.inf)
    if np.any(hi <= lo):
        # one evaluation at a corner fixes the output shape and dtype
        probe = np.asarray(func(lo[None, :]))
        zero = np.zeros(probe.shape[1:], dtype=probe.dtype)
        return BoxIntegral(zero, 0.0, np.zeros((0, lo.size)), np.zeros(0), 0)

    prev = None
    level = 0
    sub = n_sub
    while True:
        nodes, weights = box_rule(lo, hi, breakpoints, order, sub)
        vals = func(nodes)
        value = np.tensordot(weights, vals, axes=(0, 0))
        if prev is not None:
            err = float(np.max(np.abs(value - prev))) if np.size(value) else 0.0
            scale = float(np.max(np.abs(value))) if np.size(value) else 0.0
            if err <= max(atol, rtol * scale):
                return BoxIntegral(value, err, nodes, weights, level)
        level += 1
        next_nodes = nodes.shape[0] * 2 ** lo.size
        if level > max_level or next_nodes > max_nodes:
            if prev is None:
                return BoxIntegral(value, np.inf, nodes, weights, level)
            err = float(np.max(np.abs(value - prev)))
            return BoxIntegral(value, err, nodes, weights, level)
        prev = value
        sub *= 2
