"""Composite Gauss–Legendre rules with panel doubling.

Two tools live here. :func:`integrate` handles plain (possibly vector-valued,
possibly nested) integrals. :class:`BackwardGrid` supports backward equations
of the form ``k(t) = int_t^T f(u, k(u)) du`` solved level by level: values are
kept at the Gauss nodes of each panel and integrated from every node to the
panel end through the degree-7 interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg

ORDER = 8
DEFAULT_TOL = 1e-10
MAX_PANELS = 4096


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def reference_rule(order: int = ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on [0, 1]."""
    x, w = npleg.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def composite_rule(panels: int, order: int = ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [0, 1] with equal panels."""
    x, w = reference_rule(order)
    left = np.arange(panels) / panels
    nodes = (left[:, None] + x[None, :] / panels).ravel()
    weights = np.tile(w / panels, panels)
    return nodes, weights


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    start: int = 1,
    max_panels: int = MAX_PANELS,
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    """int_a^b f(u) du for f vectorized over u (returns shape f(u).shape[1:]).

    Panels are doubled until successive results differ by less than ``tol``
    in every component. Interior ``breakpoints`` (kinks or jumps of f) split
    the interval so that each piece is integrated separately.
    """
    cuts = [c for c in sorted(set(breakpoints)) if a < c < b]
    if cuts:
        edges = [a, *cuts, b]
        return sum(integrate(f, lo, hi, tol, start, max_panels) for lo, hi in zip(edges[:-1], edges[1:]))
    if b == a:
        out = np.asarray(f(np.array([a])))
        return np.zeros(out.shape[1:])

    def rule(panels):
        x, w = composite_rule(panels)
        u = a + (b - a) * x
        vals = np.asarray(f(u))
        return (b - a) * np.tensordot(w, vals, axes=(0, 0))

    return converge(rule, tol, start, max_panels)


def converge(rule: Callable[[int], np.ndarray], tol: float, start: int = 1, max_panels: int = MAX_PANELS):
    panels = start
    prev = np.asarray(rule(panels))
    while True:
        panels *= 2
        if panels > max_panels:
            raise QuadratureError(f"no convergence to {tol:g} with {max_panels} panels")
        cur = np.asarray(rule(panels))
        if np.max(np.abs(cur - prev), initial=0.0) < tol:
            return cur
        prev = cur


@lru_cache(maxsize=None)
def _cumulative_matrix(order: int = ORDER) -> np.ndarray:
    """C[i, j] = int_{x_i}^1 L_j(s) ds for the Lagrange basis at the reference nodes."""
    x, _ = reference_rule(order)
    y = 2.0 * x - 1.0
    V = npleg.legvander(y, order - 1)
    Vinv = np.linalg.inv(V)
    C = np.zeros((order, order))
    for k in range(order):
        e = np.zeros(order)
        e[k] = 1.0
        anti = npleg.legint(e)  # antiderivative in y
        F = npleg.legval(1.0, anti) - npleg.legval(y, anti)  # int_{y_i}^1 P_k dy
        C[:, :] += np.outer(F / 2.0, Vinv[k, :])
    return C


@dataclass
class BackwardGrid:
    """Gauss nodes on [t, T] split at breakpoints, each piece into equal panels."""

    t: float
    T: float
    panels: int
    breakpoints: Sequence[float] = ()

    def __post_init__(self):
        cuts = sorted({self.t, self.T, *[b for b in self.breakpoints if self.t < b < self.T]})
        x, _ = reference_rule()
        starts, widths = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            h = (b - a) / self.panels
            for p in range(self.panels):
                starts.append(a + p * h)
                widths.append(h)
        self.starts = np.array(starts)
        self.widths = np.array(widths)
        self.nodes = (self.starts[:, None] + self.widths[:, None] * x[None, :])  # (P, ORDER)

    @property
    def flat_nodes(self) -> np.ndarray:
        return self.nodes.ravel()

    def cumulative(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Given f at the nodes (shape (P, ORDER, ...)), return
        (int_{node}^T f at every node, int_t^T f)."""
        _, w = reference_rule()
        C = _cumulative_matrix()
        extra = (1,) * (values.ndim - 2)
        within = np.einsum("ij,pj...->pi...", C, values) * self.widths.reshape((-1, 1) + extra)
        full = np.einsum("j,pj...->p...", w, values) * self.widths.reshape((-1,) + extra)
        # integral over all panels strictly to the right of panel p
        right = np.cumsum(full[::-1], axis=0)[::-1]
        right = np.concatenate([right[1:], np.zeros_like(right[:1])], axis=0)
        return within + right[:, None], right[0] + full[0] if len(full) else np.zeros(values.shape[2:])


def solve_backward(
    step: Callable[[BackwardGrid], np.ndarray],
    t: float,
    T: float,
    breakpoints: Sequence[float] = (),
    tol: float = DEFAULT_TOL,
    max_panels: int = MAX_PANELS,
):
    """Run ``step(grid)`` (which returns the quantity of interest at t) on doubling grids."""
    if T < t:
        raise ValueError(f"need t <= T, got t={t}, T={T}")
    return converge(lambda p: step(BackwardGrid(t, T, p, breakpoints)), tol, 1, max_panels)
