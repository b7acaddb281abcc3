"""Log-signatures of deterministic drivers: the backward Hausdorff ODE, the
jump-Magnus sweep and the level-by-level Magnus expansion.

All three run backwards from Ω_T = 0. Across a linear segment with increment x
the log-signature obeys dΩ/dθ = H(ad Ω)(x) in reversed local time θ; across a
jump it composes exactly, Ω_{u-} = BCH(ΔX_u, Ω_u).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import graded
from .lie_ops import AdSeries, ad_series_apply, bch
from .signature import CadlagPath
from .tensor_core import TruncatedTensor, _zeros, mpq


class ConvergenceError(RuntimeError):
    pass


@dataclass
class MagnusSolveReport:
    omega: TruncatedTensor
    steps: int
    estimated_error: float

    def __post_init__(self):
        if self.estimated_error < 0:
            raise ValueError("error estimate must be non-negative")


def _rk4_segment(omega: TruncatedTensor, x: TruncatedTensor, steps: int, H: AdSeries) -> TruncatedTensor:
    """Integrate dΩ/dθ = H(ad Ω)(x) over θ in [0, 1] with fixed-step RK4."""
    h = 1.0 / steps

    def f(w):
        return ad_series_apply(H, w, x)

    for _ in range(steps):
        k1 = f(omega)
        k2 = f(omega + k1.scale(h / 2))
        k3 = f(omega + k2.scale(h / 2))
        k4 = f(omega + k3.scale(h))
        omega = omega + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6)
    return omega


def _linear_sweep(pieces, omega: TruncatedTensor, steps: int, H: AdSeries) -> TruncatedTensor:
    for _, _, inc in reversed(pieces):
        omega = _rk4_segment(omega, inc.to_float(), steps, H)
    return omega


def hausdorff_solve(
    path: CadlagPath,
    t: float | None = None,
    T: float | None = None,
    tol: float = 1e-10,
    start_steps: int = 4,
    max_steps: int = 1 << 16,
    omega_T: TruncatedTensor | None = None,
) -> MagnusSolveReport:
    """Solve -dΩ_s = H(ad Ω_s) dX_s backwards from Ω_T (default 0) to t.

    Every linear segment gets the same number of RK4 steps; that number is
    doubled until the Richardson estimate |Ω_2n - Ω_n| / 15 drops below ``tol``.
    """
    t = path.t0 if t is None else t
    T = path.T if T is None else T
    pieces = path.pieces(t, T)
    if any(a == b for a, b, _ in pieces):
        raise ValueError("path has jumps; use jump_magnus")
    H = AdSeries.H(path.shape.N)
    end = TruncatedTensor.zero(path.shape) if omega_T is None else omega_T.to_float()
    if not pieces:
        return MagnusSolveReport(end, 0, 0.0)
    n = start_steps
    prev = _linear_sweep(pieces, end, n, H)
    while True:
        n *= 2
        if n > max_steps:
            raise ConvergenceError(f"RK4 did not reach tol={tol:g} with {max_steps} steps per segment")
        cur = _linear_sweep(pieces, end, n, H)
        err = cur.max_abs_diff(prev) / 15.0
        if err < tol:
            return MagnusSolveReport(cur, n * len(pieces), err)
        prev = cur


def jump_magnus(
    path: CadlagPath, t: float | None = None, T: float | None = None, tol: float = 1e-10
) -> TruncatedTensor:
    """Backward sweep: exact BCH across jumps, the Hausdorff ODE across linear stretches.

    Pure-jump paths stay in the path's scalar mode (exact in rational mode);
    any linear stretch switches the result to floats.
    """
    t = path.t0 if t is None else t
    T = path.T if T is None else T
    pieces = path.pieces(t, T)
    omega = TruncatedTensor.zero(path.shape, path.exact)
    run: list = []  # consecutive linear pieces, in time order

    def flush(omega):
        if not run:
            return omega
        sub = CadlagPath(path.shape, (), run[0][0], run[-1][1])
        rep = _solve_pieces(sub, list(run), omega, tol)
        run.clear()
        return rep

    for piece in reversed(pieces):
        a, b, inc = piece
        if a == b:
            omega = flush(omega)
            if not omega.exact and inc.exact:
                inc = inc.to_float()
            omega = bch(inc, omega)
        else:
            run.insert(0, piece)
    return flush(omega)


def _solve_pieces(sub, pieces, omega_T, tol) -> TruncatedTensor:
    H = AdSeries.H(sub.shape.N)
    end = omega_T.to_float()
    n = 4
    prev = _linear_sweep(pieces, end, n, H)
    while True:
        n *= 2
        if n > 1 << 16:
            raise ConvergenceError(f"RK4 did not reach tol={tol:g}")
        cur = _linear_sweep(pieces, end, n, H)
        if cur.max_abs_diff(prev) / 15.0 < tol:
            return cur
        prev = cur


# ---------------------------------------------------------------------------
# level-by-level expansion


@lru_cache(maxsize=None)
def _cumulative_lagrange(M: int) -> tuple[tuple, ...]:
    """C[j][i] = int_{j/M}^1 L_i(θ) dθ for Lagrange polynomials on nodes i/M, exactly."""
    nodes = [mpq(i, M) for i in range(M + 1)]
    C = [[mpq(0)] * (M + 1) for _ in range(M + 1)]
    for i in range(M + 1):
        # coefficients of L_i in the monomial basis, lowest degree first
        poly = [mpq(1)]
        denom = mpq(1)
        for k in range(M + 1):
            if k == i:
                continue
            poly = [mpq(0)] + poly  # times θ
            for p in range(len(poly) - 1):
                poly[p] -= nodes[k] * poly[p + 1]
            denom *= nodes[i] - nodes[k]
        poly = [c / denom for c in poly]

        def anti(x):
            return sum(c * x ** (p + 1) / (p + 1) for p, c in enumerate(poly))

        top = anti(mpq(1))
        for j in range(M + 1):
            C[j][i] = top - anti(nodes[j])
    return tuple(tuple(row) for row in C)


def magnus_levels(path: CadlagPath, t: float | None = None, T: float | None = None, nmax: int | None = None):
    """Ω_t(T) from the graded recursion
        Ω^(n)_t = X^(n)_{t,T} + sum over (t,T] of HMag¹ + HJmp,
    returned as a TruncatedTensor (levels above ``nmax`` left at 0).

    Within a linear segment Ω^(j) is a polynomial of degree <= j in local time,
    so the HMag¹ Stieltjes integral is integrated exactly on N+1 equispaced
    nodes. Jumps use the H-form jump term with Ω_u and Ω_{u-}.
    """
    t = path.t0 if t is None else t
    T = path.T if T is None else T
    shape, exact, d = path.shape, path.exact, path.shape.d
    N = shape.N if nmax is None else min(nmax, shape.N)
    M = max(shape.N, 1)
    C = _cumulative_lagrange(M)
    if not exact:
        C = tuple(tuple(float(c) for c in row) for row in C)
    one_minus = [mpq(M - j, M) if exact else (M - j) / M for j in range(M + 1)]

    def state():
        return [_zeros(d**k, exact) for k in range(shape.N + 1)]

    pieces = path.pieces(t, T)
    # nodes[i] lists the states of piece i from left to right; the last entry is
    # shared with the first entry of piece i+1.
    right = state()
    nodes = [None] * len(pieces)
    for i in range(len(pieces) - 1, -1, -1):
        a, b, _ = pieces[i]
        inner = [state() for _ in range(M if a != b else 1)]
        nodes[i] = inner + [right]
        right = nodes[i][0]

    for n in range(1, N + 1):
        for i in range(len(pieces) - 1, -1, -1):
            a, b, inc = pieces[i]
            x = graded._Levels(inc.levels)
            states = nodes[i]
            R = states[-1]
            if a == b:
                L = states[0]
                val = R[n] + inc.levels[n]
                if n >= 2:
                    kb = graded._Levels(L)
                    val = val + graded.hmag1(kb, x, n, d, exact) + graded.hjmp(x, graded._Levels(R), kb, n, d, exact)
                L[n] = val
                continue
            if n >= 2:
                f = [graded.hmag1(graded._Levels(s), x, n, d, exact) for s in states]
            for j in range(M):
                val = R[n] + one_minus[j] * inc.levels[n]
                if n >= 2:
                    for q in range(M + 1):
                        if C[j][q] != 0:
                            val = val + C[j][q] * f[q]
                states[j][n] = val
    first = nodes[0][0] if pieces else state()
    return TruncatedTensor._wrap(shape, first, exact)


def magnus_expansion_terms(path: CadlagPath, n: int, t: float | None = None, T: float | None = None) -> np.ndarray:
    """Level-n component of the Magnus expansion (lower levels are computed on the way)."""
    if not 1 <= n <= path.shape.N:
        raise ValueError(f"level {n} outside 1..{path.shape.N}")
    return magnus_levels(path, t, T, nmax=n).levels[n]
