"""Multi-index sums over compositions ℓ = (l_1, ..., l_k) of a level n.

These evaluate the level-n terms of the cumulant and Magnus recursions from
homogeneous components. Inputs are per-level coefficient arrays (``x.levels``),
so index ``l`` of a list holds the level-l component.

Jump terms come from projecting exp(ΔX) exp(κ_u) exp(-κ_{u-}) to level n. The
factor ΔX^a κ_u^b (-κ_{u-})^c carries weight (-1)^c / (a! b! c!); with the
split points 0 <= m <= j <= k this is (-1)^(k-j) / (m! (j-m)! (k-j)!).
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Sequence

import numpy as np

from .lie_ops import bernoulli_numbers
from .tensor_core import _sym_product_table, _zeros, multisets, ratio


@lru_cache(maxsize=None)
def compositions(n: int, k: int | None = None) -> tuple[tuple[int, ...], ...]:
    """Ordered tuples of positive integers summing to n (with exactly k parts if given)."""
    if n == 0:
        return ((),) if k in (None, 0) else ()
    out = []
    for first in range(1, n + 1):
        for rest in compositions(n - first, None if k is None else k - 1):
            if k is None or len(rest) == k - 1:
                out.append((first,) + rest)
    return tuple(out)


def _nonzero(arr) -> bool:
    return bool(np.any(arr != 0))


def hprod(arrs: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenation product of homogeneous components."""
    out = arrs[0]
    for a in arrs[1:]:
        out = np.multiply.outer(out, a).ravel()
    return out


def hbracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.multiply.outer(a, b).ravel() - np.multiply.outer(b, a).ravel()


def ad_chain(factors: Sequence[np.ndarray], y: np.ndarray) -> np.ndarray:
    """ad f_1 ad f_2 ... ad f_k (y) on homogeneous components."""
    r = y
    for f in reversed(factors):
        r = hbracket(f, r)
    return r


class _Levels:
    """Per-level view with cheap zero tests."""

    def __init__(self, levels: Sequence[np.ndarray]):
        self.levels = levels
        self.nz = [_nonzero(a) for a in levels]

    def __getitem__(self, l):
        return self.levels[l]


def _as_levels(x) -> _Levels:
    return x if isinstance(x, _Levels) else _Levels(x)


def mag_G(kb, dk, n: int, d: int, exact: bool) -> np.ndarray:
    """sum_{|ℓ|>=2, ||ℓ||=n} (1/k!) ad kb^(l2) ... ad kb^(lk) (dk^(l1)) for one jump."""
    kb, dk = _as_levels(kb), _as_levels(dk)
    out = _zeros(d**n, exact)
    for k in range(2, n + 1):
        c = ratio(1, math.factorial(k), exact)
        for ell in compositions(n, k):
            if not dk.nz[ell[0]] or not all(kb.nz[l] for l in ell[1:]):
                continue
            out = out + c * ad_chain([kb[l] for l in ell[1:]], dk[ell[0]])
    return out


def jmp_G(dx, ka, kb, n: int, d: int, exact: bool) -> np.ndarray:
    """Jump term of the G-form recursion at one jump, level n.

    sum over ℓ with |ℓ| = k >= 2 of
      sum_{0<=m<=j<=k} (-1)^(k-j) ΔX^(l1..lm) κ_u^(l_{m+1}..l_j) κ_{u-}^(l_{j+1}..l_k) / (m!(j-m)!(k-j)!)
      - (1/k!) ad κ_{u-}^(l2) ... ad κ_{u-}^(lk) (Δκ^(l1)).
    """
    dx, ka, kb = _as_levels(dx), _as_levels(ka), _as_levels(kb)
    out = _zeros(d**n, exact)
    for k in range(2, n + 1):
        for ell in compositions(n, k):
            for m in range(k + 1):
                if not all(dx.nz[l] for l in ell[:m]):
                    continue
                for j in range(m, k + 1):
                    srcs = [dx] * m + [ka] * (j - m) + [kb] * (k - j)
                    if not all(s.nz[l] for s, l in zip(srcs, ell)):
                        continue
                    c = ratio(
                        (-1) ** (k - j),
                        math.factorial(m) * math.factorial(j - m) * math.factorial(k - j),
                        exact,
                    )
                    out = out + c * hprod([s[l] for s, l in zip(srcs, ell)])
    dk = _Levels([a - b for a, b in zip(ka.levels, kb.levels)])
    return out - mag_G(kb, dk, n, d, exact)


def _bernoulli_weight(k: int, exact: bool):
    b = bernoulli_numbers(max(k, 1))[k] / math.factorial(k)
    return b if exact else float(b)


def hmag1(kb, dx, n: int, d: int, exact: bool) -> np.ndarray:
    """sum_{|ℓ|>=2, ||ℓ||=n} B_{k-1}/(k-1)! ad kb^(l2) ... ad kb^(lk) (dx^(l1))."""
    kb, dx = _as_levels(kb), _as_levels(dx)
    out = _zeros(d**n, exact)
    for k in range(2, n + 1):
        c = _bernoulli_weight(k - 1, exact)
        if c == 0:
            continue
        for ell in compositions(n, k):
            if not dx.nz[ell[0]] or not all(kb.nz[l] for l in ell[1:]):
                continue
            out = out + c * ad_chain([kb[l] for l in ell[1:]], dx[ell[0]])
    return out


def hjmp(dx, ka, kb, n: int, d: int, exact: bool) -> np.ndarray:
    """Jump term of the H-form recursion at one jump, level n.

    The level-n part, over |ℓ| = k >= 2, of H(ad κ_{u-})(exp(ΔX) exp(κ_u) exp(-κ_{u-}) - 1 - ΔX):
      sum_{1<=i<=k} sum_{0<=m<=j<=i} (-1)^(i-j) B_{k-i}/(k-i)!
        ad κ_{u-}^(l_{i+1}) ... ad κ_{u-}^(l_k) (ΔX^(l1..lm) κ_u^(..l_j) κ_{u-}^(..l_i)) / (m!(j-m)!(i-j)!)
    with the single-factor ΔX term (i = m = 1) left out.
    """
    dx, ka, kb = _as_levels(dx), _as_levels(ka), _as_levels(kb)
    out = _zeros(d**n, exact)
    for k in range(2, n + 1):
        for ell in compositions(n, k):
            for i in range(1, k + 1):
                wb = _bernoulli_weight(k - i, exact)
                if wb == 0 or not all(kb.nz[l] for l in ell[i:]):
                    continue
                outer = [kb[l] for l in ell[i:]]
                for m in range(i + 1):
                    if i == 1 and m == 1:
                        continue
                    if not all(dx.nz[l] for l in ell[:m]):
                        continue
                    for j in range(m, i + 1):
                        srcs = [dx] * m + [ka] * (j - m) + [kb] * (i - j)
                        if not all(s.nz[l] for s, l in zip(srcs, ell[:i])):
                            continue
                        c = wb * ratio(
                            (-1) ** (i - j),
                            math.factorial(m) * math.factorial(j - m) * math.factorial(i - j),
                            exact,
                        )
                        inner = hprod([s[l] for s, l in zip(srcs, ell[:i])])
                        out = out + c * ad_chain(outer, inner)
    return out


# ---------------------------------------------------------------------------
# symmetric algebra


def sym_hprod(arrs: Sequence[np.ndarray], degs: Sequence[int], d: int, exact: bool) -> np.ndarray:
    out, deg = arrs[0], degs[0]
    for a, q in zip(arrs[1:], degs[1:]):
        table = _sym_product_table(d, deg, q)
        res = _zeros(len(multisets(d, deg + q)), exact)
        vals = np.multiply.outer(out, a)
        if exact:
            for idx, v in zip(table.ravel(), vals.ravel()):
                res[idx] += v
        else:
            np.add.at(res, table.ravel(), vals.ravel())
        out, deg = res, deg + q
    return out


def sym_jump(dk, n: int, d: int, exact: bool) -> np.ndarray:
    """sum_{k=2}^n (1/k!) sum_{||ℓ||=n, |ℓ|=k} ΔK^(l1) ... ΔK^(lk) in S(R^d)."""
    dk = _as_levels(dk)
    out = _zeros(len(multisets(d, n)), exact)
    for k in range(2, n + 1):
        c = ratio(1, math.factorial(k), exact)
        for ell in compositions(n, k):
            if not all(dk.nz[l] for l in ell):
                continue
            out = out + c * sym_hprod([dk[l] for l in ell], ell, d, exact)
    return out
