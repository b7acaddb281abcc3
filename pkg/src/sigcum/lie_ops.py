"""Brackets, ad-power series and the operators G, H, Q, Id⊙G, plus BCH.

All series are evaluated in the truncated algebra, where ``(ad x)^k(y)`` has no
component below level ``k + 1`` for ``x, y`` in T_0. Coefficients ``a_k`` with
``k >= N`` therefore never matter and are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .tensor_core import (
    AlgebraShape,
    TruncatedTensor,
    _zeros,
    concat_mul,
    exp_trunc,
    log_trunc,
    mpq,
    ratio,
)


def lie_bracket(x: TruncatedTensor, y: TruncatedTensor) -> TruncatedTensor:
    return concat_mul(x, y) - concat_mul(y, x)


# ---------------------------------------------------------------------------
# scalar coefficient sequences


@lru_cache(maxsize=None)
def bernoulli_numbers(n: int) -> tuple:
    """B_0..B_n as exact rationals with the convention B_1 = -1/2.

    Akiyama–Tanigawa produces B_1 = +1/2; the sign is flipped afterwards.
    """
    out = []
    a = [mpq(0)] * (n + 1)
    for m in range(n + 1):
        a[m] = mpq(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        out.append(a[0])
    if n >= 1:
        out[1] = -out[1]
    return tuple(out)


@dataclass(frozen=True)
class AdSeries:
    """Formal power series sum_k a_k z^k, to be evaluated at z = ad x."""

    coefficients: tuple

    def coeff(self, k: int, exact: bool):
        if k >= len(self.coefficients):
            return mpq(0) if exact else 0.0
        c = self.coefficients[k]
        return mpq(c) if exact else float(c)

    @classmethod
    def G(cls, N: int) -> "AdSeries":
        return cls(tuple(mpq(1, math.factorial(k + 1)) for k in range(max(N, 1))))

    @classmethod
    def H(cls, N: int) -> "AdSeries":
        B = bernoulli_numbers(max(N, 1))
        return cls(tuple(B[k] / math.factorial(k) for k in range(max(N, 1))))

    @classmethod
    def exp(cls, N: int) -> "AdSeries":
        return cls(tuple(mpq(1, math.factorial(k)) for k in range(max(N, 1))))

    @classmethod
    def identity(cls) -> "AdSeries":
        return cls((mpq(1),))


def ad_series_apply(s: AdSeries, x: TruncatedTensor, y: TruncatedTensor) -> TruncatedTensor:
    """sum_{k<N} a_k (ad x)^k (y), Horner style: a_0 y + [x, a_1 y + [x, ...]]."""
    x._check(y)
    K = min(len(s.coefficients), max(x.N, 1)) - 1
    r = y.scale(s.coeff(K, y.exact))
    for k in range(K - 1, -1, -1):
        r = y.scale(s.coeff(k, y.exact)) + lie_bracket(x, r)
    return r


def ad_powers(x: TruncatedTensor, y: TruncatedTensor, kmax: int) -> list[TruncatedTensor]:
    """[y, (ad x) y, ..., (ad x)^kmax y]."""
    out = [y]
    for _ in range(kmax):
        out.append(lie_bracket(x, out[-1]))
    return out


def op_G(x: TruncatedTensor, v: TruncatedTensor) -> TruncatedTensor:
    """G(ad x)(v) with G(z) = (e^z - 1)/z."""
    return ad_series_apply(AdSeries.G(x.N), x, v)


def op_H(x: TruncatedTensor, v: TruncatedTensor) -> TruncatedTensor:
    """H(ad x)(v) with H(z) = z/(e^z - 1), the inverse of G."""
    return ad_series_apply(AdSeries.H(x.N), x, v)


# ---------------------------------------------------------------------------
# outer tensors (elements of T ⊗ T)


class OuterTensor:
    """Bi-graded element of T ⊗ T with blocks (l1, l2), l1, l2 >= 1, l1 + l2 <= N.

    Block (l1, l2) is a d^l1 x d^l2 array; entry [i, j] is the coefficient of
    e_{w_i} ⊗ e_{w_j} in storage word order.
    """

    __slots__ = ("shape", "blocks", "exact")

    def __init__(self, shape: AlgebraShape, blocks: dict | None = None, exact: bool = False):
        self.shape = shape
        self.exact = exact
        self.blocks = {}
        for (l1, l2), arr in (blocks or {}).items():
            if l1 < 1 or l2 < 1 or l1 + l2 > shape.N:
                raise ValueError(f"level pair {(l1, l2)} not stored for N={shape.N}")
            arr = np.asarray(arr, dtype=object if exact else np.float64)
            if arr.shape != (shape.d**l1, shape.d**l2):
                raise ValueError(f"block {(l1, l2)} has shape {arr.shape}")
            self.blocks[(l1, l2)] = arr

    @classmethod
    def outer(cls, x: TruncatedTensor, y: TruncatedTensor) -> "OuterTensor":
        """x ⊗ y restricted to the stored level pairs."""
        x._check(y)
        blocks = {}
        for l1 in range(1, x.N):
            for l2 in range(1, x.N - l1 + 1):
                a, b = x.levels[l1], y.levels[l2]
                if a.any() and b.any():
                    blocks[(l1, l2)] = np.multiply.outer(a, b)
        return cls(x.shape, blocks, x.exact)

    def __add__(self, other: "OuterTensor") -> "OuterTensor":
        blocks = dict(self.blocks)
        for key, arr in other.blocks.items():
            blocks[key] = blocks[key] + arr if key in blocks else arr
        return OuterTensor(self.shape, blocks, self.exact)

    def scale(self, c) -> "OuterTensor":
        return OuterTensor(self.shape, {k: v * c for k, v in self.blocks.items()}, self.exact)

    def transpose(self) -> "OuterTensor":
        return OuterTensor(self.shape, {(b, a): v.T for (a, b), v in self.blocks.items()}, self.exact)

    def is_symmetric(self) -> bool:
        t = self.transpose()
        keys = set(self.blocks) | set(t.blocks)
        for k in keys:
            a = self.blocks.get(k)
            b = t.blocks.get(k)
            if a is None:
                a = np.zeros_like(b)
            if b is None:
                b = np.zeros_like(a)
            if not np.array_equal(a, b) and not (not self.exact and np.allclose(a, b, atol=1e-14)):
                return False
        return True

    def legs(self):
        """Yield (left basis tensor e_w, right tensor sum_j A[w, j] e_{w_j}) pairs."""
        shape, exact = self.shape, self.exact
        for (l1, l2), arr in sorted(self.blocks.items()):
            for i in range(arr.shape[0]):
                row = arr[i]
                if not row.any():
                    continue
                left = [_zeros(shape.d**k, exact) for k in range(shape.N + 1)]
                left[l1][i] = mpq(1) if exact else 1.0
                right = [_zeros(shape.d**k, exact) for k in range(shape.N + 1)]
                right[l2] = np.array(row, dtype=object if exact else np.float64)
                yield (
                    TruncatedTensor._wrap(shape, left, exact),
                    TruncatedTensor._wrap(shape, right, exact),
                )

    def multiply(self) -> TruncatedTensor:
        """The multiplication map m(a ⊗ b) = a b."""
        return self.apply_legs(lambda a: a, lambda b: b)

    def apply_legs(
        self,
        left: Callable[[TruncatedTensor], TruncatedTensor],
        right: Callable[[TruncatedTensor], TruncatedTensor],
    ) -> TruncatedTensor:
        """m((L ⊗ R)(A)) for linear maps L, R on T."""
        total = TruncatedTensor.zero(self.shape, self.exact)
        for a, b in self.legs():
            total = total + concat_mul(left(a), right(b))
        return total


def op_Q(x: TruncatedTensor, A: OuterTensor, check_symmetric: bool = False) -> TruncatedTensor:
    """Q(ad x)(A) = sum_{n,m} 2 m((ad x)^n ⊗ (ad x)^m (A)) / ((n+1)! m! (n+m+2))."""
    if check_symmetric and not A.is_symmetric():
        raise ValueError("op_Q expects a symmetric outer tensor (A^{w1,w2} = A^{w2,w1})")
    N, exact = x.N, x.exact
    K = max(N - 1, 0)
    coeff = {
        (n, m): ratio(2, math.factorial(n + 1) * math.factorial(m) * (n + m + 2), exact)
        for n in range(K + 1)
        for m in range(K + 1)
        if n + m <= K
    }
    total = TruncatedTensor.zero(x.shape, exact)
    for a, b in A.legs():
        pa = ad_powers(x, a, K)
        pb = ad_powers(x, b, K)
        for (n, m), c in coeff.items():
            total = total + concat_mul(pa[n], pb[m]).scale(c)
    return total


def op_IdG(x: TruncatedTensor, A: OuterTensor) -> TruncatedTensor:
    """m((Id ⊗ G(ad x))(A))."""
    return A.apply_legs(lambda a: a, lambda b: op_G(x, b))


# ---------------------------------------------------------------------------
# BCH


def bch(*xs: TruncatedTensor) -> TruncatedTensor:
    """log(exp(x_1) ... exp(x_n)) in the truncated algebra."""
    if not xs:
        raise ValueError("bch needs at least one argument")
    g = exp_trunc(xs[0])
    for x in xs[1:]:
        g = concat_mul(g, exp_trunc(x))
    return log_trunc(g)


class _Poly:
    """Tensor-valued polynomial in a scalar t: sum_p coeffs[p] t^p."""

    def __init__(self, coeffs: list[TruncatedTensor]):
        self.coeffs = coeffs

    def mul(self, other: "_Poly", max_deg: int) -> "_Poly":
        shape, exact = self.coeffs[0].shape, self.coeffs[0].exact
        out = [TruncatedTensor.zero(shape, exact) for _ in range(max_deg + 1)]
        for p, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            for q, b in enumerate(other.coeffs):
                if p + q > max_deg or b.is_zero():
                    continue
                out[p + q] = out[p + q] + concat_mul(a, b)
        return _Poly(out)

    def sub(self, other: "_Poly") -> "_Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        zero = TruncatedTensor.zero(self.coeffs[0].shape, self.coeffs[0].exact)
        get = lambda c, i: c[i] if i < len(c) else zero  # noqa: E731
        return _Poly([get(self.coeffs, i) - get(other.coeffs, i) for i in range(n)])


def _exp_poly(x: TruncatedTensor, sign: int) -> _Poly:
    """exp(sign * t * x) as a polynomial in t."""
    coeffs = [TruncatedTensor.one(x.shape, x.exact)]
    for k in range(1, x.N + 1):
        coeffs.append(concat_mul(coeffs[-1], x).scale(ratio(sign, k, x.exact)))
    return _Poly(coeffs)


def bch_integral(x1: TruncatedTensor, x2: TruncatedTensor) -> TruncatedTensor:
    """x2 + int_0^1 Psi(exp(ad t x1) o exp(ad x2))(x1) dt, Psi(z) = log(z)/(z - 1).

    The operator Z = exp(ad t x1) o exp(ad x2) is conjugation by
    g(t) = exp(t x1) exp(x2). Psi(Z) = sum_k (-1)^k (Z - 1)^k / (k + 1) and Z - 1
    raises the tensor level, so the series stops at k = N - 1. Every coefficient
    is a polynomial in t of degree <= N; it is integrated term by term.
    """
    x1._check(x2)
    N, exact, shape = x1.N, x1.exact, x1.shape
    e2, e2inv = exp_trunc(x2), exp_trunc(-x2)
    left = _exp_poly(x1, 1).mul(_Poly([e2]), N)
    right = _Poly([e2inv]).mul(_exp_poly(x1, -1), N)

    def z_minus_one(p: _Poly) -> _Poly:
        return left.mul(p, N).mul(right, N).sub(p)

    term = _Poly([x1])
    acc = _Poly([x1])
    for k in range(1, max(N, 1)):
        term = z_minus_one(term)
        c = ratio((-1) ** k, k + 1, exact)
        acc = _Poly(
            [
                (acc.coeffs[i] if i < len(acc.coeffs) else TruncatedTensor.zero(shape, exact))
                + (term.coeffs[i].scale(c) if i < len(term.coeffs) else TruncatedTensor.zero(shape, exact))
                for i in range(max(len(acc.coeffs), len(term.coeffs)))
            ]
        )
    integral = TruncatedTensor.zero(shape, exact)
    for p, c in enumerate(acc.coeffs):
        integral = integral + c.scale(ratio(1, p + 1, exact))
    return x2 + integral


# ---------------------------------------------------------------------------
# Dynkin map


@lru_cache(maxsize=None)
def _dynkin_matrix(d: int, n: int) -> np.ndarray:
    """Integer matrix of e_{i1..in} -> [..[[e_i1, e_i2], e_i3], .., e_in] on level n."""
    if n == 1:
        return np.eye(d, dtype=np.int64)
    prev = _dynkin_matrix(d, n - 1)
    size_prev = d ** (n - 1)
    D = np.zeros((d**n, d**n), dtype=np.int64)
    rows = np.arange(size_prev)
    for w in range(size_prev):
        col_prev = prev[:, w]
        for a in range(d):
            col = np.zeros(d**n, dtype=np.int64)
            col[rows * d + a] += col_prev  # D(w) e_a
            col[a * size_prev + rows] -= col_prev  # e_a D(w)
            D[:, w * d + a] = col
    return D


def dynkin_map(x: TruncatedTensor) -> TruncatedTensor:
    """Apply the left-bracketing map levelwise. On a Lie element, level n is scaled by n."""
    out = [_zeros(1, x.exact)]
    for n in range(1, x.N + 1):
        D = _dynkin_matrix(x.d, n)
        lev = x.levels[n]
        if x.exact:
            out.append(np.array([sum((int(c) * v for c, v in zip(row, lev) if c), mpq(0)) for row in D], dtype=object))
        else:
            out.append(D @ lev)
    return TruncatedTensor._wrap(x.shape, out, x.exact)


def is_lie(x: TruncatedTensor, atol: float = 0.0) -> bool:
    """Dynkin–Specht–Wever test: D(x^(n)) = n x^(n) for every level n >= 1."""
    if x.scalar != 0:
        return False
    Dx = dynkin_map(x)
    for n in range(1, x.N + 1):
        diff = Dx.levels[n] - n * x.levels[n]
        if x.exact:
            if any(c != 0 for c in diff):
                return False
        elif np.max(np.abs(diff), initial=0.0) > atol:
            return False
    return True


def ad_product(factors: Sequence[TruncatedTensor], y: TruncatedTensor) -> TruncatedTensor:
    """ad f_1 ∘ ad f_2 ∘ ... ∘ ad f_k (y)."""
    r = y
    for f in reversed(factors):
        r = lie_bracket(f, r)
    return r
