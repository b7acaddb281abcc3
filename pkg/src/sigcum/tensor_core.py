"""Dense graded arithmetic in the truncated tensor algebra and its symmetric quotient.

A :class:`TruncatedTensor` stores one coefficient array per level ``k = 0..N``.
The word ``i_1 ... i_k`` (letters in ``1..d``) lives at index
``sum_j (i_j - 1) * d**(k - j)``, i.e. the base-``d`` positional code with the
first letter most significant. This order is frozen: serialized tensors rely on it.

Two scalar modes are supported. ``float`` values use ``float64`` arrays. ``exact``
values use object arrays of ``gmpy2.mpq`` rationals, so algebraic identities can
be checked with zero residual. Modes never mix inside one operation.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import gmpy2
import numpy as np

mpq = gmpy2.mpq

DEFAULT_MAX_COEFFS = 10_000_000


class MemoryGuardError(RuntimeError):
    """Raised when an algebra would exceed the configured coefficient budget."""


def max_coeffs() -> int:
    raw = os.environ.get("SIGCUM_MAX_COEFFS")
    return int(raw) if raw else DEFAULT_MAX_COEFFS


@dataclass(frozen=True)
class AlgebraShape:
    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"alphabet size must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"truncation level must be >= 0, got {self.N}")
        if self.total > max_coeffs():
            raise MemoryGuardError(
                f"d={self.d}, N={self.N} needs {self.total} coefficients "
                f"(limit {max_coeffs()}, set SIGCUM_MAX_COEFFS to override)"
            )

    def size(self, k: int) -> int:
        return self.d**k

    @property
    def total(self) -> int:
        return sum(self.d**k for k in range(self.N + 1))


# ---------------------------------------------------------------------------
# scalars


def to_exact(value) -> "mpq":
    """Convert ints, floats, Fractions, mpq or strings like ``"3/4"`` to ``mpq``."""
    if isinstance(value, str):
        return mpq(value.strip())
    if isinstance(value, np.integer):
        return mpq(int(value))
    if isinstance(value, np.floating):
        return mpq(float(value))
    return mpq(value)


def _array(values, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(len(values), dtype=object)
        for i, v in enumerate(values):
            out[i] = to_exact(v)
        return out
    return np.asarray(values, dtype=np.float64).copy()


def _zeros(n: int, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(n, dtype=object)
        out[:] = [mpq(0)] * n
        return out
    return np.zeros(n)


def ratio(p: int, q: int, exact: bool):
    """The scalar p/q in the requested mode."""
    return mpq(p, q) if exact else p / q


def _coerce_scalar(c, exact: bool):
    if exact:
        if isinstance(c, float):
            raise TypeError("float scalar used with an exact tensor; pass an int or rational")
        return to_exact(c)
    return float(c)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# words


def word_index(word: Sequence[int], d: int) -> int:
    idx = 0
    for letter in word:
        if not 1 <= letter <= d:
            raise ValueError(f"letter {letter} outside alphabet 1..{d}")
        idx = idx * d + (letter - 1)
    return idx


def index_word(index: int, k: int, d: int) -> tuple[int, ...]:
    letters = []
    for _ in range(k):
        index, r = divmod(index, d)
        letters.append(r + 1)
    return tuple(reversed(letters))


def words(d: int, k: int) -> Iterator[tuple[int, ...]]:
    """Words of length k in storage order (lexicographic in the letters)."""
    return itertools.product(range(1, d + 1), repeat=k)


def word_label(word: Sequence[int], d: int) -> str:
    if not word:
        return "()"
    sep = "" if d < 10 else ","
    return sep.join(str(i) for i in word)


def parse_word(label: str) -> tuple[int, ...]:
    label = label.strip()
    if label in ("", "()", "0"):
        return ()
    if "," in label:
        return tuple(int(p) for p in label.split(","))
    return tuple(int(c) for c in label)


# ---------------------------------------------------------------------------
# truncated tensors


class TruncatedTensor:
    """Element of the truncated tensor algebra T^N(R^d). Immutable."""

    __slots__ = ("shape", "levels", "exact")

    def __init__(self, shape: AlgebraShape, levels: Sequence, exact: bool = False):
        if len(levels) != shape.N + 1:
            raise ValueError(f"expected {shape.N + 1} levels, got {len(levels)}")
        arrs = []
        for k, lev in enumerate(levels):
            arr = _array(list(np.ravel(lev)), exact) if exact else np.array(lev, dtype=np.float64).ravel()
            if arr.shape[0] != shape.d**k:
                raise ValueError(f"level {k} must have {shape.d**k} coefficients, got {arr.shape[0]}")
            arrs.append(_freeze(arr))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "levels", tuple(arrs))
        object.__setattr__(self, "exact", bool(exact))

    @classmethod
    def _wrap(cls, shape: AlgebraShape, levels: Sequence[np.ndarray], exact: bool) -> "TruncatedTensor":
        # trusted fast path: arrays already have the right dtype and length
        obj = cls.__new__(cls)
        object.__setattr__(obj, "shape", shape)
        object.__setattr__(obj, "levels", tuple(_freeze(a) for a in levels))
        object.__setattr__(obj, "exact", exact)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("TruncatedTensor is immutable")

    # -- constructors --------------------------------------------------------
    @classmethod
    def zero(cls, shape: AlgebraShape, exact: bool = False) -> "TruncatedTensor":
        return cls._wrap(shape, [_zeros(shape.d**k, exact) for k in range(shape.N + 1)], exact)

    @classmethod
    def one(cls, shape: AlgebraShape, exact: bool = False) -> "TruncatedTensor":
        levels = [_zeros(shape.d**k, exact) for k in range(shape.N + 1)]
        levels[0][0] = mpq(1) if exact else 1.0
        return cls._wrap(shape, levels, exact)

    @classmethod
    def basis(cls, shape: AlgebraShape, word: Sequence[int] | str, coeff=1, exact: bool = False) -> "TruncatedTensor":
        if isinstance(word, str):
            word = parse_word(word)
        k = len(word)
        if k > shape.N:
            return cls.zero(shape, exact)
        levels = [_zeros(shape.d**j, exact) for j in range(shape.N + 1)]
        levels[k][word_index(word, shape.d)] = _coerce_scalar(coeff, exact)
        return cls._wrap(shape, levels, exact)

    @classmethod
    def from_words(cls, shape: AlgebraShape, coeffs: dict, exact: bool = False) -> "TruncatedTensor":
        """Build from a ``{word: coefficient}`` mapping (words as tuples or labels)."""
        levels = [_zeros(shape.d**j, exact) for j in range(shape.N + 1)]
        for w, c in coeffs.items():
            w = parse_word(w) if isinstance(w, str) else tuple(w)
            if len(w) <= shape.N:
                levels[len(w)][word_index(w, shape.d)] += _coerce_scalar(c, exact)
        return cls._wrap(shape, levels, exact)

    @classmethod
    def from_vector(cls, shape: AlgebraShape, v: Sequence, exact: bool = False) -> "TruncatedTensor":
        """Level-1 embedding of a vector in R^d (an element of T_0)."""
        levels = [_zeros(shape.d**j, exact) for j in range(shape.N + 1)]
        if shape.N >= 1:
            levels[1] = _array(list(v), exact)
            if levels[1].shape[0] != shape.d:
                raise ValueError(f"vector must have length {shape.d}")
        return cls._wrap(shape, levels, exact)

    @classmethod
    def group_like(cls, shape: AlgebraShape, levels: Sequence, exact: bool = False) -> "TruncatedTensor":
        """Constructor for the T_1 role (scalar slot forced to 1)."""
        t = cls(shape, levels, exact)
        if t.scalar != 1:
            raise ValueError("an element of T_1 must have scalar component 1")
        return t

    @classmethod
    def lie_like(cls, shape: AlgebraShape, levels: Sequence, exact: bool = False) -> "TruncatedTensor":
        """Constructor for the T_0 role (scalar slot forced to 0)."""
        t = cls(shape, levels, exact)
        if t.scalar != 0:
            raise ValueError("an element of T_0 must have scalar component 0")
        return t

    # -- accessors -----------------------------------------------------------
    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def N(self) -> int:
        return self.shape.N

    @property
    def scalar(self):
        return self.levels[0][0]

    def __getitem__(self, word) -> object:
        if isinstance(word, str):
            word = parse_word(word)
        word = tuple(word)
        if len(word) > self.N:
            raise IndexError(f"word {word} longer than truncation level {self.N}")
        return self.levels[len(word)][word_index(word, self.d)]

    def items(self, skip_zero: bool = True) -> Iterator[tuple[tuple[int, ...], object]]:
        """(word, coefficient) pairs ordered by level, then lexicographically."""
        for k, lev in enumerate(self.levels):
            for i, w in enumerate(words(self.d, k)):
                c = lev[i]
                if skip_zero and c == 0:
                    continue
                yield w, c

    def to_dict(self, skip_zero: bool = True) -> dict[str, object]:
        return {word_label(w, self.d): c for w, c in self.items(skip_zero)}

    # -- mode conversion -----------------------------------------------------
    def to_float(self) -> "TruncatedTensor":
        if not self.exact:
            return self
        return TruncatedTensor._wrap(self.shape, [np.array([float(c) for c in lev]) for lev in self.levels], False)

    def to_exact(self) -> "TruncatedTensor":
        if self.exact:
            return self
        return TruncatedTensor._wrap(self.shape, [_array(list(lev), True) for lev in self.levels], True)

    # -- arithmetic ----------------------------------------------------------
    def _check(self, other: "TruncatedTensor"):
        if not isinstance(other, TruncatedTensor):
            raise TypeError(f"expected TruncatedTensor, got {type(other).__name__}")
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
        if other.exact != self.exact:
            raise ValueError("scalar mode mismatch (exact vs float)")

    def __add__(self, other):
        self._check(other)
        return TruncatedTensor._wrap(self.shape, [a + b for a, b in zip(self.levels, other.levels)], self.exact)

    def __sub__(self, other):
        self._check(other)
        return TruncatedTensor._wrap(self.shape, [a - b for a, b in zip(self.levels, other.levels)], self.exact)

    def __neg__(self):
        return TruncatedTensor._wrap(self.shape, [-a for a in self.levels], self.exact)

    def scale(self, c) -> "TruncatedTensor":
        c = _coerce_scalar(c, self.exact)
        return TruncatedTensor._wrap(self.shape, [a * c for a in self.levels], self.exact)

    def __mul__(self, other):
        if isinstance(other, TruncatedTensor):
            return concat_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, c):
        if self.exact:
            return self.scale(mpq(1) / to_exact(c))
        return self.scale(1.0 / c)

    def __eq__(self, other):
        if not isinstance(other, TruncatedTensor):
            return NotImplemented
        if other.shape != self.shape or other.exact != self.exact:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))

    __hash__ = None

    def is_zero(self) -> bool:
        return all(not np.any(lev != 0) for lev in self.levels)

    def allclose(self, other: "TruncatedTensor", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        a, b = self.to_float(), other.to_float()
        return all(np.allclose(x, y, atol=atol, rtol=rtol) for x, y in zip(a.levels, b.levels))

    def max_abs_diff(self, other: "TruncatedTensor") -> float:
        a, b = self.to_float(), other.to_float()
        return max(float(np.max(np.abs(x - y))) for x, y in zip(a.levels, b.levels))

    def __repr__(self):
        terms = [f"{c}*e{word_label(w, self.d)}" for w, c in self.items()]
        mode = "exact" if self.exact else "float"
        return f"TruncatedTensor(d={self.d}, N={self.N}, {mode}: {' + '.join(terms) or '0'})"


# ---------------------------------------------------------------------------
# operations


def concat_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor (concatenation) product."""
    a._check(b)
    N = a.N
    out = []
    for n in range(N + 1):
        out.append(_level_product(a.levels, b.levels, n, a.exact))
    return TruncatedTensor._wrap(a.shape, out, a.exact)


def _level_product(al: Sequence[np.ndarray], bl: Sequence[np.ndarray], n: int, exact: bool) -> np.ndarray:
    acc = None
    for k in range(n + 1):
        x, y = al[k], bl[n - k]
        if not x.any() or not y.any():
            continue
        term = np.multiply.outer(x, y).ravel()
        acc = term if acc is None else acc + term
    if acc is None:
        d_n = al[n].shape[0] if n < len(al) else 0
        return _zeros(d_n, exact)
    return acc


def level_mul(a: TruncatedTensor, b: TruncatedTensor, n: int) -> np.ndarray:
    """Only the level-n coefficients of ``a*b``."""
    a._check(b)
    return _level_product(a.levels, b.levels, n, a.exact)


def project_level(x: TruncatedTensor, n: int) -> TruncatedTensor:
    if not 0 <= n <= x.N:
        raise ValueError(f"level {n} outside 0..{x.N}")
    levels = [lev if k == n else _zeros(len(lev), x.exact) for k, lev in enumerate(x.levels)]
    return TruncatedTensor._wrap(x.shape, levels, x.exact)


def truncate(x: TruncatedTensor, M: int) -> TruncatedTensor:
    if not 0 <= M <= x.N:
        raise ValueError(f"cannot truncate level {x.N} tensor to {M}")
    return TruncatedTensor._wrap(AlgebraShape(x.d, M), list(x.levels[: M + 1]), x.exact)


def extend(x: TruncatedTensor, M: int) -> TruncatedTensor:
    """Embed into a higher truncation level by zero padding."""
    if M < x.N:
        raise ValueError("use truncate() to lower the level")
    extra = [_zeros(x.d**k, x.exact) for k in range(x.N + 1, M + 1)]
    return TruncatedTensor._wrap(AlgebraShape(x.d, M), list(x.levels) + extra, x.exact)


def _require_scalar(x: TruncatedTensor, value: int, what: str):
    if x.scalar != value:
        raise ValueError(f"{what} requires scalar component {value}, got {x.scalar}")


def exp_trunc(x: TruncatedTensor) -> TruncatedTensor:
    """Truncated exponential T_0 -> T_1, by Horner: 1 + x(1 + x/2(1 + x/3(...)))."""
    _require_scalar(x, 0, "exp_trunc")
    one = TruncatedTensor.one(x.shape, x.exact)
    r = one
    for k in range(x.N, 0, -1):
        r = one + concat_mul(x, r).scale(ratio(1, k, x.exact))
    return r


def log_trunc(y: TruncatedTensor) -> TruncatedTensor:
    """Truncated logarithm T_1 -> T_0 via the alternating series in y - 1."""
    _require_scalar(y, 1, "log_trunc")
    z = y - TruncatedTensor.one(y.shape, y.exact)
    if y.N == 0:
        return z
    one = TruncatedTensor.one(y.shape, y.exact)
    r = one.scale(ratio((-1) ** (y.N + 1), y.N, y.exact))
    for k in range(y.N - 1, 0, -1):
        r = one.scale(ratio((-1) ** (k + 1), k, y.exact)) + concat_mul(z, r)
    return concat_mul(z, r)


def inverse_group(y: TruncatedTensor) -> TruncatedTensor:
    """Inverse of an element of T_1: sum_k (1 - y)^k."""
    _require_scalar(y, 1, "inverse_group")
    one = TruncatedTensor.one(y.shape, y.exact)
    z = one - y
    r = one
    for _ in range(y.N):
        r = one + concat_mul(z, r)
    return r


def log_derivative(y: TruncatedTensor, delta: TruncatedTensor) -> TruncatedTensor:
    """Directional derivative of log at y in direction delta (float or exact)."""
    _require_scalar(y, 1, "log_derivative")
    z = y - TruncatedTensor.one(y.shape, y.exact)
    powers = [TruncatedTensor.one(y.shape, y.exact)]
    for _ in range(y.N):
        powers.append(concat_mul(powers[-1], z))
    total = TruncatedTensor.zero(y.shape, y.exact)
    for k in range(1, y.N + 1):
        acc = TruncatedTensor.zero(y.shape, y.exact)
        for j in range(k):
            acc = acc + concat_mul(concat_mul(powers[j], delta), powers[k - 1 - j])
        total = total + acc.scale(ratio((-1) ** (k + 1), k, y.exact))
    return total


def dilate(x: TruncatedTensor, lam) -> TruncatedTensor:
    lam = _coerce_scalar(lam, x.exact)
    return TruncatedTensor._wrap(x.shape, [lev * (lam**k) for k, lev in enumerate(x.levels)], x.exact)


def tensor_norm(x: TruncatedTensor) -> float:
    """Max over levels of the Euclidean norm of the level array (float mode)."""
    if x.exact:
        raise ValueError("tensor_norm is defined for float-mode tensors; call to_float() first")
    return max(float(np.linalg.norm(lev)) for lev in x.levels)


# ---------------------------------------------------------------------------
# symmetric algebra


@lru_cache(maxsize=None)
def multisets(d: int, n: int) -> tuple[tuple[int, ...], ...]:
    """Non-decreasing words of length n, lexicographic."""
    return tuple(itertools.combinations_with_replacement(range(1, d + 1), n))


@lru_cache(maxsize=None)
def _multiset_lookup(d: int, n: int) -> dict[tuple[int, ...], int]:
    return {m: i for i, m in enumerate(multisets(d, n))}


@lru_cache(maxsize=None)
def _word_to_multiset(d: int, n: int) -> np.ndarray:
    look = _multiset_lookup(d, n)
    return np.array([look[tuple(sorted(w))] for w in words(d, n)], dtype=np.intp)


@lru_cache(maxsize=None)
def _sym_product_table(d: int, p: int, q: int) -> np.ndarray:
    look = _multiset_lookup(d, p + q)
    table = np.empty((len(multisets(d, p)), len(multisets(d, q))), dtype=np.intp)
    for i, a in enumerate(multisets(d, p)):
        for j, b in enumerate(multisets(d, q)):
            table[i, j] = look[tuple(sorted(a + b))]
    return table


def _scatter_add(out: np.ndarray, idx: np.ndarray, vals: np.ndarray):
    if out.dtype == object:
        for i, v in zip(idx.ravel(), vals.ravel()):
            out[i] += v
    else:
        np.add.at(out, idx.ravel(), vals.ravel())


class SymTensor:
    """Element of the truncated symmetric algebra S^N(R^d). Immutable.

    Degree-n coefficients are indexed by non-decreasing words, in lexicographic order.
    """

    __slots__ = ("shape", "levels", "exact")

    def __init__(self, shape: AlgebraShape, levels: Sequence, exact: bool = False):
        if len(levels) != shape.N + 1:
            raise ValueError(f"expected {shape.N + 1} degrees, got {len(levels)}")
        arrs = []
        for n, lev in enumerate(levels):
            arr = _array(list(np.ravel(lev)), exact)
            if arr.shape[0] != math.comb(n + shape.d - 1, shape.d - 1):
                raise ValueError(f"degree {n} has wrong length {arr.shape[0]}")
            arrs.append(_freeze(arr))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "levels", tuple(arrs))
        object.__setattr__(self, "exact", bool(exact))

    @classmethod
    def _wrap(cls, shape, levels, exact) -> "SymTensor":
        obj = cls.__new__(cls)
        object.__setattr__(obj, "shape", shape)
        object.__setattr__(obj, "levels", tuple(_freeze(a) for a in levels))
        object.__setattr__(obj, "exact", exact)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("SymTensor is immutable")

    @classmethod
    def zero(cls, shape: AlgebraShape, exact: bool = False) -> "SymTensor":
        return cls._wrap(shape, [_zeros(len(multisets(shape.d, n)), exact) for n in range(shape.N + 1)], exact)

    @classmethod
    def one(cls, shape: AlgebraShape, exact: bool = False) -> "SymTensor":
        levels = [_zeros(len(multisets(shape.d, n)), exact) for n in range(shape.N + 1)]
        levels[0][0] = mpq(1) if exact else 1.0
        return cls._wrap(shape, levels, exact)

    @classmethod
    def from_words(cls, shape: AlgebraShape, coeffs: dict, exact: bool = False) -> "SymTensor":
        levels = [_zeros(len(multisets(shape.d, n)), exact) for n in range(shape.N + 1)]
        for w, c in coeffs.items():
            w = parse_word(w) if isinstance(w, str) else tuple(w)
            if len(w) <= shape.N:
                levels[len(w)][_multiset_lookup(shape.d, len(w))[tuple(sorted(w))]] += _coerce_scalar(c, exact)
        return cls._wrap(shape, levels, exact)

    @property
    def d(self):
        return self.shape.d

    @property
    def N(self):
        return self.shape.N

    @property
    def scalar(self):
        return self.levels[0][0]

    def __getitem__(self, word):
        if isinstance(word, str):
            word = parse_word(word)
        word = tuple(sorted(word))
        return self.levels[len(word)][_multiset_lookup(self.d, len(word))[word]]

    def items(self, skip_zero: bool = True):
        for n, lev in enumerate(self.levels):
            for m, c in zip(multisets(self.d, n), lev):
                if skip_zero and c == 0:
                    continue
                yield m, c

    def to_dict(self, skip_zero: bool = True) -> dict[str, object]:
        return {word_label(w, self.d): c for w, c in self.items(skip_zero)}

    def to_float(self) -> "SymTensor":
        if not self.exact:
            return self
        return SymTensor._wrap(self.shape, [np.array([float(c) for c in lev]) for lev in self.levels], False)

    def _check(self, other):
        if not isinstance(other, SymTensor) or other.shape != self.shape or other.exact != self.exact:
            raise ValueError("SymTensor shape or mode mismatch")

    def __add__(self, other):
        self._check(other)
        return SymTensor._wrap(self.shape, [a + b for a, b in zip(self.levels, other.levels)], self.exact)

    def __sub__(self, other):
        self._check(other)
        return SymTensor._wrap(self.shape, [a - b for a, b in zip(self.levels, other.levels)], self.exact)

    def __neg__(self):
        return SymTensor._wrap(self.shape, [-a for a in self.levels], self.exact)

    def scale(self, c) -> "SymTensor":
        c = _coerce_scalar(c, self.exact)
        return SymTensor._wrap(self.shape, [a * c for a in self.levels], self.exact)

    def __mul__(self, other):
        if isinstance(other, SymTensor):
            return sym_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, SymTensor):
            return NotImplemented
        return (
            other.shape == self.shape
            and other.exact == self.exact
            and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))
        )

    __hash__ = None

    def is_zero(self) -> bool:
        return all(not np.any(lev != 0) for lev in self.levels)

    def max_abs_diff(self, other: "SymTensor") -> float:
        a, b = self.to_float(), other.to_float()
        return max(float(np.max(np.abs(x - y))) for x, y in zip(a.levels, b.levels))

    def __repr__(self):
        terms = [f"{c}*ê{word_label(w, self.d)}" for w, c in self.items()]
        return f"SymTensor(d={self.d}, N={self.N}: {' + '.join(terms) or '0'})"


def sym_level_mul(a: SymTensor, b: SymTensor, n: int) -> np.ndarray:
    d = a.d
    out = _zeros(len(multisets(d, n)), a.exact)
    for p in range(n + 1):
        x, y = a.levels[p], b.levels[n - p]
        if not x.any() or not y.any():
            continue
        _scatter_add(out, _sym_product_table(d, p, n - p), np.multiply.outer(x, y))
    return out


def sym_mul(a: SymTensor, b: SymTensor) -> SymTensor:
    a._check(b)
    return SymTensor._wrap(a.shape, [sym_level_mul(a, b, n) for n in range(a.N + 1)], a.exact)


def sym_exp(x: SymTensor) -> SymTensor:
    if x.scalar != 0:
        raise ValueError("sym_exp requires scalar component 0")
    one = SymTensor.one(x.shape, x.exact)
    r = one
    for k in range(x.N, 0, -1):
        r = one + sym_mul(x, r).scale(ratio(1, k, x.exact))
    return r


def sym_log(y: SymTensor) -> SymTensor:
    if y.scalar != 1:
        raise ValueError("sym_log requires scalar component 1")
    one = SymTensor.one(y.shape, y.exact)
    z = y - one
    if y.N == 0:
        return z
    r = one.scale(ratio((-1) ** (y.N + 1), y.N, y.exact))
    for k in range(y.N - 1, 0, -1):
        r = one.scale(ratio((-1) ** (k + 1), k, y.exact)) + sym_mul(z, r)
    return sym_mul(z, r)


def sym_project(x: TruncatedTensor) -> SymTensor:
    """Canonical projection T -> S: sum the coefficients of all words with the same letter multiset."""
    levels = []
    for n, lev in enumerate(x.levels):
        out = _zeros(len(multisets(x.d, n)), x.exact)
        _scatter_add(out, _word_to_multiset(x.d, n), lev)
        levels.append(out)
    return SymTensor._wrap(x.shape, levels, x.exact)


# ---------------------------------------------------------------------------
# JSON


def _encode_scalar(c, exact: bool):
    if exact:
        c = mpq(c)
        return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    return float(c)


def tensor_to_json(x: TruncatedTensor | SymTensor) -> dict:
    out = {
        "d": x.d,
        "N": x.N,
        "levels": [[_encode_scalar(c, x.exact) for c in lev] for lev in x.levels],
    }
    if isinstance(x, SymTensor):
        out["symmetric"] = True
    if x.exact:
        out["exact"] = True
    return out


def tensor_from_json(obj: dict | str, exact: bool | None = None) -> TruncatedTensor | SymTensor:
    """Inverse of :func:`tensor_to_json`.

    String coefficients (``"1/3"``) imply exact mode unless ``exact=False`` is given.
    A shorter ``levels`` list is zero-padded up to ``N``.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        d, N, raw = int(obj["d"]), int(obj["N"]), obj["levels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed tensor JSON: {exc}") from exc
    if exact is None:
        exact = bool(obj.get("exact")) or any(isinstance(c, str) for lev in raw for c in lev)
    shape = AlgebraShape(d, N)
    if len(raw) > N + 1:
        raise ValueError(f"tensor JSON has {len(raw)} levels but N={N}")
    sym = bool(obj.get("symmetric"))
    size = (lambda n: math.comb(n + d - 1, d - 1)) if sym else (lambda n: d**n)
    levels = list(raw) + [[0] * size(n) for n in range(len(raw), N + 1)]
    if not exact:
        levels = [[float(c) if not isinstance(c, str) else float(mpq(c)) for c in lev] for lev in levels]
    cls = SymTensor if sym else TruncatedTensor
    return cls(shape, levels, exact)


def dumps(x: TruncatedTensor | SymTensor) -> str:
    return json.dumps(tensor_to_json(x))


def loads(s: str, exact: bool | None = None):
    return tensor_from_json(json.loads(s), exact)


def same_mode(tensors: Iterable[TruncatedTensor]) -> bool:
    modes = {t.exact for t in tensors}
    return len(modes) <= 1
