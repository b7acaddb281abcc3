import itertools
import math

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given

from sigcum.lie_ops import (
    AdSeries,
    OuterTensor,
    ad_powers,
    ad_product,
    ad_series_apply,
    bch,
    bch_integral,
    bernoulli_numbers,
    is_lie,
    lie_bracket,
    op_G,
    op_H,
    op_IdG,
    op_Q,
)
from sigcum.tensor_core import (
    AlgebraShape,
    TruncatedTensor,
    concat_mul,
    exp_trunc,
    sym_project,
)

from conftest import random_tensor, rational_tensors

S24 = AlgebraShape(2, 4)


def e(shape, word, exact=True):
    return TruncatedTensor.basis(shape, word, exact=exact)


def prod(*ts):
    out = TruncatedTensor.one(ts[0].shape, ts[0].exact)
    for t in ts:
        out = concat_mul(out, t)
    return out


def subset_expansion(xs, y):
    """ad x_1 ... ad x_k (y) = sum over I ∪ J of (-1)^|J| x_I y x_J^reversed."""
    k = len(xs)
    total = TruncatedTensor.zero(y.shape, y.exact)
    for mask in itertools.product([0, 1], repeat=k):
        left = [xs[i] for i in range(k) if mask[i] == 0]
        right = [xs[i] for i in reversed(range(k)) if mask[i] == 1]
        term = prod(*left, y, *right)
        total = total + (term if sum(mask) % 2 == 0 else -term)
    return total


def binomial_series(s, x, y):
    """sum_k a_k sum_j C(k, j) (-1)^j x^(k-j) y x^j."""
    total = TruncatedTensor.zero(y.shape, y.exact)
    powers = [TruncatedTensor.one(x.shape, x.exact)]
    for _ in range(x.N):
        powers.append(concat_mul(powers[-1], x))
    for k in range(x.N):
        a = s.coeff(k, True)
        for j in range(k + 1):
            c = a * math.comb(k, j) * (-1) ** j
            total = total + prod(powers[k - j], y, powers[j]).scale(c)
    return total


def test_bracket_basis():
    assert lie_bracket(e(S24, "1"), e(S24, "2")) == e(S24, "12") - e(S24, "21")


@given(rational_tensors(2, 4, zero_scalar=True), rational_tensors(2, 4, zero_scalar=True),
       rational_tensors(2, 4, zero_scalar=True))
def test_jacobi(x, y, z):
    b = lie_bracket
    assert (b(x, b(y, z)) + b(y, b(z, x)) + b(z, b(x, y))).is_zero()


def test_bernoulli():
    assert bernoulli_numbers(8) == tuple(
        mpq(v) for v in ["1", "-1/2", "1/6", "0", "-1/30", "0", "1/42", "0", "-1/30"]
    )


def test_ad_product_matches_subset_expansion(rng):
    xs = [random_tensor(rng, S24) for _ in range(3)]
    y = random_tensor(rng, S24)
    assert ad_product(xs, y) == subset_expansion(xs, y)


@pytest.mark.parametrize("series", ["G", "H", "exp"])
def test_ad_series_matches_binomial_oracle(rng, series):
    s = getattr(AdSeries, series)(4)
    x, y = random_tensor(rng, S24), random_tensor(rng, S24)
    assert ad_series_apply(s, x, y) == binomial_series(s, x, y)


def test_ad_series_trivial_coefficients(rng):
    x, y = random_tensor(rng, S24), random_tensor(rng, S24)
    assert ad_series_apply(AdSeries.identity(), x, y) == y
    s = AdSeries((mpq(0), mpq(1)))
    assert ad_series_apply(s, e(S24, "1"), e(S24, "2")) == e(S24, "12") - e(S24, "21")


def test_high_coefficients_are_irrelevant(rng):
    x, y = random_tensor(rng, S24), random_tensor(rng, S24)
    base = AdSeries.G(4)
    padded = AdSeries(base.coefficients + (mpq(17), mpq(-5), mpq(99)))
    assert ad_series_apply(base, x, y) == ad_series_apply(padded, x, y)


def test_exp_series_is_conjugation(rng):
    x, y = random_tensor(rng, S24), random_tensor(rng, S24)
    conj = prod(exp_trunc(x), y, exp_trunc(-x))
    assert ad_series_apply(AdSeries.exp(4), x, y) == conj


def test_op_G_hand_value():
    shape = AlgebraShape(2, 3)
    got = op_G(e(shape, "1"), e(shape, "2"))
    want = TruncatedTensor.from_words(
        shape,
        {"2": 1, "12": mpq(1, 2), "21": mpq(-1, 2), "112": mpq(1, 6), "121": mpq(-2, 6), "211": mpq(1, 6)},
        exact=True,
    )
    assert got == want


def test_H_inverts_G():
    rng = np.random.default_rng(7)
    shape = AlgebraShape(2, 6)
    for _ in range(3):
        x, v = random_tensor(rng, shape), random_tensor(rng, shape)
        assert op_H(x, op_G(x, v)) == v
        assert op_G(x, op_H(x, v)) == v


def test_one_letter_collapse(rng):
    shape = AlgebraShape(1, 5)
    x, v = random_tensor(rng, shape), random_tensor(rng, shape)
    assert op_G(x, v) == v
    assert op_H(x, v) == v


def test_G_is_derivative_of_exp(rng):
    # d/dt exp(x + t v) at 0 = G(ad x)(v) exp(x)
    x, v = random_tensor(rng, S24, exact=False), random_tensor(rng, S24, exact=False)
    h = 1e-5
    fd = (exp_trunc(x + v.scale(h)) - exp_trunc(x - v.scale(h))).scale(1 / (2 * h))
    assert fd.max_abs_diff(concat_mul(op_G(x, v), exp_trunc(x))) < 1e-8


# ---------------------------------------------------------------------------
# outer-tensor operators


def q_tilde(x, A):
    """sum over legs a⊗b of G(b)G(a) + sum_{n,m} [(ad x)^n b, (ad x)^m a] / ((n+m+2)(n+1)! m!)."""
    N = x.N
    total = TruncatedTensor.zero(x.shape, x.exact)
    for a, b in A.legs():
        total = total + concat_mul(op_G(x, b), op_G(x, a))
        pa, pb = ad_powers(x, a, N), ad_powers(x, b, N)
        for n in range(N + 1):
            for m in range(N + 1 - n):
                c = mpq(1, (n + m + 2) * math.factorial(n + 1) * math.factorial(m))
                total = total + lie_bracket(pb[n], pa[m]).scale(c)
    return total


def random_outer(rng, shape, symmetric):
    a, b = random_tensor(rng, shape), random_tensor(rng, shape)
    A = OuterTensor.outer(a, b) + OuterTensor.outer(random_tensor(rng, shape), a)
    return A + A.transpose() if symmetric else A


def test_Q_equals_two_term_form(rng):
    for _ in range(3):
        x = random_tensor(rng, S24)
        A = random_outer(rng, S24, symmetric=True)
        assert A.is_symmetric()
        assert op_Q(x, A, check_symmetric=True) == q_tilde(x, A)


def test_Q_rejects_asymmetric(rng):
    A = OuterTensor.outer(e(S24, "1"), e(S24, "2"))
    with pytest.raises(ValueError, match="symmetric"):
        op_Q(e(S24, "1"), A, check_symmetric=True)


def test_Q_is_second_derivative_of_exp(rng):
    # d²/dsdt exp(x + s a + t b) = ½ Q(ad x)(a⊗b + b⊗a) exp(x)
    x = random_tensor(rng, S24, exact=False)
    a, b = random_tensor(rng, S24, exact=False), random_tensor(rng, S24, exact=False)
    h = 1e-3

    def E(s, t):
        return exp_trunc(x + a.scale(s) + b.scale(t))

    fd = (E(h, h) - E(h, -h) - E(-h, h) + E(-h, -h)).scale(1 / (4 * h * h))
    A = OuterTensor.outer(a, b) + OuterTensor.outer(b, a)
    assert fd.max_abs_diff(concat_mul(op_Q(x, A).scale(0.5), exp_trunc(x))) < 1e-5


def test_Q_and_IdG_reduce_to_multiplication(rng):
    A = random_outer(rng, S24, symmetric=True)
    zero = TruncatedTensor.zero(S24, exact=True)
    assert op_Q(zero, A) == A.multiply()
    assert op_IdG(zero, A) == A.multiply()
    one_letter = AlgebraShape(1, 4)
    x = random_tensor(rng, one_letter)
    B = OuterTensor.outer(random_tensor(rng, one_letter), random_tensor(rng, one_letter))
    assert op_Q(x, B + B.transpose()) == (B + B.transpose()).multiply()
    assert op_IdG(x, B) == B.multiply()


def test_IdG_matches_expansion(rng):
    x = random_tensor(rng, S24)
    A = random_outer(rng, S24, symmetric=False)
    want = TruncatedTensor.zero(S24, exact=True)
    for a, b in A.legs():
        for k in range(S24.N):
            want = want + concat_mul(a, subset_expansion([x] * k, b)).scale(mpq(1, math.factorial(k + 1)))
    assert op_IdG(x, A) == want


# ---------------------------------------------------------------------------
# BCH


def test_bch_trivial(rng):
    x = random_tensor(rng, S24)
    zero = TruncatedTensor.zero(S24, exact=True)
    assert bch(x, zero) == x
    assert bch(x, -x).is_zero()
    with pytest.raises(ValueError):
        bch()


def test_bch_level_four_series():
    x, y = e(S24, "1"), e(S24, "2")
    b = lie_bracket
    want = (
        x + y + b(x, y).scale(mpq(1, 2))
        + (b(x, b(x, y)) + b(y, b(y, x))).scale(mpq(1, 12))
        - b(y, b(x, b(x, y))).scale(mpq(1, 24))
    )
    assert bch(x, y) == want


def test_bch_three_argument_cross_term():
    # The mixed level-3 part of BCH(x1, x2, x3) in the basis [x1,[x2,x3]], [x2,[x1,x3]]
    # is 1/3 and -1/6; the displayed series only shows the second coefficient.
    shape = AlgebraShape(3, 3)
    x1, x2, x3 = (e(shape, str(i)) for i in (1, 2, 3))
    b = lie_bracket
    z = bch(x1, x2, x3)
    pairs = b(x1, x2) + b(x1, x3) + b(x2, x3)
    twelfth = TruncatedTensor.zero(shape, exact=True)
    for xi, xj in itertools.combinations([x1, x2, x3], 2):
        twelfth = twelfth + b(xi, b(xi, xj)) + b(xj, b(xj, xi))
    rest = z - (x1 + x2 + x3 + pairs.scale(mpq(1, 2)) + twelfth.scale(mpq(1, 12)))
    want = b(x1, b(x2, x3)).scale(mpq(1, 3)) - b(x2, b(x1, x3)).scale(mpq(1, 6))
    assert rest == want


def test_bch_associative(rng):
    xs = [random_tensor(rng, S24) for _ in range(3)]
    assert bch(*xs) == bch(bch(xs[0], xs[1]), xs[2]) == bch(xs[0], bch(xs[1], xs[2]))


def test_bch_is_lie():
    x = e(S24, "1") + lie_bracket(e(S24, "1"), e(S24, "2"))
    y = e(S24, "2").scale(3) - lie_bracket(e(S24, "2"), lie_bracket(e(S24, "1"), e(S24, "2")))
    assert is_lie(bch(x, y))
    assert is_lie(bch(x, y, x))
    assert not is_lie(e(S24, "12"))


def test_bch_integral_matches_bch():
    shape = AlgebraShape(2, 6)
    assert bch_integral(e(shape, "1"), e(shape, "2")) == bch(e(shape, "1"), e(shape, "2"))
    rng = np.random.default_rng(3)
    a, b = random_tensor(rng, S24), random_tensor(rng, S24)
    assert bch_integral(a, b) == bch(a, b)
    zero = TruncatedTensor.zero(S24, exact=True)
    assert bch_integral(a, zero) == a
    one_letter = AlgebraShape(1, 4)
    c, d = random_tensor(rng, one_letter), random_tensor(rng, one_letter)
    assert bch_integral(c, d) == c + d


def test_bch_projects_to_sum(rng):
    x, y = random_tensor(rng, S24), random_tensor(rng, S24)
    assert sym_project(bch(x, y)) == sym_project(x) + sym_project(y)
