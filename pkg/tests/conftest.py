import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sigcum.tensor_core import AlgebraShape, SymTensor, TruncatedTensor, multisets

settings.register_profile(
    "sigcum", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sigcum")

small_rationals = st.builds(mpq, st.integers(-6, 6), st.sampled_from([1, 2, 3, 4]))


@st.composite
def rational_tensors(draw, d, N, scalar=None, zero_scalar=False):
    levels = []
    for k in range(N + 1):
        if k == 0:
            if zero_scalar:
                levels.append([0])
                continue
            if scalar is not None:
                levels.append([scalar])
                continue
        levels.append(draw(st.lists(small_rationals, min_size=d**k, max_size=d**k)))
    return TruncatedTensor(AlgebraShape(d, N), levels, exact=True)


@st.composite
def shapes(draw, max_d=3, max_N=5):
    d = draw(st.integers(1, max_d))
    N = draw(st.integers(1, max_N if d < 3 else 4))
    return AlgebraShape(d, N)


def random_tensor(rng, shape, exact=True, zero_scalar=True, den=4, top=None):
    """Random tensor with small rational (or float) coefficients up to level ``top``."""
    top = shape.N if top is None else top
    levels = []
    for k in range(shape.N + 1):
        if (k == 0 and zero_scalar) or k > top:
            levels.append([0] * shape.d**k)
        else:
            levels.append([mpq(int(v), den) for v in rng.integers(-den, den + 1, shape.d**k)])
    x = TruncatedTensor(shape, levels, exact=True)
    return x if exact else x.to_float()


def random_sym(rng, shape, den=4):
    levels = [[0]] + [
        [mpq(int(v), den) for v in rng.integers(-den, den + 1, len(multisets(shape.d, n)))]
        for n in range(1, shape.N + 1)
    ]
    return SymTensor(shape, levels, exact=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
