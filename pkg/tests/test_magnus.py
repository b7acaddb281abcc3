import numpy as np
import pytest

from sigcum.lie_ops import bch, is_lie
from sigcum.magnus import (
    ConvergenceError,
    MagnusSolveReport,
    hausdorff_solve,
    jump_magnus,
    magnus_expansion_terms,
    magnus_levels,
)
from sigcum.signature import CadlagPath, Jump, Linear, PathEvent, log_signature, path_from_increments
from sigcum.tensor_core import AlgebraShape, TruncatedTensor

from conftest import random_tensor

S24 = AlgebraShape(2, 4)
S25 = AlgebraShape(2, 5)


def linear_path(rng, shape, n, exact=False, top=1):
    incs = [random_tensor(rng, shape, exact=exact, top=top) for _ in range(n)]
    return CadlagPath(shape, [PathEvent(float(i), Linear(x, 1.0)) for i, x in enumerate(incs)]), incs


def mixed_path(rng, exact=True):
    x = [random_tensor(rng, S24, exact=exact, top=2) for _ in range(5)]
    events = [
        PathEvent(0.0, Linear(x[0], 1.0)),
        PathEvent(1.0, Jump(x[1])),
        PathEvent(1.0, Linear(x[2], 1.0)),
        PathEvent(2.5, Jump(x[3])),
        PathEvent(3.0, Linear(x[4], 1.0)),
    ]
    return CadlagPath(S24, events, 0.0, 4.0)


def test_one_direction():
    v = TruncatedTensor.from_vector(S24, [0.3, -1.2])
    path = CadlagPath(S24, [PathEvent(0.0, Linear(v.scale(2.0), 2.0))])
    rep = hausdorff_solve(path, 0.5, 2.0)
    assert rep.omega.max_abs_diff(v.scale(1.5)) < 1e-14


def test_two_segments_bch(rng):
    path, (x1, x2) = linear_path(rng, S25, 2)
    rep = hausdorff_solve(path)
    assert rep.omega.max_abs_diff(bch(x1, x2)) < 1e-8
    assert rep.estimated_error < 1e-10


def test_random_five_segments(rng):
    path, _ = linear_path(rng, S24, 5, top=2)
    rep = hausdorff_solve(path)
    assert rep.omega.max_abs_diff(log_signature(path)) < 1e-8
    assert rep.steps > 0


def test_hausdorff_rejects_jumps(rng):
    with pytest.raises(ValueError, match="jump_magnus"):
        hausdorff_solve(mixed_path(rng, exact=False))


def test_hausdorff_nonconvergence(rng):
    path, _ = linear_path(rng, S24, 2)
    with pytest.raises(ConvergenceError):
        hausdorff_solve(path, tol=1e-30, max_steps=16)


def test_report_validation():
    with pytest.raises(ValueError):
        MagnusSolveReport(TruncatedTensor.zero(S24), 1, -1.0)


def test_pure_jumps_exact(rng):
    xs = [random_tensor(rng, S24) for _ in range(4)]
    path = CadlagPath(S24, [PathEvent(float(i + 1), Jump(x)) for i, x in enumerate(xs)])
    assert jump_magnus(path) == bch(*xs)
    assert magnus_levels(path) == bch(*xs)


def test_no_events():
    path = CadlagPath(S24, (), 0.0, 1.0)
    assert jump_magnus(path).is_zero()
    assert magnus_levels(path).is_zero()


def test_mixed_path_jump_magnus(rng):
    path = mixed_path(rng, exact=False)
    assert jump_magnus(path).max_abs_diff(log_signature(path)) < 1e-9


def test_mixed_path_levels_exact(rng):
    path = mixed_path(rng)
    assert magnus_levels(path) == log_signature(path)
    # sub-intervals cutting through a linear segment and excluding a jump at t
    for t, T in [(0.5, 4.0), (1.0, 3.5), (2.5, 4.0)]:
        assert magnus_levels(path, t, T) == log_signature(path, t, T)


def test_expansion_terms(rng):
    path = mixed_path(rng)
    full = log_signature(path)
    for n in range(1, 5):
        assert np.array_equal(magnus_expansion_terms(path, n), full.levels[n])
    assert np.array_equal(magnus_expansion_terms(path, 1), path.increment().levels[1])
    with pytest.raises(ValueError):
        magnus_expansion_terms(path, 5)


def test_one_direction_higher_levels_vanish():
    v = TruncatedTensor.from_vector(S24, [1, 2], exact=True)
    path = CadlagPath(S24, [PathEvent(0.0, Linear(v, 1.0)), PathEvent(2.0, Jump(v.scale(3)))])
    for n in range(2, 5):
        assert not magnus_expansion_terms(path, n).any()


def test_float_levels_match(rng):
    path = mixed_path(rng, exact=False)
    assert magnus_levels(path).max_abs_diff(log_signature(path)) < 1e-12


def test_omega_is_lie(rng):
    # level-1 drivers only
    shape = AlgebraShape(3, 4)
    incs = rng.integers(-3, 4, (6, 3))
    p = path_from_increments(incs.astype(float), 0.5, 4)
    assert is_lie(jump_magnus(p), atol=1e-10)
    xs = [TruncatedTensor.from_vector(shape, list(map(int, v)), exact=True) for v in incs]
    q = CadlagPath(shape, [PathEvent(float(i + 1), Jump(x)) for i, x in enumerate(xs)])
    assert is_lie(jump_magnus(q))


def test_backward_consistency(rng):
    path = mixed_path(rng)
    s = 2.0
    assert magnus_levels(path, 0.5, 4.0) == bch(magnus_levels(path, 0.5, s), magnus_levels(path, s, 4.0))
