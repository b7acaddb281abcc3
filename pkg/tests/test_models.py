import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy import stats

from sigcum.cumulants import (
    GaussianMartingaleModel,
    chunk_rng,
    gaussian_cumulant,
    mc_expected_signature,
    mc_signature_cumulant,
)
from sigcum.lie_ops import bch
from sigcum.models import (
    BrownianSampler,
    Kernel,
    LevySampler,
    LevyTriplet,
    StoppedBrownianSampler,
    StoppedDomainSpec,
    VolterraSampler,
    VolterraSpec,
    fawcett,
    inhom_levy_cumulant,
    levy_cumulant,
    sampler_from_spec,
    two_kernel_kappa4,
    two_kernel_model,
    volterra_cumulants,
)
from sigcum.tensor_core import AlgebraShape, TruncatedTensor, exp_trunc


def test_fawcett():
    assert fawcett(2, 1.0, 1.0).is_zero()
    k = fawcett(2, 0.0, 1.0).to_dict()
    assert k == {"11": 0.5, "22": 0.5}


# ---------------------------------------------------------------------------
# Lévy


def test_levy_reduces_to_fawcett():
    tr = LevyTriplet(np.zeros(2), np.eye(2))
    assert levy_cumulant(tr, 0.0, 1.0, 3).max_abs_diff(fawcett(2, 0.0, 1.0, 3)) == 0


def test_levy_single_large_jump():
    x = np.array([1.5, -0.5])
    tr = LevyTriplet(np.zeros(2), np.zeros((2, 2)), [(1.0, x)])
    shape = AlgebraShape(2, 4)
    want = (exp_trunc(TruncatedTensor.from_vector(shape, x)) - TruncatedTensor.one(shape)).scale(2.0)
    assert levy_cumulant(tr, 0.5, 2.5, 4).max_abs_diff(want) < 1e-15


def test_levy_small_jump_is_compensated():
    x = np.array([0.3, 0.4])
    tr = LevyTriplet(np.zeros(2), np.zeros((2, 2)), [(2.0, x)])
    k = levy_cumulant(tr, 0.0, 1.0, 3)
    assert not k.levels[1].any()
    assert np.allclose(tr.compensator(), 2.0 * x)


def test_levy_linear_and_additive():
    b1, b2 = np.array([0.1, 0.2]), np.array([-0.3, 0.5])
    a1, a2 = np.array([[1.0, 0.2], [0.2, 0.5]]), np.array([[0.3, 0.0], [0.0, 0.1]])
    j1, j2 = (0.7, [1.2, 0.3]), (1.1, [-0.2, 0.4])

    def k(b, a, jumps):
        return levy_cumulant(LevyTriplet(b, a, jumps), 0.0, 1.5, 4)

    lhs = k(b1 + b2, a1 + a2, [j1, j2])
    rhs = k(b1, a1, [j1]) + k(b2, a2, [j2])
    assert lhs.max_abs_diff(rhs) < 1e-14


def test_levy_validation():
    with pytest.raises(ValueError):
        LevyTriplet([0.0], [[-1.0]])
    with pytest.raises(ValueError):
        LevyTriplet([0.0, 0.0], np.eye(2), [(0.0, [1.0, 0.0])])
    with pytest.raises(ValueError):
        LevyTriplet([0.0, 0.0], np.eye(2), [(1.0, [1.0])])


def test_inhom_constant_eta_is_levy():
    tr = LevyTriplet([0.1, -0.2], [[0.5, 0.1], [0.1, 0.3]], [(0.8, [1.1, -0.4])])
    eta = tr.eta(4)
    k = inhom_levy_cumulant(lambda u: eta, 0.25, 1.25)
    assert k.max_abs_diff(levy_cumulant(tr, 0.25, 1.25, 4)) < 1e-13


def test_inhom_matches_gaussian():
    def a(u):
        return np.array([[1 + u, 0.5 * np.cos(3 * u)], [0.5 * np.cos(3 * u), 2 - u]])

    shape = AlgebraShape(2, 4)

    def eta(u):
        return TruncatedTensor(shape, [[0], [0, 0], 0.5 * a(u).ravel(), np.zeros(8), np.zeros(16)])

    k1 = inhom_levy_cumulant(eta, 0.0, 1.0)
    k2 = gaussian_cumulant(GaussianMartingaleModel(2, a), 0.0, 1.0, 4)
    assert k1.max_abs_diff(k2) < 1e-10


def test_inhom_piecewise_is_bch():
    shape = AlgebraShape(2, 4)
    e1 = LevyTriplet([0.3, 0.0], [[0.2, 0.0], [0.0, 0.0]], [(1.0, [0.5, 1.5])]).eta(4)
    e2 = LevyTriplet([0.0, -0.4], [[0.0, 0.0], [0.0, 0.6]], [(0.5, [-1.0, 0.2])]).eta(4)
    k = inhom_levy_cumulant(lambda u: e1 if u < 0.6 else e2, 0.0, 1.5, breakpoints=[0.6])
    assert k.max_abs_diff(bch(e1.scale(0.6), e2.scale(0.9))) < 1e-12
    assert k.shape == shape


# ---------------------------------------------------------------------------
# two-kernel Gaussian example


def _kernels():
    return (lambda t, s: np.exp(-(t - s)), lambda t, s: 1.0 + 0.5 * (t - s))


def test_two_kernel_equal_kernels_vanish():
    K, _ = _kernels()
    model = two_kernel_model(K, K, 0.6, 1.0)
    k = gaussian_cumulant(model, 0.0, 1.0, 6)
    assert max(float(np.max(np.abs(k.levels[n]))) for n in (3, 4, 5, 6)) < 1e-13
    assert np.max(np.abs(two_kernel_kappa4(model, 0.0, 1.0))) < 1e-13


@pytest.mark.parametrize("rho", [0.0, -0.7, 0.4])
def test_two_kernel_kappa4_matches_cumulant(rho):
    K1, K2 = _kernels()
    model = two_kernel_model(K1, K2, rho, 1.0)
    k = gaussian_cumulant(model, 0.2, 1.0, 4)
    assert np.max(np.abs(k.levels[4] - two_kernel_kappa4(model, 0.2, 1.0))) < 1e-12
    # the level-2 term is half the integrated covariance density
    dens = 0.5 * sp_integrate.quad_vec(lambda u: model.a(u).ravel(), 0.2, 1.0, epsabs=1e-13)[0]
    assert np.max(np.abs(k.levels[2] - dens)) < 1e-12


def test_two_kernel_rho_range():
    K1, K2 = _kernels()
    with pytest.raises(ValueError):
        two_kernel_model(K1, K2, 1.5, 1.0)


# ---------------------------------------------------------------------------
# Volterra


def feller_cumulants(c, lam, V0, T, nmax=4):
    """Cumulants of V_T - V0 for dV = -λ(V - V0)dt + c sqrt(V) dW, from the affine
    transform E exp(θ V_T) = exp(φ(T) + ψ(T) V0) expanded in powers of θ."""

    def rhs(_, y):
        psi = y[: nmax + 1]
        dpsi = np.zeros_like(psi)
        for n in range(1, nmax + 1):
            dpsi[n] = -lam * psi[n] + 0.5 * c * c * sum(psi[k] * psi[n - k] for k in range(1, n))
        return np.concatenate([dpsi, lam * V0 * psi])

    y0 = np.zeros(2 * (nmax + 1))
    y0[1] = 1.0
    sol = sp_integrate.solve_ivp(rhs, (0.0, T), y0, rtol=1e-12, atol=1e-14)
    y = sol.y[:, -1]
    return V0 * y[: nmax + 1] + y[nmax + 1 :]


def test_volterra_zero_kernel():
    spec = VolterraSpec((Kernel("constant", 0.0), Kernel("constant", 0.0)), (1.0, 2.0))
    assert volterra_cumulants(spec).is_zero()


def test_volterra_constant_kernel():
    spec = VolterraSpec((Kernel(), Kernel()), (1.0, 0.5), 1.0)
    for variant in ("derived", "printed"):
        k = volterra_cumulants(spec, variant=variant).to_dict()
        assert k["11"] == pytest.approx(0.5, abs=1e-12)
        assert k["22"] == pytest.approx(0.25, abs=1e-12)
        assert k["111"] == pytest.approx(0.25, abs=1e-12)
        assert k["1111"] == pytest.approx(0.125, abs=1e-12)
        assert k["2222"] == pytest.approx(0.5 * 0.125, abs=1e-12)
    # Feller diffusion with λ = 0: κ^(n) = V0 (T/2)^(n-1)
    assert np.allclose(feller_cumulants(1.0, 0.0, 1.0, 1.0)[2:], [0.5, 0.25, 0.125])


def test_volterra_structure():
    spec = VolterraSpec((Kernel("exponential", 1.0, 2.0), Kernel("exponential", 0.7, 0.5)), (1.0, 0.5))
    k = volterra_cumulants(spec)
    assert not k.levels[1].any()
    assert k.levels[2][1] == 0 and k.levels[2][2] == 0
    with pytest.raises(ValueError):
        volterra_cumulants(spec, variant="other")
    with pytest.raises(ValueError):
        VolterraSpec((Kernel(),), (0.0,))


@pytest.mark.parametrize("c,lam,V0", [(1.0, 2.0, 1.0), (0.7, 0.5, 0.5), (1.3, 4.0, 0.2)])
def test_volterra_diagonal_matches_affine_transform(c, lam, V0):
    spec = VolterraSpec((Kernel("exponential", c, lam), Kernel("exponential", c, lam)), (V0, V0))
    want = feller_cumulants(c, lam, V0, 1.0)
    derived = volterra_cumulants(spec).to_dict()
    for n in (2, 3, 4):
        assert derived["1" * n] == pytest.approx(want[n], rel=1e-9)
    # the printed h-kernel misses the level-4 diagonal coefficient
    printed = volterra_cumulants(spec, variant="printed").to_dict()
    assert abs(printed["1111"] - want[4]) > 1e-4


def test_volterra_commutator_antisymmetric():
    spec = VolterraSpec((Kernel("exponential", 1.0, 2.0), Kernel("exponential", 0.7, 0.5)), (1.0, 0.5))
    for variant in ("derived", "printed"):
        k = volterra_cumulants(spec, variant=variant).to_dict()
        assert k["1122"] == pytest.approx(-k["2211"])


@pytest.mark.slow
def test_volterra_mixed_word_monte_carlo():
    # constant and exponential kernel: the two variants disagree in sign on e_1122
    spec = VolterraSpec((Kernel(), Kernel("exponential", 1.0, 2.0)), (1.0, 0.5))
    res = mc_expected_signature(VolterraSampler(spec, 200), 20000, seed=1, N=4)
    kappa, se = mc_signature_cumulant(res)
    idx = {"1122": 3, "2211": 12, "2222": 15}
    derived = volterra_cumulants(spec).to_dict()
    printed = volterra_cumulants(spec, variant="printed").to_dict()
    for w, i in idx.items():
        z_derived = (kappa.levels[4][i] - derived[w]) / se.levels[4][i]
        z_printed = (kappa.levels[4][i] - printed[w]) / se.levels[4][i]
        assert abs(z_derived) < 4
        assert abs(z_printed) > 10


# ---------------------------------------------------------------------------
# samplers


def test_zero_sigma_sampler():
    inc = BrownianSampler(np.zeros((2, 3)), 1.0, 7).increments(chunk_rng(1, 0), 4)
    assert inc.shape == (4, 7, 2) and not inc.any()


@pytest.mark.parametrize(
    "sampler",
    [
        BrownianSampler(np.eye(2), 1.0, 10),
        LevySampler(LevyTriplet([0.1, 0.0], np.eye(2) * 0.1, [(2.0, [1.0, 0.5])]), 1.0, 10),
        VolterraSampler(VolterraSpec((Kernel(), Kernel("exponential", 1.0, 1.0)), (1.0, 0.5)), 10),
        StoppedBrownianSampler(StoppedDomainSpec(2, 2), dt=0.01),
    ],
    ids=["brownian", "levy", "volterra", "stopped"],
)
def test_samplers_reproducible(sampler):
    a, ea = sampler.signatures(chunk_rng(9, 0), 30, 3)
    b, eb = sampler.signatures(chunk_rng(9, 0), 30, 3)
    c, _ = sampler.signatures(chunk_rng(9, 1), 30, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[1], c[1])
    for key in ea:
        assert np.array_equal(ea[key], eb[key], equal_nan=True)


def test_levy_jump_gaps_are_exponential():
    sampler = LevySampler(LevyTriplet([0.0], [[0.0]], [(3.0, [1.0])]), 1.0)
    times = sampler.jump_times(np.random.default_rng(4), 2000.0)
    gaps = np.diff(np.concatenate([[0.0], times]))
    assert stats.kstest(gaps, "expon", args=(0, 1 / 3.0)).pvalue > 0.01


def test_levy_sampler_jump_counts():
    sampler = LevySampler(LevyTriplet([0.0], [[0.0]], [(3.0, [1.0])]), 1.0, 50)
    _, extras = sampler.signatures(chunk_rng(2, 0), 4000, 2)
    n = extras["jumps"]
    assert abs(n.mean() - 3.0) < 4 * np.sqrt(3.0 / n.size)


def test_stopped_spec():
    assert StoppedDomainSpec(3, 2).expected_exit_time() == 0.5
    assert StoppedDomainSpec(2, 1, (0.5, 9.0)).expected_exit_time() == 0.75
    with pytest.raises(ValueError):
        StoppedDomainSpec(2, 2, (1.0, 0.0))
    with pytest.raises(ValueError):
        StoppedDomainSpec(2, 3)


def test_stopped_exit_time_mean():
    spec = StoppedDomainSpec(2, 2)
    res = mc_expected_signature(StoppedBrownianSampler(spec, dt=1e-3), 2000, seed=3, N=2)
    tau = res.extras["tau"]
    assert abs(tau.mean() - spec.expected_exit_time()) < 3 * tau.std(ddof=1) / np.sqrt(tau.size) + 0.01


def test_volterra_sampler_constant_kernel_level_two():
    spec = VolterraSpec((Kernel(), Kernel()), (1.0, 1.0))
    res = mc_expected_signature(VolterraSampler(spec, 100), 4000, seed=8, N=2)
    assert abs(res.mean.levels[2][0] - 0.5) < 4 * res.stderr.levels[2][0]
    assert res.extras["clamps"].shape == (4000,)


def test_sampler_from_spec():
    s, closed = sampler_from_spec({"model": "brownian", "d": 2})
    assert isinstance(s, BrownianSampler) and closed(3).max_abs_diff(fawcett(2, 0, 1, 3)) == 0
    s, closed = sampler_from_spec({"model": "brownian", "d": 2, "sigma": [[1, 0], [0.5, 1]]})
    assert closed(2).to_dict()["22"] == pytest.approx(0.625)
    s, closed = sampler_from_spec({"model": "levy", "b": [0, 0], "jumps": [{"rate": 1, "x": [2, 0]}]})
    assert isinstance(s, LevySampler) and closed(2).levels[1][0] == 2.0
    s, closed = sampler_from_spec({"model": "stopped", "d": 2})
    assert closed(2).to_dict() == {"11": 0.25, "22": 0.25}
    s, _ = sampler_from_spec({"model": "volterra", "kernels": [{"kind": "exponential", "lam": 1}, {}]})
    assert isinstance(s, VolterraSampler)
    with pytest.raises(ValueError):
        sampler_from_spec({"model": "heston"})
    with pytest.raises(ValueError):
        Kernel.from_json({"kind": "callable"})
