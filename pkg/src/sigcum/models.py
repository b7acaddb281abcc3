"""Closed-form cumulants and Monte-Carlo samplers for concrete model classes:
Brownian motion with deterministic covariance, Lévy processes with finite
atomic jump measures, forward-variance (affine Volterra) martingales and
Brownian motion stopped at the exit from a cylinder domain.

Samplers follow the protocol used by ``cumulants.mc_expected_signature``:
``signatures(rng, n, N)`` returns per-level arrays of shape (n, d^k) and a
dict of per-path side outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cumulants import GaussianMartingaleModel, inhom_cumulant_core
from .quadrature import DEFAULT_TOL, composite_rule, converge
from .signature import batch_identity, batch_mul_exp
from .tensor_core import AlgebraShape, TruncatedTensor, exp_trunc


# ---------------------------------------------------------------------------
# Brownian / Gaussian


def fawcett(d: int, t: float, T: float, N: int = 2) -> TruncatedTensor:
    """((T - t)/2) I_d."""
    if T < t:
        raise ValueError("need t <= T")
    shape = AlgebraShape(d, max(N, 2))
    return TruncatedTensor.from_words(shape, {(i, i): 0.5 * (T - t) for i in range(1, d + 1)})


# ---------------------------------------------------------------------------
# Lévy


@dataclass
class LevyTriplet:
    """Drift b, diffusion matrix a and a finite atomic jump measure sum_i λ_i δ_{x_i}."""

    b: np.ndarray
    a: np.ndarray
    jumps: list = field(default_factory=list)  # [(rate, point), ...]

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).ravel()
        d = self.b.size
        self.a = np.asarray(self.a, dtype=float).reshape(d, d)
        if not np.allclose(self.a, self.a.T, atol=1e-12) or np.min(np.linalg.eigvalsh(self.a)) < -1e-12:
            raise ValueError("a must be symmetric positive semidefinite")
        clean = []
        for rate, x in self.jumps:
            x = np.asarray(x, dtype=float).ravel()
            if not rate > 0:
                raise ValueError("jump rates must be positive")
            if x.size != d:
                raise ValueError(f"jump point {x} has wrong dimension")
            clean.append((float(rate), x))
        self.jumps = clean

    @property
    def d(self) -> int:
        return self.b.size

    @property
    def total_rate(self) -> float:
        return sum(r for r, _ in self.jumps)

    def compensator(self) -> np.ndarray:
        """sum of λ_i x_i over atoms with |x_i| <= 1 (the truncated compensator drift)."""
        out = np.zeros(self.d)
        for rate, x in self.jumps:
            if np.linalg.norm(x) <= 1.0:
                out += rate * x
        return out

    def eta(self, N: int) -> TruncatedTensor:
        """b + a/2 + sum_i λ_i (exp(x_i) - 1 - x_i 1_{|x_i| <= 1})."""
        shape = AlgebraShape(self.d, max(N, 2))
        out = TruncatedTensor.from_vector(shape, self.b)
        out = out + TruncatedTensor(shape, [[0], np.zeros(self.d), 0.5 * self.a.ravel()] + [np.zeros(self.d**k) for k in range(3, shape.N + 1)])
        for rate, x in self.jumps:
            xe = TruncatedTensor.from_vector(shape, x)
            term = exp_trunc(xe) - TruncatedTensor.one(shape)
            if np.linalg.norm(x) <= 1.0:
                term = term - xe
            out = out + term.scale(rate)
        return out


def levy_cumulant(triplet: LevyTriplet, t: float, T: float, N: int) -> TruncatedTensor:
    """(T - t) η: commutators vanish for time-homogeneous characteristics."""
    if T < t:
        raise ValueError("need t <= T")
    return triplet.eta(N).scale(T - t)


def inhom_levy_cumulant(
    eta: Callable[[float], TruncatedTensor],
    t: float,
    T: float,
    N: int | None = None,
    breakpoints: Sequence[float] = (),
    tol: float = DEFAULT_TOL,
) -> TruncatedTensor:
    """κ_t = int_t^T H(ad κ_u)(η(u)) du for a time-dependent characteristic η."""
    probe = eta(t)
    shape = probe.shape if N is None else AlgebraShape(probe.d, N)
    return inhom_cumulant_core(eta, t, T, shape, breakpoints, tol)


# ---------------------------------------------------------------------------
# Gaussian example with two Volterra-type kernels


def two_kernel_model(
    K1: Callable[[float, float], float], K2: Callable[[float, float], float], rho: float, T: float
) -> GaussianMartingaleModel:
    """ξ^i_t(T) = X^i_0 + int_0^t K^i(T, s) dB^i_s with d<B^1, B^2> = ρ dt.

    The instantaneous covariance of (ξ^1, ξ^2) is the density
    a(u) = [[K1², ρ K1 K2], [ρ K1 K2, K2²]] evaluated at (T, u).
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")

    def a(u):
        k1, k2 = K1(T, u), K2(T, u)
        return np.array([[k1 * k1, rho * k1 * k2], [rho * k1 * k2, k2 * k2]])

    return GaussianMartingaleModel(2, a)


def two_kernel_kappa4(
    model: GaussianMartingaleModel, t: float, T: float, prefactor: float = 1 / 8, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """prefactor * sum_{iji'j'} int_t^T int_u^T (a_ij(u) a_i'j'(r) - a_i'j'(u) a_ij(r)) dr du e_{iji'j'}.

    Evaluated on a tensor-product Gauss–Legendre grid over the triangle
    {t <= u <= r <= T}, doubling panels until converged. With κ^(2) = (1/2) int a
    the consistent prefactor is 1/8; 1/2 corresponds to dropping that half.
    """
    d = model.d

    def rule(p):
        x, w = composite_rule(p)
        u = t + (T - t) * x
        wu = (T - t) * w
        total = np.zeros((d * d, d * d))
        au = model.a_vec(u).reshape(-1, d * d)
        for k, (uk, wk) in enumerate(zip(u, wu)):
            r = uk + (T - uk) * x
            ar = model.a_vec(r).reshape(-1, d * d)
            inner = (T - uk) * (w @ ar)
            total += wk * (np.outer(au[k], inner) - np.outer(inner, au[k]))
        return total.ravel()

    return prefactor * converge(rule, tol)


# ---------------------------------------------------------------------------
# affine Volterra (forward variance) models


@dataclass(frozen=True)
class Kernel:
    """Volterra kernel K(t, s) = c, c exp(-λ (t - s)), or an arbitrary callable."""

    kind: str = "constant"
    c: float = 1.0
    lam: float = 0.0
    fn: Callable[[float, float], float] | None = None

    def __call__(self, t, s):
        if self.kind == "constant":
            return self.c * np.ones_like(np.asarray(t - s, dtype=float))
        if self.kind == "exponential":
            return self.c * np.exp(-self.lam * (np.asarray(t, dtype=float) - s))
        if self.kind == "callable" and self.fn is not None:
            return self.fn(t, s)
        raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "Kernel":
        kind = obj.get("kind", "constant")
        if kind not in ("constant", "exponential"):
            raise ValueError(f"kernel kind {kind!r} is not available from JSON")
        return cls(kind, float(obj.get("c", 1.0)), float(obj.get("lam", 0.0)))


@dataclass
class VolterraSpec:
    """V^i_t = V^i_0 + int_0^t K^i(t, s) sqrt(V^i_s) dW^i_s with independent W^1, W^2."""

    kernels: tuple
    V0: tuple
    T: float = 1.0

    def __post_init__(self):
        self.kernels = tuple(self.kernels)
        self.V0 = tuple(float(v) for v in self.V0)
        if len(self.kernels) != len(self.V0):
            raise ValueError("need one V0 per kernel")
        if any(v <= 0 for v in self.V0):
            raise ValueError("V0 must be positive")

    @property
    def d(self) -> int:
        return len(self.V0)


class _Nested:
    """Nested Gauss–Legendre integrals over [lo, T] with a common panel count."""

    def __init__(self, panels: int, T: float):
        self.x, self.w = composite_rule(panels)
        self.T = T

    def nodes(self, lo):
        lo = np.asarray(lo, dtype=float)
        width = self.T - lo
        return lo[..., None] + width[..., None] * self.x, width[..., None] * self.w


def volterra_cumulants(
    spec: VolterraSpec,
    t: float = 0.0,
    T: float | None = None,
    xi: Sequence[Callable[[np.ndarray], np.ndarray]] | None = None,
    variant: str = "derived",
    tol: float = DEFAULT_TOL,
) -> TruncatedTensor:
    """Levels 2-4 of the signature cumulant of (ξ^1(T), ..., ξ^d(T)).

    ``xi[i](u)`` is the forward curve ξ^i_t(u) = E_t V^i_u; it defaults to V^i_0,
    which is exact at t = 0. With A_i(u) = int_u^T K_i(T,s)² K_i(s,u) ds:

      κ^(2) = 1/2 sum_i e_ii int_t^T K_i(T,u)² ξ^i(u) du
      κ^(3) = 1/2 sum_i e_iii int_t^T K_i(T,u) A_i(u) ξ^i(u) du
      κ^(4) = sum_i { -1/8 [e_jj, e_ii] int_t^T (int_u^T K_j(T,s)² ξ^j(s) ds) K_i(T,u)² ξ^i(u) du
                      + e_iiii int_t^T h_i(u) ξ^i(u) du },   j = the other index,
      h_i(u) = 1/8 A_i(u)² + 1/2 K_i(T,u) int_u^T K_i(T,s) A_i(s) K_i(s,u) ds.

    ``variant="printed"`` instead uses the commutator coefficient +1/8 with
    K_j(T,s) to the first power and
      h_i(u) = 1/8 (int_u^T K(T,s)² K(u,s) ds)² + 1/2 int_u^T (int_s^T K(T,r)² K(T,s) K(r,s) dr) K(T,s) K(s,u) ds.
    Both agree for constant kernels.
    """
    if variant not in ("derived", "printed"):
        raise ValueError("variant must be 'derived' or 'printed'")
    T = spec.T if T is None else T
    d = spec.d
    shape = AlgebraShape(d, 4)
    if xi is None:
        xi = [lambda u, v=v: v * np.ones_like(np.asarray(u, dtype=float)) for v in spec.V0]
    Ks = spec.kernels

    def A(i, q: _Nested, u):
        s, ws = q.nodes(u)
        return np.sum(ws * Ks[i](T, s) ** 2 * Ks[i](s, u[..., None]), axis=-1)

    def h(i, q: _Nested, u):
        K = Ks[i]
        if variant == "derived":
            s, ws = q.nodes(u)
            inner = np.sum(ws * K(T, s) * A(i, q, s) * K(s, u[..., None]), axis=-1)
            return A(i, q, u) ** 2 / 8 + 0.5 * K(T, u) * inner
        s, ws = q.nodes(u)
        first = np.sum(ws * K(T, s) ** 2 * K(u[..., None], s), axis=-1)
        r, wr = q.nodes(s)
        B = np.sum(wr * K(T, r) ** 2 * K(T, s[..., None]) * K(r, s[..., None]), axis=-1)
        second = np.sum(ws * B * K(T, s) * K(s, u[..., None]), axis=-1)
        return first**2 / 8 + 0.5 * second

    def rule(p):
        q = _Nested(p, T)
        u, wu = q.nodes(np.array(t))
        out = []
        for i in range(d):
            K, f = Ks[i], xi[i](u)
            k2 = 0.5 * np.sum(wu * K(T, u) ** 2 * f)
            k3 = 0.5 * np.sum(wu * K(T, u) * A(i, q, u) * f)
            k4 = np.sum(wu * h(i, q, u) * f)
            cross = []
            for j in range(d):
                if j == i:
                    cross.append(0.0)
                    continue
                s, ws = q.nodes(u)
                power = 2 if variant == "derived" else 1
                inner = np.sum(ws * Ks[j](T, s) ** power * xi[j](s), axis=-1)
                cross.append(np.sum(wu * inner * K(T, u) ** 2 * f))
            out.append(np.concatenate([[k2, k3, k4], cross]))
        return np.array(out)

    vals = converge(rule, tol)
    sign = -1.0 if variant == "derived" else 1.0
    words: dict = {}
    for i in range(d):
        a = i + 1
        words[(a, a)] = vals[i, 0]
        words[(a, a, a)] = vals[i, 1]
        words[(a, a, a, a)] = words.get((a, a, a, a), 0.0) + vals[i, 2]
        for j in range(d):
            if j == i:
                continue
            b = j + 1
            c = sign * vals[i, 3 + j] / 8
            # c [e_bb, e_aa] = c (e_bbaa - e_aabb)
            words[(b, b, a, a)] = words.get((b, b, a, a), 0.0) + c
            words[(a, a, b, b)] = words.get((a, a, b, b), 0.0) - c
    return TruncatedTensor.from_words(shape, words)


# ---------------------------------------------------------------------------
# samplers


def _batch_signature_from_steps(steps: Sequence[np.ndarray], d: int, N: int) -> list[np.ndarray]:
    P = steps[0].shape[0] if len(steps) else 0
    S = batch_identity(P, d, N)
    for v in steps:
        S = batch_mul_exp(S, v)
    return S


@dataclass
class BrownianSampler:
    """X = int σ(u) dB_u on [0, T] sampled on a uniform grid.

    ``sigma`` is a (d, m) matrix or a callable u -> matrix; each step uses the
    covariance a(midpoint) dt. Signatures are those of the piecewise-linear
    interpolation.
    """

    sigma: object
    T: float = 1.0
    steps: int = 200

    def __post_init__(self):
        s0 = self._sigma(0.0)
        self.d = s0.shape[0]

    def _sigma(self, u):
        s = self.sigma(u) if callable(self.sigma) else self.sigma
        return np.atleast_2d(np.asarray(s, dtype=float))

    def increments(self, rng: np.random.Generator, n: int) -> np.ndarray:
        dt = self.T / self.steps
        out = np.empty((n, self.steps, self.d))
        for j in range(self.steps):
            s = self._sigma((j + 0.5) * dt)
            z = rng.standard_normal((n, s.shape[1]))
            out[:, j, :] = math.sqrt(dt) * z @ s.T
        return out

    def signatures(self, rng, n, N):
        inc = self.increments(rng, n)
        return _batch_signature_from_steps([inc[:, j, :] for j in range(self.steps)], self.d, N), {}


@dataclass
class LevySampler:
    """Drift + diffusion + compound Poisson with finitely many atoms.

    In each step the continuous increment (b - compensator) dt + σ ΔB is split
    at a uniform fraction U and the step's jumps (Marcus: exp(x)) are inserted
    there. Jump counts are Poisson per atom.
    """

    triplet: LevyTriplet
    T: float = 1.0
    steps: int = 500

    def __post_init__(self):
        self.d = self.triplet.d
        w, V = np.linalg.eigh(self.triplet.a)
        self._root = V * np.sqrt(np.clip(w, 0.0, None))

    def signatures(self, rng, n, N):
        tr, d = self.triplet, self.d
        dt = self.T / self.steps
        drift = (tr.b - tr.compensator()) * dt
        S = batch_identity(n, d, N)
        n_jumps = np.zeros(n, dtype=np.int64)
        for _ in range(self.steps):
            cont = drift + math.sqrt(dt) * rng.standard_normal((n, d)) @ self._root.T
            U = rng.random(n)[:, None]
            counts = np.stack([rng.poisson(rate * dt, n) for rate, _ in tr.jumps], axis=1) if tr.jumps else None
            S = batch_mul_exp(S, U * cont)
            if counts is not None and counts.any():
                for a, (_, x) in enumerate(tr.jumps):
                    c = counts[:, a]
                    for k in range(int(c.max())):
                        idx = np.nonzero(c > k)[0]
                        sub = [lev[idx] for lev in S]
                        sub = batch_mul_exp(sub, np.broadcast_to(x, (idx.size, d)))
                        for lev, new in zip(S, sub):
                            lev[idx] = new
                n_jumps += counts.sum(axis=1)
            S = batch_mul_exp(S, (1.0 - U) * cont)
        return S, {"jumps": n_jumps}

    def jump_times(self, rng: np.random.Generator, horizon: float) -> np.ndarray:
        """Exact jump epochs of the compound Poisson part on [0, horizon]."""
        lam = self.triplet.total_rate
        times, t = [], rng.exponential(1.0 / lam)
        while t <= horizon:
            times.append(t)
            t += rng.exponential(1.0 / lam)
        return np.array(times)


@dataclass
class StoppedDomainSpec:
    """Γ = D^n x R^(d-n): exit when |(x_1, ..., x_n)| reaches 1."""

    d: int
    n: int
    x0: tuple = ()

    def __post_init__(self):
        if not 1 <= self.n <= self.d:
            raise ValueError("need 1 <= n <= d")
        x0 = np.zeros(self.d) if len(self.x0) == 0 else np.asarray(self.x0, dtype=float)
        if x0.size != self.d:
            raise ValueError("start point has wrong dimension")
        if np.sum(x0[: self.n] ** 2) >= 1.0:
            raise ValueError("start point must lie strictly inside the domain")
        self.x0 = tuple(x0)

    def expected_exit_time(self) -> float:
        """E^x τ = (1 - |x_{1..n}|²)/n, from (1/2) Δu = -1 with u = 0 on the boundary."""
        x = np.asarray(self.x0[: self.n])
        return (1.0 - float(x @ x)) / self.n


@dataclass
class StoppedBrownianSampler:
    """Euler walk of a standard BM until it leaves Γ.

    With ``bridge=True`` a step that stays inside is still counted as an exit
    with probability exp(-2 δ_0 δ_1 / dt), δ the distances to the boundary
    (half-plane Brownian-bridge approximation). The path stops at the grid point
    where the exit is detected; τ is that grid time.
    """

    spec: StoppedDomainSpec
    dt: float = 2.5e-4
    bridge: bool = True
    max_time: float = 50.0

    def __post_init__(self):
        self.d = self.spec.d

    def signatures(self, rng, n, N):
        spec, d = self.spec, self.d
        x = np.tile(np.asarray(spec.x0), (n, 1))
        S = batch_identity(n, d, N)
        tau = np.full(n, np.nan)
        active = np.arange(n)
        sq = math.sqrt(self.dt)
        steps = 0
        while active.size:
            steps += 1
            if steps * self.dt > self.max_time:
                raise RuntimeError("paths did not exit before max_time")
            v = sq * rng.standard_normal((active.size, d))
            u = rng.random(active.size)
            sub = [lev[active] for lev in S]
            sub = batch_mul_exp(sub, v)
            for lev, new in zip(S, sub):
                lev[active] = new
            old = x[active]
            new = old + v
            x[active] = new
            r0 = np.sqrt(np.sum(old[:, : spec.n] ** 2, axis=1))
            r1 = np.sqrt(np.sum(new[:, : spec.n] ** 2, axis=1))
            out = r1 >= 1.0
            if self.bridge:
                p = np.exp(-2.0 * (1.0 - r0) * np.maximum(1.0 - r1, 0.0) / self.dt)
                out |= u < p
            tau[active[out]] = steps * self.dt
            active = active[~out]
        return S, {"tau": tau}


@dataclass
class VolterraSampler:
    """Euler scheme for V^i with full truncation sqrt(max(V, 0)).

    X^i = ξ^i(T) has increments K^i(T, t_j) sqrt(V^i_{t_j}^+) ΔW^i_j. Constant
    and exponential kernels are updated in O(1) per step; other kernels fall
    back to the O(steps²) convolution. The number of steps with V < 0 is
    reported per path as ``clamps``.
    """

    spec: VolterraSpec
    steps: int = 500

    def __post_init__(self):
        self.d = self.spec.d

    def signatures(self, rng, n, N):
        spec, d = self.spec, self.d
        T = spec.T
        dt = T / self.steps
        grid = np.arange(self.steps + 1) * dt
        V0 = np.asarray(spec.V0)
        V = np.tile(V0, (n, 1))
        S = batch_identity(n, d, N)
        clamps = np.zeros(n, dtype=np.int64)
        hist = []  # for generic kernels: sqrt(V+) dW per step
        for j in range(self.steps):
            dW = math.sqrt(dt) * rng.standard_normal((n, d))
            clamps += np.any(V < 0, axis=1)
            root = np.sqrt(np.maximum(V, 0.0))
            noise = root * dW
            kT = np.array([float(K(T, grid[j])) for K in spec.kernels])
            S = batch_mul_exp(S, noise * kT)
            hist.append(noise)
            newV = np.empty_like(V)
            for i, K in enumerate(spec.kernels):
                if K.kind == "constant":
                    newV[:, i] = V[:, i] + K.c * noise[:, i]
                elif K.kind == "exponential":
                    decay = math.exp(-K.lam * dt)
                    newV[:, i] = V0[i] + decay * (V[:, i] - V0[i] + K.c * noise[:, i])
                else:
                    w = np.array([float(K(grid[j + 1], grid[m])) for m in range(j + 1)])
                    newV[:, i] = V0[i] + np.stack([h[:, i] for h in hist], axis=1) @ w
            V = newV
        return S, {"clamps": clamps}


def sampler_from_spec(spec: dict):
    """Build (sampler, closed_form(N) or None) from a JSON model description."""
    kind = spec.get("model")
    T = float(spec.get("T", 1.0))
    if kind == "brownian":
        d = int(spec.get("d", 2))
        sigma = np.asarray(spec.get("sigma", np.eye(d)), dtype=float)
        steps = int(spec.get("steps", 200))
        a = sigma @ sigma.T
        closed = None
        if np.allclose(a, np.eye(d)):
            closed = lambda N: fawcett(d, 0.0, T, N)  # noqa: E731
        else:
            from .cumulants import gaussian_cumulant

            closed = lambda N: gaussian_cumulant(GaussianMartingaleModel.constant(a), 0.0, T, N)  # noqa: E731
        return BrownianSampler(sigma, T, steps), closed
    if kind == "levy":
        tr = levy_from_spec(spec)
        return LevySampler(tr, T, int(spec.get("steps", 500))), (lambda N: levy_cumulant(tr, 0.0, T, N))
    if kind == "volterra":
        vs = volterra_from_spec(spec)
        return VolterraSampler(vs, int(spec.get("steps", 500))), (lambda N: volterra_cumulants(vs))
    if kind == "stopped":
        st = StoppedDomainSpec(int(spec["d"]), int(spec.get("n", spec["d"])), tuple(spec.get("x0", ())))
        sampler = StoppedBrownianSampler(st, float(spec.get("dt", 2.5e-4)), bool(spec.get("bridge", True)))
        tau = st.expected_exit_time()

        def closed(N):
            return TruncatedTensor.from_words(
                AlgebraShape(st.d, N), {(i, i): 0.5 * tau for i in range(1, st.d + 1)}
            )

        return sampler, closed
    raise ValueError(f"unknown model {kind!r}")


def levy_from_spec(spec: dict) -> LevyTriplet:
    d = int(spec.get("d", len(spec.get("b", [0.0]))))
    b = spec.get("b", [0.0] * d)
    a = spec.get("a", np.zeros((d, d)).tolist())
    jumps = [(float(j["rate"]), j["x"]) for j in spec.get("jumps", [])]
    return LevyTriplet(b, a, jumps)


def volterra_from_spec(spec: dict) -> VolterraSpec:
    kernels = [Kernel.from_json(k) for k in spec.get("kernels", [{"kind": "constant"}] * 2)]
    V0 = spec.get("V0", [1.0] * len(kernels))
    return VolterraSpec(tuple(kernels), tuple(V0), float(spec.get("T", 1.0)))
