"""Signature cumulants: exact tree oracle, the G- and H-form recursions, the
Gaussian backward equation, diamonds, the commutative recursion, discrete
Bartlett identities and a Monte-Carlo estimator of expected signatures.

On a finite tree a node at depth i sits at grid time t_i; the edge into it
carries the jump ΔX at t_i. The cumulant process is constant between grid
times, so its left limit at t_i is the parent's value.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, Sequence

import numpy as np

from . import graded
from .lie_ops import OuterTensor, bernoulli_numbers, ad_series_apply, AdSeries
from .quadrature import DEFAULT_TOL, BackwardGrid, integrate, solve_backward
from .tensor_core import (
    AlgebraShape,
    SymTensor,
    TruncatedTensor,
    _sym_product_table,
    _zeros,
    concat_mul,
    exp_trunc,
    log_derivative,
    log_trunc,
    mpq,
    multisets,
    sym_exp,
    sym_log,
    tensor_from_json,
    tensor_to_json,
    to_exact,
)

AdaptedTensorProcess = Dict[Hashable, TruncatedTensor]


# ---------------------------------------------------------------------------
# finite trees


@dataclass
class TreeNode:
    id: Hashable
    parent: Hashable | None
    prob: object
    jump: TruncatedTensor
    depth: int = 0
    children: list = field(default_factory=list)


class FiniteTreeModel:
    """Finite filtration tree with one layer per grid time.

    Every non-root node stores the conditional probability of reaching it from
    its parent and the jump ΔX on that edge.
    """

    def __init__(self, times: Sequence[float], nodes: Iterable[TreeNode], shape: AlgebraShape, exact: bool):
        self.times = list(times)
        self.shape = shape
        self.exact = exact
        self.nodes: dict = {}
        for nd in nodes:
            if nd.id in self.nodes:
                raise ValueError(f"duplicate node id {nd.id!r}")
            self.nodes[nd.id] = nd
        self._validate()

    @property
    def M(self) -> int:
        return len(self.times) - 1

    def _validate(self):
        if any(b <= a for a, b in zip(self.times[:-1], self.times[1:])):
            raise ValueError("tree times must be strictly increasing")
        roots = [nd for nd in self.nodes.values() if nd.parent is None]
        if len(roots) != 1:
            raise ValueError(f"tree needs exactly one root, found {len(roots)}")
        self.root = roots[0].id
        for nd in self.nodes.values():
            nd.children = []
        for nd in self.nodes.values():
            if nd.parent is not None:
                if nd.parent not in self.nodes:
                    raise ValueError(f"node {nd.id!r} has unknown parent {nd.parent!r}")
                self.nodes[nd.parent].children.append(nd.id)
            if nd.jump.shape != self.shape or nd.jump.exact != self.exact:
                raise ValueError(f"node {nd.id!r}: jump has wrong shape or scalar mode")
            if nd.jump.scalar != 0:
                raise ValueError(f"node {nd.id!r}: jump must lie in T_0")
        order, stack = [], [(self.root, 0)]
        while stack:
            v, depth = stack.pop()
            self.nodes[v].depth = depth
            order.append(v)
            stack.extend((c, depth + 1) for c in reversed(self.nodes[v].children))
        if len(order) != len(self.nodes):
            raise ValueError("tree is not connected")
        self.order = order  # parents before children
        for nd in self.nodes.values():
            if nd.children:
                probs = [self.nodes[c].prob for c in nd.children]
                if any(p <= 0 for p in probs):
                    raise ValueError(f"node {nd.id!r}: edge probabilities must be positive")
                total = sum(probs)
                ok = total == 1 if self.exact else abs(total - 1.0) < 1e-12
                if not ok:
                    raise ValueError(f"node {nd.id!r}: child probabilities sum to {total}")
            elif nd.depth != self.M:
                raise ValueError(f"leaf {nd.id!r} at depth {nd.depth}, expected {self.M}")

    def children(self, v):
        return self.nodes[v].children

    def time(self, v) -> float:
        return self.times[self.nodes[v].depth]

    def backward_order(self) -> list:
        return self.order[::-1]

    def leaves(self) -> list:
        return [v for v in self.order if not self.nodes[v].children]

    def path_to_root(self, v) -> list:
        out = []
        while v is not None:
            out.append(v)
            v = self.nodes[v].parent
        return out[::-1]

    def leaf_probabilities(self, v) -> dict:
        """P(leaf | node v) for every leaf below v."""
        out, stack = {}, [(v, mpq(1) if self.exact else 1.0)]
        while stack:
            u, p = stack.pop()
            kids = self.nodes[u].children
            if not kids:
                out[u] = p
            for c in kids:
                stack.append((c, p * self.nodes[c].prob))
        return out

    # -- io -------------------------------------------------------------------
    @classmethod
    def from_json(cls, obj: dict | str, exact: bool | None = None) -> "FiniteTreeModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            times = [float(t) for t in obj["times"]]
            raw = obj["nodes"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed tree JSON: {exc}") from exc
        if exact is None:
            exact = any(isinstance(n.get("prob"), str) for n in raw) or any(
                isinstance(c, str) for n in raw if n.get("jump") for lev in n["jump"]["levels"] for c in lev
            ) or bool(obj.get("exact"))
        shape = None
        for n in raw:
            if n.get("jump") is not None:
                j = n["jump"]
                shape = AlgebraShape(int(j["d"]), int(j["N"]))
                break
        if shape is None:
            shape = AlgebraShape(int(obj.get("d", 1)), int(obj.get("N", 1)))
        nodes = []
        for n in raw:
            parent = n.get("parent")
            prob = n.get("prob", 1)
            prob = to_exact(prob) if exact else float(mpq(prob) if isinstance(prob, str) else prob)
            if n.get("jump") is None:
                jump = TruncatedTensor.zero(shape, exact)
            else:
                jump = tensor_from_json(n["jump"], exact)
                if jump.shape != shape:
                    raise ValueError(f"node {n.get('id')!r}: jump shape differs from the tree shape")
            nodes.append(TreeNode(n["id"], parent, prob, jump))
        return cls(times, nodes, shape, exact)

    def to_json(self) -> dict:
        nodes = []
        for v in self.order:
            nd = self.nodes[v]
            p = nd.prob
            nodes.append(
                {
                    "id": nd.id,
                    "parent": nd.parent,
                    "prob": (f"{mpq(p).numerator}/{mpq(p).denominator}" if self.exact else float(p)),
                    "jump": tensor_to_json(nd.jump),
                }
            )
        return {"times": self.times, "nodes": nodes}

    def map_jumps(self, f: Callable[[TruncatedTensor], TruncatedTensor]) -> "FiniteTreeModel":
        nodes = [TreeNode(nd.id, nd.parent, nd.prob, f(nd.jump)) for nd in self.nodes.values()]
        shape = next(iter(nodes)).jump.shape if nodes else self.shape
        exact = next(iter(nodes)).jump.exact if nodes else self.exact
        return FiniteTreeModel(self.times, nodes, shape, exact)


def random_tree(
    rng: np.random.Generator,
    d: int,
    N: int,
    depth: int,
    max_branching: int,
    exact: bool = True,
    denominator: int = 4,
    jump_levels: int = 1,
) -> FiniteTreeModel:
    """Random tree with small-denominator rational probabilities and jumps."""
    shape = AlgebraShape(d, N)
    times = list(range(depth + 1))
    nodes = [TreeNode(0, None, mpq(1) if exact else 1.0, TruncatedTensor.zero(shape, exact))]
    frontier, next_id = [0], 1
    for _ in range(depth):
        new = []
        for v in frontier:
            b = int(rng.integers(1, max_branching + 1))
            weights = rng.integers(1, 4, size=b)
            total = int(weights.sum())
            for w in weights:
                levels = [[0]] + [
                    [
                        mpq(int(rng.integers(-denominator, denominator + 1)), denominator) if k <= jump_levels else 0
                        for _ in range(d**k)
                    ]
                    for k in range(1, N + 1)
                ]
                jump = TruncatedTensor(shape, levels, exact=True)
                prob = mpq(int(w), total)
                if not exact:
                    jump, prob = jump.to_float(), float(prob)
                nodes.append(TreeNode(next_id, v, prob, jump))
                new.append(next_id)
                next_id += 1
        frontier = new
    return FiniteTreeModel(times, nodes, shape, exact)


def expected_signatures(model: FiniteTreeModel) -> AdaptedTensorProcess:
    """mu(v) = sum_children p exp(Δx) mu(child), mu(leaf) = 1."""
    mu = {}
    for v in model.backward_order():
        kids = model.children(v)
        if not kids:
            mu[v] = TruncatedTensor.one(model.shape, model.exact)
            continue
        acc = TruncatedTensor.zero(model.shape, model.exact)
        for c in kids:
            nd = model.nodes[c]
            acc = acc + concat_mul(exp_trunc(nd.jump), mu[c]).scale(nd.prob)
        mu[v] = acc
    return mu


def signature_cumulants(model: FiniteTreeModel) -> AdaptedTensorProcess:
    return {v: log_trunc(m) for v, m in expected_signatures(model).items()}


def tree_expected_signature(model: FiniteTreeModel, node=None) -> TruncatedTensor:
    return expected_signatures(model)[model.root if node is None else node]


def tree_signature_cumulant(model: FiniteTreeModel, node=None) -> TruncatedTensor:
    return log_trunc(tree_expected_signature(model, node))


def _tree_recursion(model: FiniteTreeModel, jump_term) -> AdaptedTensorProcess:
    """Level-by-level backward sweep.

    kappa^(n)(v) = sum_c p_c (ΔX_c^(n) + jump_term(ΔX_c, kappa(c), kappa(v), n) + kappa^(n)(c)),
    which is E_v of X^(n)_{t,T} plus the summed jump terms, by the tower property.
    """
    shape, exact, d = model.shape, model.exact, model.shape.d
    levels = {v: [_zeros(d**k, exact) for k in range(shape.N + 1)] for v in model.nodes}
    for n in range(1, shape.N + 1):
        for v in model.backward_order():
            kids = model.children(v)
            if not kids:
                continue
            kb = graded._Levels(levels[v])
            acc = _zeros(d**n, exact)
            for c in kids:
                nd = model.nodes[c]
                term = nd.jump.levels[n] + levels[c][n]
                if n >= 2:
                    term = term + jump_term(graded._Levels(nd.jump.levels), graded._Levels(levels[c]), kb, n, d, exact)
                acc = acc + nd.prob * term
            levels[v][n] = acc
            kb.nz[n] = graded._nonzero(acc)
    return {v: TruncatedTensor._wrap(shape, lev, exact) for v, lev in levels.items()}


def recursion_G(model: FiniteTreeModel) -> AdaptedTensorProcess:
    """Cumulants from the G-form recursion (Mag + Jmp terms; Qua = Cov = 0 on trees)."""

    def term(dx, ka, kb, n, d, exact):
        dk = graded._Levels([a - b for a, b in zip(ka.levels, kb.levels)])
        return graded.mag_G(kb, dk, n, d, exact) + graded.jmp_G(dx, ka, kb, n, d, exact)

    return _tree_recursion(model, term)


def recursion_H(model: FiniteTreeModel) -> AdaptedTensorProcess:
    """Cumulants from the H-form recursion (HMag¹ + HJmp; other terms vanish on trees)."""

    def term(dx, ka, kb, n, d, exact):
        return graded.hmag1(kb, dx, n, d, exact) + graded.hjmp(dx, ka, kb, n, d, exact)

    return _tree_recursion(model, term)


def max_residual(a: AdaptedTensorProcess, b: AdaptedTensorProcess):
    """Largest coefficient difference over all nodes (exact rational if both are exact)."""
    worst = 0
    for v in a:
        for x, y in zip(a[v].levels, b[v].levels):
            diff = x - y
            m = max((abs(c) for c in diff), default=0)
            worst = max(worst, m)
    return worst


# ---------------------------------------------------------------------------
# Gaussian martingales


@dataclass
class GaussianMartingaleModel:
    """X_t = int_0^t sigma(u) dB_u with a(t) = sigma(t) sigma(t)^T deterministic."""

    d: int
    a: Callable[[float], np.ndarray]
    breakpoints: tuple = ()

    @classmethod
    def constant(cls, a) -> "GaussianMartingaleModel":
        A = np.atleast_2d(np.asarray(a, dtype=float))
        _check_psd(A)
        return cls(A.shape[0], lambda u, A=A: A)

    @classmethod
    def piecewise_constant(cls, times: Sequence[float], mats: Sequence) -> "GaussianMartingaleModel":
        """a(u) = mats[i] for times[i] <= u < times[i+1]; the last matrix extends to the right."""
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
        for m in mats:
            _check_psd(m)
        times = list(times)
        if len(times) != len(mats):
            raise ValueError("need one start time per matrix")

        def a(u):
            i = max(0, int(np.searchsorted(times, u, side="right")) - 1)
            return mats[i]

        return cls(mats[0].shape[0], a, tuple(times[1:]))

    def a_vec(self, u: np.ndarray) -> np.ndarray:
        """a evaluated at an array of times, shape (len(u), d, d)."""
        return np.stack([np.asarray(self.a(float(s)), dtype=float).reshape(self.d, self.d) for s in np.ravel(u)])


def _check_psd(A: np.ndarray):
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("covariance must be a symmetric square matrix")
    if np.min(np.linalg.eigvalsh(A)) < -1e-12:
        raise ValueError("covariance must be positive semidefinite")


def gaussian_cumulant(
    model: GaussianMartingaleModel, t: float, T: float, N: int, tol: float = DEFAULT_TOL
) -> TruncatedTensor:
    """Signature cumulant of a Gaussian martingale with deterministic covariance.

    Solves kappa_t = int_t^T H(ad kappa_u)(a(u)/2) du level by level: odd levels
    vanish, kappa^(2) = (1/2) int a, and for n >= 2

        kappa^(2n)_t = sum_{||ℓ||=n-1} B_k/k! int_t^T ad kappa_u^(2 l_1) ... ad kappa_u^(2 l_k)(a(u)/2) du.

    The factor 1/2 is what makes kappa^(2) equal to half the covariance, as in
    Fawcett's formula. Integrals use composite Gauss–Legendre panels that are
    doubled until the result at t moves by less than ``tol``.
    """
    shape = AlgebraShape(model.d, N)
    d = model.d
    if T == t or N < 2:
        return TruncatedTensor.zero(shape)
    B = bernoulli_numbers(N)

    def step(grid: BackwardGrid) -> np.ndarray:
        P, Q = grid.nodes.shape
        half_a = 0.5 * model.a_vec(grid.flat_nodes).reshape(P * Q, d * d)
        kappa = {}  # even level -> values at nodes, shape (P*Q, d^level)
        at_t = {}
        for n in range(1, N // 2 + 1):
            integrand = np.zeros((P * Q, d ** (2 * n)))
            for ell in graded.compositions(n - 1):
                k = len(ell)
                c = float(B[k]) / math.factorial(k)
                if c == 0.0:
                    continue
                for q in range(P * Q):
                    integrand[q] += c * graded.ad_chain([kappa[2 * l][q] for l in ell], half_a[q])
            cum, total = grid.cumulative(integrand.reshape(P, Q, -1))
            kappa[2 * n] = cum.reshape(P * Q, -1)
            at_t[2 * n] = total
        return np.concatenate([at_t[2 * n] for n in range(1, N // 2 + 1)])

    flat = solve_backward(step, t, T, model.breakpoints, tol)
    levels = [np.zeros(d**k) for k in range(N + 1)]
    pos = 0
    for n in range(1, N // 2 + 1):
        levels[2 * n] = flat[pos : pos + d ** (2 * n)]
        pos += d ** (2 * n)
    return TruncatedTensor(shape, levels)


# ---------------------------------------------------------------------------
# diamonds


@dataclass
class AffineProcess:
    """A tensor- or symmetric-valued process whose continuous martingale part is
    linear in a Gaussian driver M: dX^{c,w}_u = sum_i L^w_i(u) dM^i_u.

    ``loadings`` maps a level n to either an array of shape (size_n, m) or a
    callable u -> such array; missing levels have no martingale part.
    """

    shape: AlgebraShape
    loadings: dict
    symmetric: bool = False

    def loading(self, n: int, u: float) -> np.ndarray | None:
        L = self.loadings.get(n)
        if L is None:
            return None
        return np.asarray(L(u) if callable(L) else L, dtype=float)


def level_one_process(d: int, N: int, symmetric: bool = False) -> AffineProcess:
    """The driver itself, embedded at level 1."""
    return AffineProcess(AlgebraShape(d, N), {1: np.eye(d)}, symmetric)


def diamond(
    x: AffineProcess,
    y: AffineProcess,
    bracket: Callable[[float], np.ndarray] | GaussianMartingaleModel,
    t: float,
    T: float,
    outer: bool = False,
    tol: float = DEFAULT_TOL,
) -> TruncatedTensor | SymTensor | OuterTensor:
    """(X ◇ Y)_t(T) = E_t <X^c, Y^c>_{t,T} assembled word by word.

    With d<M^i, M^j>_u = a_ij(u) du deterministic, the (w1, w2) entry is
    int_t^T L_x^{w1}(u) a(u) L_y^{w2}(u)^T du. The inner diamond multiplies the
    two words; ``outer=True`` keeps them apart as an OuterTensor.
    """
    if x.shape != y.shape or x.symmetric != y.symmetric:
        raise ValueError("diamond needs processes of the same shape and kind")
    a_fn = bracket.a if isinstance(bracket, GaussianMartingaleModel) else bracket
    cuts = bracket.breakpoints if isinstance(bracket, GaussianMartingaleModel) else ()
    shape, d = x.shape, x.shape.d
    blocks = {}
    for l1 in range(1, shape.N):
        for l2 in range(1, shape.N - l1 + 1):
            if x.loadings.get(l1) is None or y.loadings.get(l2) is None:
                continue

            def f(u, l1=l1, l2=l2):
                return np.stack(
                    [x.loading(l1, s) @ np.atleast_2d(a_fn(s)) @ y.loading(l2, s).T for s in np.ravel(u)]
                )

            blocks[(l1, l2)] = integrate(f, t, T, tol, breakpoints=cuts)
    if outer:
        if x.symmetric:
            raise ValueError("outer diamonds are defined for tensor-valued processes")
        return OuterTensor(shape, blocks)
    if x.symmetric:
        levels = [np.zeros(len(multisets(d, n))) for n in range(shape.N + 1)]
        for (l1, l2), blk in blocks.items():
            np.add.at(levels[l1 + l2], _sym_product_table(d, l1, l2).ravel(), blk.ravel())
        return SymTensor(shape, levels)
    levels = [np.zeros(d**n) for n in range(shape.N + 1)]
    for (l1, l2), blk in blocks.items():
        levels[l1 + l2] = levels[l1 + l2] + blk.ravel()
    return TruncatedTensor(shape, levels)


# ---------------------------------------------------------------------------
# commutative recursion


def _sym_levels(x: SymTensor) -> list[np.ndarray]:
    return [np.array(lev, copy=True) for lev in x.levels]


def commutative_recursion_tree(
    model: FiniteTreeModel, xi: dict, shape: AlgebraShape | None = None
) -> dict[Hashable, SymTensor]:
    """K^(n) = E_t Xi^(n) + J^(n) on a tree (all diamonds vanish).

    ``xi`` maps every leaf to an S_0-valued payoff. Leaves carry K = Xi, and at
    an inner node K^(n)(v) = sum_c p_c (K^(n)(c) + jump_n(K(c) - K(v))).
    """
    some = next(iter(xi.values()))
    shape = some.shape if shape is None else shape
    exact, d = some.exact, shape.d
    K = {}
    for leaf in model.leaves():
        if leaf not in xi:
            raise ValueError(f"payoff missing for leaf {leaf!r}")
        K[leaf] = _sym_levels(xi[leaf])
    for v in model.nodes:
        if model.children(v):
            K[v] = [_zeros(len(multisets(d, n)), exact) for n in range(shape.N + 1)]
    for n in range(1, shape.N + 1):
        for v in model.backward_order():
            kids = model.children(v)
            if not kids:
                continue
            acc = _zeros(len(multisets(d, n)), exact)
            for c in kids:
                term = K[c][n]
                if n >= 2:
                    dk = [a - b for a, b in zip(K[c], K[v])]
                    term = term + graded.sym_jump(dk, n, d, exact)
                acc = acc + model.nodes[c].prob * term
            K[v][n] = acc
    return {v: SymTensor._wrap(shape, lev, exact) for v, lev in K.items()}


def commutative_oracle_tree(model: FiniteTreeModel, xi: dict) -> dict[Hashable, SymTensor]:
    """log E_v exp(Xi) by backward dynamic programming."""
    some = next(iter(xi.values()))
    m = {}
    for v in model.backward_order():
        kids = model.children(v)
        if not kids:
            m[v] = sym_exp(xi[v])
            continue
        acc = SymTensor.zero(some.shape, some.exact)
        for c in kids:
            acc = acc + m[c].scale(model.nodes[c].prob)
        m[v] = acc
    return {v: sym_log(mv) for v, mv in m.items()}


def commutative_recursion_gaussian(
    model: GaussianMartingaleModel,
    t: float,
    T: float,
    N: int,
    x_t: Sequence[float] | None = None,
    xi_const: SymTensor | None = None,
    tol: float = DEFAULT_TOL,
) -> SymTensor:
    """K_t for Xi = X_T (level 1) + deterministic higher-degree terms, X Gaussian.

    Each K^(k) is affine in X_t with a constant loading, so the diamonds come
    from :func:`diamond` with the model's covariance.
    """
    d = model.d
    shape = AlgebraShape(d, N)
    x_t = np.zeros(d) if x_t is None else np.asarray(x_t, dtype=float)
    const = [np.zeros(len(multisets(d, n))) for n in range(N + 1)]
    if xi_const is not None:
        for n in range(2, N + 1):
            const[n] = np.array(xi_const.to_float().levels[n], dtype=float)
    loadings = {1: np.eye(d)}
    K = [np.zeros(1)] + [np.zeros(len(multisets(d, n))) for n in range(1, N + 1)]
    if N >= 1:
        K[1] = x_t.copy()
    for n in range(2, N + 1):
        total = const[n].copy()
        for k in range(1, n):
            if k not in loadings or (n - k) not in loadings:
                continue
            px = AffineProcess(shape, {k: loadings[k]}, symmetric=True)
            py = AffineProcess(shape, {n - k: loadings[n - k]}, symmetric=True)
            total = total + 0.5 * np.asarray(diamond(px, py, model, t, T, tol=tol).levels[n])
        K[n] = total
    return SymTensor(shape, K)


# ---------------------------------------------------------------------------
# discrete Bartlett identities


@dataclass
class BartlettReport:
    node: Hashable
    lhs2: object
    rhs2: object
    lhs3: object | None
    rhs3: object | None

    @property
    def residual2(self):
        return self.lhs2 - self.rhs2

    @property
    def residual3(self):
        return None if self.lhs3 is None else self.lhs3 - self.rhs3


def discrete_bartlett(model: FiniteTreeModel, xi: dict, xi2: dict | None = None) -> list[BartlettReport]:
    """Both sides of the level-2 and level-3 Bartlett identities at every inner node.

    ``xi`` maps leaves to the scalar payoff Xi^(1); ``xi2`` optionally to Xi^(2)
    (coefficient of ê_1^2). Cumulants are reported in the moment normalisation
    c_n = n! K^(n), which is how the identities are usually written:

      c_2(t) = 2 E_t Xi^(2) + E_t sum_u (l_u - l_{u-1})^2,
      c_3(t) = E_t sum_u [(Δl_u)^3 + 3 Δl_u (E_u QV_{u,T} - E_{u-1} QV_{u-1,T})]   (Xi^(2) = 0)

    with l_u = E_u Xi^(1) and QV_{u,T} = sum_{s>u} (Δl_s)^2. The level-3 identity
    is only reported when ``xi2`` is absent.
    """
    exact = model.exact
    zero = mpq(0) if exact else 0.0
    shape = AlgebraShape(1, 3)

    def sym(c1, c2=zero):
        return SymTensor(shape, [[0], [c1], [c2], [0]], exact)

    payoff = {v: sym(xi[v], (xi2 or {}).get(v, zero)) for v in model.leaves()}
    K = commutative_oracle_tree(model, payoff)

    # martingale l and the forward-looking conditional quadratic variation
    l, e_xi2, qv = {}, {}, {}
    for v in model.backward_order():
        kids = model.children(v)
        if not kids:
            l[v] = xi[v]
            e_xi2[v] = (xi2 or {}).get(v, zero)
            qv[v] = zero
            continue
        l[v] = sum((model.nodes[c].prob * l[c] for c in kids), zero)
        e_xi2[v] = sum((model.nodes[c].prob * e_xi2[c] for c in kids), zero)
        qv[v] = sum((model.nodes[c].prob * ((l[c] - l[v]) ** 2 + qv[c]) for c in kids), zero)

    # E_v sum_u f(edge u) by backward accumulation
    def expected_sum(edge_value):
        acc = {}
        for v in model.backward_order():
            kids = model.children(v)
            acc[v] = sum((model.nodes[c].prob * (edge_value(v, c) + acc[c]) for c in kids), zero)
        return acc

    rhs2 = expected_sum(lambda v, c: (l[c] - l[v]) ** 2)
    rhs3 = expected_sum(lambda v, c: (l[c] - l[v]) ** 3 + 3 * (l[c] - l[v]) * (qv[c] - qv[v]))
    out = []
    for v in model.order:
        if not model.children(v):
            continue
        lhs2 = 2 * K[v][(1, 1)]
        lhs3 = 6 * K[v][(1, 1, 1)] if xi2 is None else None
        out.append(
            BartlettReport(v, lhs2, 2 * e_xi2[v] + rhs2[v], lhs3, rhs3[v] if xi2 is None else None)
        )
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MCResult:
    mean: TruncatedTensor
    stderr: TruncatedTensor
    n_paths: int
    seed: int
    cov: np.ndarray  # covariance of the flattened per-path signature (levels >= 1)
    extras: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.mean
        yield self.stderr


def _flatten(levels: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([lev for lev in levels[1:]], axis=1)


def _unflatten(vec: np.ndarray, shape: AlgebraShape, scalar: float) -> TruncatedTensor:
    levels, pos = [np.array([scalar])], 0
    for k in range(1, shape.N + 1):
        levels.append(vec[pos : pos + shape.d**k])
        pos += shape.d**k
    return TruncatedTensor(shape, levels)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Counter-based stream for one chunk of paths: Philox keyed by (seed, chunk)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def mc_expected_signature(
    sampler,
    n_paths: int,
    seed: int,
    N: int,
    chunk_size: int = 10_000,
    workers: int = 1,
) -> MCResult:
    """Empirical mean and standard error of per-path signatures.

    ``sampler.signatures(rng, n, N)`` returns per-level arrays of shape
    (n, d^k), optionally paired with a dict of per-path side outputs (exit
    times, clamp counts) that are concatenated into ``extras``. Path i belongs
    to chunk i // chunk_size, whose generator depends only on (seed, chunk), so
    results do not depend on ``workers``.
    """
    if n_paths < 2:
        raise ValueError("need at least two paths for a standard error")
    d = sampler.d
    shape = AlgebraShape(d, N)
    chunks = [(c, min(chunk_size, n_paths - c * chunk_size)) for c in range(math.ceil(n_paths / chunk_size))]

    def run(job):
        c, n = job
        out = sampler.signatures(chunk_rng(seed, c), n, N)
        levels, extras = out if isinstance(out, tuple) else (out, None)
        flat = _flatten(levels)
        return flat.sum(axis=0), flat.T @ flat, extras

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(job) for job in chunks]
    s1 = sum(r[0] for r in results)
    s2 = sum(r[1] for r in results)
    mean = s1 / n_paths
    cov = (s2 - n_paths * np.outer(mean, mean)) / (n_paths - 1)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0) / n_paths)
    extras = {}
    for r in results:
        for key, val in (r[2] or {}).items():
            extras.setdefault(key, []).append(np.atleast_1d(val))
    extras = {key: np.concatenate(vals) for key, vals in extras.items()}
    return MCResult(_unflatten(mean, shape, 1.0), _unflatten(se, shape, 0.0), n_paths, seed, cov, extras)


def mc_signature_cumulant(result: MCResult) -> tuple[TruncatedTensor, TruncatedTensor]:
    """log of the MC mean and delta-method standard errors, coefficient by coefficient."""
    mu = result.mean
    shape = mu.shape
    D = result.cov.shape[0]
    J = np.zeros((D, D))
    for col in range(D):
        e = np.zeros(D)
        e[col] = 1.0
        J[:, col] = _flatten([lev[None, :] for lev in log_derivative(mu, _unflatten(e, shape, 0.0)).levels])[0]
    var = np.einsum("ij,jk,ik->i", J, result.cov, J) / result.n_paths
    return log_trunc(mu), _unflatten(np.sqrt(np.maximum(var, 0.0)), shape, 0.0)


def inhom_cumulant_core(
    eta: Callable[[float], TruncatedTensor],
    t: float,
    T: float,
    shape: AlgebraShape,
    breakpoints: Sequence[float] = (),
    tol: float = DEFAULT_TOL,
) -> TruncatedTensor:
    """kappa_t = int_t^T H(ad kappa_u)(eta(u)) du for a T_0-valued eta, level by level.

    Level n of the integrand only involves kappa at levels < n, so each level is
    one cumulative quadrature. H(ad .) is applied by Horner on full tensors.
    """
    if T == t:
        return TruncatedTensor.zero(shape)
    Hs = AdSeries.H(shape.N)
    d, N = shape.d, shape.N

    def step(grid: BackwardGrid) -> np.ndarray:
        P, Q = grid.nodes.shape
        etas = [eta(float(u)).to_float() for u in grid.flat_nodes]
        kappa = [[np.zeros(d**k) for k in range(N + 1)] for _ in etas]
        at_t = []
        for n in range(1, N + 1):
            integrand = np.empty((P * Q, d**n))
            for q, e in enumerate(etas):
                kq = TruncatedTensor._wrap(shape, [lev if k < n else np.zeros(d**k) for k, lev in enumerate(kappa[q])], False)
                integrand[q] = ad_series_apply(Hs, kq, e).levels[n]
            cum, total = grid.cumulative(integrand.reshape(P, Q, -1))
            cum = cum.reshape(P * Q, -1)
            for q in range(P * Q):
                kappa[q][n] = cum[q]
            at_t.append(total)
        return np.concatenate(at_t)

    flat = solve_backward(step, t, T, breakpoints, tol)
    return _unflatten(flat, shape, 0.0)
