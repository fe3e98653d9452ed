"""Ground-truth linear SCMs, exact d-separation and oracle role sets.

Everything here answers questions from the true graph. The discovery module is
tested against these answers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import SeriesFrame
from .graphs import Cpdag, Dag, GraphError
from .orientation import meek_closure, orient_v_structures


def random_dag(n_vars: int, edge_prob: float, seed: int) -> Dag:
    """Erdos-Renyi DAG over a random topological order."""
    if n_vars < 1:
        raise GraphError("n_vars must be >= 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_vars)
    draws = rng.random((n_vars, n_vars))
    edges = set()
    for x in range(n_vars):
        for y in range(x + 1, n_vars):
            if draws[x, y] < edge_prob:
                edges.add((int(order[x]), int(order[y])))
    return Dag(n_vars, frozenset(edges))


@dataclass(frozen=True)
class LinearScm:
    dag: Dag
    weights: dict[tuple[int, int], float]
    noise_std: tuple[float, ...]
    weight_band: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        if set(self.weights) != set(self.dag.edges):
            raise GraphError("weights must be given for exactly the DAG edges")
        lo, hi = self.weight_band
        for e, w in self.weights.items():
            if not lo - 1e-12 <= abs(w) <= hi + 1e-12:
                raise GraphError(f"|weight| of {e} = {abs(w)} outside [{lo}, {hi}]")
        if len(self.noise_std) != self.dag.n_vars or min(self.noise_std) <= 0:
            raise GraphError("need one positive noise std per variable")

    @classmethod
    def random(
        cls,
        dag: Dag,
        seed: int,
        weight_band: tuple[float, float] = (0.5, 2.0),
        noise_std: float | Sequence[float] = 1.0,
    ) -> "LinearScm":
        """Weights uniform in the band with a random sign."""
        rng = np.random.default_rng(seed)
        lo, hi = weight_band
        weights = {}
        for e in sorted(dag.edges):
            w = rng.uniform(lo, hi)
            weights[e] = float(w if rng.random() < 0.5 else -w)
        if np.isscalar(noise_std):
            noise = (float(noise_std),) * dag.n_vars
        else:
            noise = tuple(float(s) for s in noise_std)
        return cls(dag, weights, noise, weight_band)

    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((self.dag.n_vars, self.dag.n_vars))
        for (i, j), v in self.weights.items():
            w[i, j] = v
        return w

    def covariance(self) -> np.ndarray:
        """Exact covariance of the i.i.d. model: (I - W)^-T diag(s^2) (I - W)^-1."""
        n = self.dag.n_vars
        inv = np.linalg.inv(np.eye(n) - self.weight_matrix())
        return inv.T @ np.diag(np.square(self.noise_std)) @ inv


def _names(n: int) -> tuple[str, ...]:
    return tuple(f"V{i}" for i in range(n))


def sample_iid(scm: LinearScm, n: int, seed: int) -> SeriesFrame:
    """Ancestral sampling: ``V_j = sum_i w_ij V_i + eps_j``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = scm.dag.n_vars
    eps = rng.standard_normal((n, d)) * np.asarray(scm.noise_std)
    x = np.zeros((n, d))
    w = scm.weight_matrix()
    for j in scm.dag.topological_order():
        x[:, j] = x @ w[:, j] + eps[:, j]
    return SeriesFrame(x, _names(d))


def sample_lagged(
    scm: LinearScm,
    T: int,
    lag: int,
    seed: int,
    ar: float | Sequence[float] = 0.5,
    obs_noise: float = 0.0,
) -> SeriesFrame:
    """Time-series version: each edge acts with delay ``lag`` on top of an AR(1) self-term.

    ``ar`` is one coefficient for every variable or one per variable.

    ``obs_noise`` adds independent Gaussian measurement noise to the recorded
    values without feeding it back into the dynamics.
    """
    if not T > lag >= 1:
        raise ValueError(f"need T > lag >= 1, got T={T}, lag={lag}")
    rng = np.random.default_rng(seed)
    d = scm.dag.n_vars
    ar = np.broadcast_to(np.asarray(ar, dtype=np.float64), (d,))
    if np.any(np.abs(ar) >= 1):
        raise ValueError("AR coefficients must lie in (-1, 1)")
    burn = 10 * lag
    total = T + burn
    eps = rng.standard_normal((total, d)) * np.asarray(scm.noise_std)
    w = scm.weight_matrix()
    x = np.zeros((total, d))
    for t in range(total):
        prev = x[t - 1] if t >= 1 else np.zeros(d)
        cross = x[t - lag] @ w if t >= lag else np.zeros(d)
        x[t] = ar * prev + cross + eps[t]
    x = x[burn:]
    if obs_noise > 0:
        x = x + obs_noise * rng.standard_normal(x.shape)
    return SeriesFrame(x, _names(d))


def sample_ar_noise(
    scm: LinearScm,
    T: int,
    seed: int,
    ar: float | Sequence[float] = 0.5,
    obs_noise: float = 0.0,
) -> SeriesFrame:
    """Time series whose every row is an exact draw of the SCM.

    The structural equations act within a time step; each exogenous noise
    term follows its own stationary AR(1) process with unit marginal variance
    times ``noise_std``. Rows therefore carry the DAG's conditional
    independences exactly, while the future of a variable depends on the
    current noise state of its ancestors.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    d = scm.dag.n_vars
    ar = np.broadcast_to(np.asarray(ar, dtype=np.float64), (d,))
    if np.any(np.abs(ar) >= 1):
        raise ValueError("AR coefficients must lie in (-1, 1)")
    std = np.asarray(scm.noise_std)
    innov = rng.standard_normal((T, d)) * std * np.sqrt(1.0 - ar**2)
    u = np.empty((T, d))
    u[0] = rng.standard_normal(d) * std
    for t in range(1, T):
        u[t] = ar * u[t - 1] + innov[t]
    w = scm.weight_matrix()
    x = np.zeros((T, d))
    for j in scm.dag.topological_order():
        x[:, j] = x @ w[:, j] + u[:, j]
    if obs_noise > 0:
        x = x + obs_noise * rng.standard_normal(x.shape)
    return SeriesFrame(x, _names(d))


def _check_query(dag: Dag, a: int, b: int, z: Iterable[int]) -> frozenset[int]:
    z = frozenset(int(v) for v in z)
    for v in (a, b, *z):
        if not 0 <= v < dag.n_vars:
            raise IndexError(f"variable {v} out of range for {dag.n_vars} variables")
    if a == b:
        raise ValueError("a and b must differ")
    if a in z or b in z:
        raise ValueError("a and b must not be in the conditioning set")
    return z


def d_separated(dag: Dag, a: int, b: int, z: Iterable[int] = ()) -> bool:
    """Reachability (Bayes-ball) test of ``a _||_ b | z``."""
    z = _check_query(dag, a, b, z)
    parents = [dag.parents(v) for v in range(dag.n_vars)]
    children = [dag.children(v) for v in range(dag.n_vars)]
    # ancestors of z, z included
    anc = set(z)
    stack = list(z)
    while stack:
        v = stack.pop()
        for p in parents[v]:
            if p not in anc:
                anc.add(p)
                stack.append(p)
    # direction "up": arrived from a child; "down": arrived from a parent
    todo = [(a, "up")]
    visited = set()
    while todo:
        v, direction = todo.pop()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in z and v == b:
            return False
        if direction == "up" and v not in z:
            todo.extend((p, "up") for p in parents[v])
            todo.extend((c, "down") for c in children[v])
        elif direction == "down":
            if v not in z:
                todo.extend((c, "down") for c in children[v])
            if v in anc:
                todo.extend((p, "up") for p in parents[v])
    return True


def d_separated_bruteforce(dag: Dag, a: int, b: int, z: Iterable[int] = ()) -> bool:
    """Enumerate every simple skeleton path and test each for blocking."""
    z = _check_query(dag, a, b, z)
    nbrs = {v: set(dag.parents(v)) | set(dag.children(v)) for v in range(dag.n_vars)}
    desc = {v: dag.descendants(v) for v in range(dag.n_vars)}

    def active(path: list[int]) -> bool:
        for k in range(1, len(path) - 1):
            prev, mid, nxt = path[k - 1], path[k], path[k + 1]
            collider = (prev, mid) in dag.edges and (nxt, mid) in dag.edges
            if collider:
                if mid not in z and not (desc[mid] & z):
                    return False
            elif mid in z:
                return False
        return True

    def walk(path: list[int]) -> bool:
        v = path[-1]
        if v == b:
            return active(path)
        return any(walk(path + [w]) for w in sorted(nbrs[v]) if w not in path)

    return not walk([a])


@dataclass(frozen=True)
class OracleRoles:
    target: int
    parents: frozenset[int] = field(default_factory=frozenset)
    children: frozenset[int] = field(default_factory=frozenset)
    colliders: frozenset[int] = field(default_factory=frozenset)
    spouses: frozenset[int] = field(default_factory=frozenset)
    spurious: frozenset[int] = field(default_factory=frozenset)
    n_vars: int = 0

    def __post_init__(self):
        groups = (self.parents, self.children, self.colliders, self.spouses, self.spurious)
        total = sum(len(g) for g in groups)
        union = frozenset().union(*groups)
        if total != len(union) or self.target in union:
            raise GraphError(f"role sets for target {self.target} overlap")
        if union | {self.target} != frozenset(range(self.n_vars)):
            raise GraphError(f"role sets for target {self.target} do not cover all variables")


def oracle_roles(dag: Dag, target: int) -> OracleRoles:
    if not 0 <= target < dag.n_vars:
        raise IndexError(f"target {target} out of range")
    parents = frozenset(dag.parents(target))
    kids = dag.children(target)
    colliders, spouses = set(), set()
    for c in kids:
        others = [s for s in dag.parents(c) if s != target and not dag.adjacent(s, target)]
        if others:
            colliders.add(c)
            spouses.update(others)
    children = frozenset(kids) - colliders
    spurious = frozenset(range(dag.n_vars)) - {target} - parents - children - colliders - spouses
    return OracleRoles(
        target, parents, children, frozenset(colliders), frozenset(spouses), spurious, dag.n_vars
    )


def cpdag_of(dag: Dag) -> Cpdag:
    """Completed PDAG of the Markov equivalence class of ``dag``."""
    sk = dag.matrix().astype(bool)
    sk = sk | sk.T
    vs = dag.v_structures()
    colliders = {(a, c, b) for a, c, b in vs} | {(b, c, a) for a, c, b in vs}
    marks, conflicts = orient_v_structures(sk, lambda a, c, b: (a, c, b) in colliders)
    assert not conflicts
    return Cpdag.from_marks(meek_closure(marks))


@dataclass(frozen=True)
class Theorem1Result:
    gap: float
    phi_norm_sq: float
    risk_f: float
    risk_projected: float


def theorem1_check(
    n: int,
    seed: int,
    gamma: float = 0.5,
    w_target: float = 1.0,
    w_spouse: float = 1.0,
    collider_noise: float = 1.0,
    estimate: str = "analytic",
) -> Theorem1Result:
    """Monte-Carlo check that projecting out the spouse-dependent part closes the risk gap.

    Builds ``Vi -> Vc <- Vs`` with unit-variance ``Vi``, ``Vs``; the predictor is
    ``f = E[Vi | Vc, Vs] + gamma * Vs`` so that ``E[f | Vs] - E[Vi] = gamma * Vs``.
    With ``estimate="regression"`` the conditional expectation is instead fitted
    by least squares of ``f`` on ``[1, Vs]``.
    """
    if n < 10_000:
        raise ValueError("n must be >= 1e4")
    rng = np.random.default_rng(seed)
    vi = rng.standard_normal(n)
    vs = rng.standard_normal(n)
    vc = w_target * vi + w_spouse * vs + collider_noise * rng.standard_normal(n)
    # Vc - w_s Vs = w_t Vi + noise, so E[Vi | Vc, Vs] is a shrunken rescaling of it
    shrink = w_target / (w_target**2 + collider_noise**2)
    f = shrink * (vc - w_spouse * vs) + gamma * vs
    if estimate == "analytic":
        phi = gamma * vs
    elif estimate == "regression":
        design = np.column_stack([np.ones(n), vs])
        coef, *_ = np.linalg.lstsq(design, f, rcond=None)
        phi = design @ coef  # minus C = E[Vi] = 0
    else:
        raise ValueError(f"unknown estimate {estimate!r}")
    psi = f - phi
    risk_f = float(np.mean((vi - f) ** 2))
    risk_psi = float(np.mean((vi - psi) ** 2))
    return Theorem1Result(risk_f - risk_psi, float(np.mean(phi**2)), risk_f, risk_psi)
