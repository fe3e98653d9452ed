"""Per-target role decomposition of a CPDAG and the adapter priors built from it."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graphs import Cpdag, GraphError

ROLE_NAMES = ("parent", "child", "neighbor", "collider", "spouse", "spurious")


@dataclass(frozen=True)
class RoleSet:
    """Partition of ``range(n_vars) - {target}`` by causal role.

    ``neighbors`` holds variables joined to the target by an undirected edge;
    they count as directly causal along with parents and children.
    """

    target: int
    n_vars: int
    parents: frozenset[int] = field(default_factory=frozenset)
    children: frozenset[int] = field(default_factory=frozenset)
    neighbors: frozenset[int] = field(default_factory=frozenset)
    colliders: frozenset[int] = field(default_factory=frozenset)
    spouses: frozenset[int] = field(default_factory=frozenset)
    spurious: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        groups = self._groups()
        union = frozenset().union(*groups)
        if sum(len(g) for g in groups) != len(union) or self.target in union:
            raise GraphError(f"role sets for target {self.target} overlap")
        if union | {self.target} != frozenset(range(self.n_vars)):
            raise GraphError(f"role sets for target {self.target} do not cover all variables")
        if self.spouses and not self.colliders:
            raise GraphError("spouses without a collider")

    def _groups(self):
        return (self.parents, self.children, self.neighbors, self.colliders, self.spouses, self.spurious)

    @property
    def direct(self) -> frozenset[int]:
        return self.parents | self.children | self.neighbors

    def role_of(self, v: int) -> str:
        if v == self.target:
            return "target"
        for name, g in zip(ROLE_NAMES, self._groups()):
            if v in g:
                return name
        raise KeyError(v)

    def rows(self) -> list[tuple[int, int, str]]:
        return [(self.target, v, self.role_of(v)) for v in range(self.n_vars) if v != self.target]


def decompose(g: Cpdag, target: int) -> RoleSet:
    """Roles of every variable relative to ``target``.

    Colliders are only read from directed edges: a directed child ``c`` of the
    target with another directed parent ``s`` that is not adjacent to the
    target. Such a child is a collider even if it also qualifies as a plain child.
    """
    n = g.n_vars
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range")
    m = g.marks()
    directed = m & ~m.T
    undirected = m & m.T
    adjacent = m | m.T
    parents = {int(j) for j in np.nonzero(directed[:, target])[0]}
    kids = {int(j) for j in np.nonzero(directed[target])[0]}
    neighbors = {int(j) for j in np.nonzero(undirected[target])[0]}
    colliders, spouses = set(), set()
    for c in sorted(kids):
        others = [
            int(s) for s in np.nonzero(directed[:, c])[0] if s != target and not adjacent[s, target]
        ]
        if others:
            colliders.add(c)
            spouses.update(others)
    children = kids - colliders
    spurious = set(range(n)) - {target} - parents - children - neighbors - colliders - spouses
    return RoleSet(
        target,
        n,
        frozenset(parents),
        frozenset(children),
        frozenset(neighbors),
        frozenset(colliders),
        frozenset(spouses),
        frozenset(spurious),
    )


def decompose_all(g: Cpdag) -> list[RoleSet]:
    return [decompose(g, i) for i in range(g.n_vars)]


@dataclass(frozen=True)
class PriorMasks:
    """Binary D x D masks; column ``i`` marks the role members for target ``i``."""

    dcs: np.ndarray
    ccs: np.ndarray
    sp: np.ndarray

    def __post_init__(self):
        for name in ("dcs", "ccs", "sp"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"{name} mask must be square")
            if np.any(np.diag(a)):
                raise ValueError(f"{name} mask has a nonzero diagonal")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.dcs * self.ccs) or np.any(self.dcs * self.sp) or np.any(self.ccs * self.sp):
            raise ValueError("mask supports overlap")

    @property
    def n_vars(self) -> int:
        return self.dcs.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "PriorMasks":
        z = np.zeros((n, n))
        return cls(z, z, z)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"dcs": self.dcs, "ccs": self.ccs, "sp": self.sp}

    def permute(self, perm: Sequence[int]) -> "PriorMasks":
        inv = np.argsort(perm)
        ix = np.ix_(inv, inv)
        return PriorMasks(self.dcs[ix], self.ccs[ix], self.sp[ix])


def prior_matrices(roles: Sequence[RoleSet]) -> PriorMasks:
    n = len(roles)
    dcs, ccs, sp = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    for i, r in enumerate(roles):
        if r.target != i or r.n_vars != n:
            raise ValueError(f"role set {i} is for target {r.target} of {r.n_vars} variables")
        for j in r.direct:
            dcs[j, i] = 1.0
        for j in r.colliders:
            ccs[j, i] = 1.0
        for j in r.spouses:
            sp[j, i] = 1.0
    return PriorMasks(dcs, ccs, sp)


@dataclass
class AdapterState:
    """Relevance logits for the three aggregations plus the priors they started from."""

    w_dcs: np.ndarray
    w_ccs: np.ndarray
    w_sp: np.ndarray
    priors: PriorMasks
    alpha: float
    beta: float

    def relevance(self) -> dict[str, np.ndarray]:
        sig = lambda w: 1.0 / (1.0 + np.exp(-w))  # noqa: E731
        return {"dcs": sig(self.w_dcs), "ccs": sig(self.w_ccs), "sp": sig(self.w_sp)}


def init_logits(masks: PriorMasks, alpha: float = 1.0, beta: float = 1.0) -> AdapterState:
    """``alpha`` on prior edges, ``-beta`` elsewhere.

    ``alpha = beta = 0`` is accepted as the uniform (prior-free) start.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    logits = {k: np.where(v > 0, alpha, -beta).astype(np.float64) for k, v in masks.as_dict().items()}
    return AdapterState(logits["dcs"], logits["ccs"], logits["sp"], masks, float(alpha), float(beta))
