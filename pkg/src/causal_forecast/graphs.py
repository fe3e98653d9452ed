"""Graph containers shared by the oracle, discovery and role modules.

Two representations are used:

* :class:`Dag` -- a fully directed acyclic graph given as an edge set.
* :class:`Cpdag` -- a partially directed graph in the signed adjacency coding
  used throughout the package: ``adj[i, j] == -1 and adj[j, i] == 1`` means
  ``i -> j``; ``adj[i, j] == adj[j, i] == -1`` means ``i - j``; zeros mean no
  edge.

Internally the search code works on a boolean *mark* matrix ``M`` where
``M[i, j]`` is true when the edge between ``i`` and ``j`` may point into ``j``:
``i -> j`` is ``M[i, j] & ~M[j, i]`` and ``i - j`` is ``M[i, j] & M[j, i]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or adjacency codings."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dag:
    n_vars: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n_vars < 1:
            raise GraphError("a DAG needs at least one variable")
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop on {i}")
            if not (0 <= i < self.n_vars and 0 <= j < self.n_vars):
                raise GraphError(f"edge {i}->{j} out of range for {self.n_vars} variables")
        if self._topological_order() is None:
            raise GraphError("edge set contains a cycle")

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "Dag":
        """Build from a 0/1 matrix with ``a[i, j] = 1`` for ``i -> j``."""
        a = np.asarray(a)
        n = a.shape[0]
        return cls(n, frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(a))))

    def _topological_order(self) -> list[int] | None:
        indeg = [0] * self.n_vars
        kids: list[list[int]] = [[] for _ in range(self.n_vars)]
        for i, j in sorted(self.edges):
            kids[i].append(j)
            indeg[j] += 1
        ready = [v for v in range(self.n_vars) if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in kids[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return order if len(order) == self.n_vars else None

    def topological_order(self) -> list[int]:
        return self._topological_order()  # type: ignore[return-value]

    def parents(self, j: int) -> list[int]:
        return sorted(i for i, k in self.edges if k == j)

    def children(self, i: int) -> list[int]:
        return sorted(k for j, k in self.edges if j == i)

    def adjacent(self, i: int, j: int) -> bool:
        return (i, j) in self.edges or (j, i) in self.edges

    def descendants(self, i: int) -> set[int]:
        """Strict descendants of ``i``."""
        out: set[int] = set()
        stack = self.children(i)
        while stack:
            v = stack.pop()
            if v not in out:
                out.add(v)
                stack.extend(self.children(v))
        return out

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.n_vars, self.n_vars), dtype=np.int8)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def skeleton(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(e) for e in self.edges)

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Triples ``(a, c, b)`` with ``a -> c <- b``, ``a < b`` non-adjacent."""
        out = set()
        for c in range(self.n_vars):
            pa = self.parents(c)
            for x in range(len(pa)):
                for y in range(x + 1, len(pa)):
                    a, b = pa[x], pa[y]
                    if not self.adjacent(a, b):
                        out.add((a, c, b))
        return frozenset(out)

    def permute(self, perm: Sequence[int]) -> "Dag":
        """Relabel so that old variable ``v`` becomes ``perm[v]``."""
        return Dag(self.n_vars, frozenset((perm[i], perm[j]) for i, j in self.edges))


@dataclass(frozen=True, eq=False)
class Cpdag:
    """Partially directed graph in signed {-1, 0, 1} adjacency coding."""

    adj: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError("adjacency must be square")
        a = a.astype(np.int8)
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency diagonal must be zero")
        if not np.all(np.isin(a, (-1, 0, 1))):
            raise GraphError("adjacency entries must lie in {-1, 0, 1}")
        ok = ((a == 0) & (a.T == 0)) | ((a == -1) & (a.T == 1)) | ((a == 1) & (a.T == -1)) | (
            (a == -1) & (a.T == -1)
        )
        if not ok.all():
            i, j = map(int, np.argwhere(~ok)[0])
            raise GraphError(f"inconsistent coding at ({i},{j}): {a[i, j]}/{a[j, i]}")
        object.__setattr__(self, "adj", _freeze(a))
        if _has_directed_cycle(self.marks()):
            raise GraphError("directed part of the graph has a cycle")

    @property
    def n_vars(self) -> int:
        return self.adj.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Cpdag) and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(self.adj.tobytes())

    def __repr__(self) -> str:
        return f"Cpdag(directed={sorted(self.directed_edges())}, undirected={sorted(self.undirected_edges())})"

    @classmethod
    def from_marks(cls, m: np.ndarray) -> "Cpdag":
        m = np.asarray(m, dtype=bool)
        a = np.zeros(m.shape, dtype=np.int8)
        und = m & m.T
        dirn = m & ~m.T
        a[und] = -1
        a[dirn] = -1
        a[dirn.T] = 1
        return cls(a)

    @classmethod
    def from_dag(cls, dag: Dag) -> "Cpdag":
        """Fully directed version of ``dag`` (no equivalence-class completion)."""
        return cls.from_marks(dag.matrix().astype(bool))

    @classmethod
    def empty(cls, n: int) -> "Cpdag":
        return cls(np.zeros((n, n), dtype=np.int8))

    def marks(self) -> np.ndarray:
        a = self.adj
        return (a == -1) & ((a.T == 1) | (a.T == -1))

    def is_directed(self, i: int, j: int) -> bool:
        return self.adj[i, j] == -1 and self.adj[j, i] == 1

    def is_undirected(self, i: int, j: int) -> bool:
        return self.adj[i, j] == -1 and self.adj[j, i] == -1

    def adjacent(self, i: int, j: int) -> bool:
        return self.adj[i, j] != 0

    def directed_edges(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(*np.nonzero((self.adj == -1) & (self.adj.T == 1)))}

    def undirected_edges(self) -> set[tuple[int, int]]:
        und = (self.adj == -1) & (self.adj.T == -1)
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(und)) if i < j}

    def skeleton(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset((int(i), int(j))) for i, j in zip(*np.nonzero(self.adj)) if i < j)

    def n_edges(self) -> int:
        return len(self.skeleton())

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        out = set()
        for c in range(self.n_vars):
            pa = [i for i in range(self.n_vars) if self.is_directed(i, c)]
            for x in range(len(pa)):
                for y in range(x + 1, len(pa)):
                    if not self.adjacent(pa[x], pa[y]):
                        out.add((pa[x], c, pa[y]))
        return frozenset(out)

    def permute(self, perm: Sequence[int]) -> "Cpdag":
        """Relabel so that old variable ``v`` becomes ``perm[v]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return Cpdag(self.adj[np.ix_(inv, inv)])


def _has_directed_cycle(m: np.ndarray) -> bool:
    d = m & ~m.T
    n = d.shape[0]
    indeg = d.sum(axis=0).astype(int)
    ready = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for c in np.nonzero(d[v])[0]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(int(c))
    return seen != n


def directed_path_exists(m: np.ndarray, src: int, dst: int) -> bool:
    """Whether a path of strictly directed edges leads from ``src`` to ``dst``."""
    d = m & ~m.T
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        for c in np.nonzero(d[v])[0]:
            c = int(c)
            if c == dst:
                return True
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def skeleton_f1(estimated: Cpdag, truth: Cpdag | Dag) -> float:
    est, ref = estimated.skeleton(), truth.skeleton()
    if not est and not ref:
        return 1.0
    tp = len(est & ref)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(est), tp / len(ref)
    return 2 * precision * recall / (precision + recall)


def structural_difference(g1: Cpdag, g2: Cpdag) -> int:
    """Number of variable pairs whose edge status (absent, either direction, undirected) differs."""
    if g1.n_vars != g2.n_vars:
        raise GraphError("dimension mismatch")
    diff = (g1.adj != g2.adj) | (g1.adj.T != g2.adj.T)
    return int(np.triu(diff, 1).sum())


def write_adjacency_csv(path: str | Path, g: Cpdag, names: Sequence[str] | None = None) -> None:
    names = list(names) if names is not None else [f"V{i}" for i in range(g.n_vars)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + names)
        for name, row in zip(names, g.adj):
            w.writerow([name] + [int(v) for v in row])


def read_adjacency_csv(path: str | Path) -> tuple[Cpdag, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GraphError(f"{path}: empty adjacency file")
    names = rows[0][1:]
    try:
        adj = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int8)
    except ValueError as exc:
        raise GraphError(f"{path}: non-integer adjacency entry") from exc
    if adj.shape != (len(names), len(names)):
        raise GraphError(f"{path}: adjacency is {adj.shape}, header names {len(names)} variables")
    return Cpdag(adj), names


def edges_to_marks(n: int, directed: Iterable[tuple[int, int]] = (), undirected: Iterable[tuple[int, int]] = ()) -> np.ndarray:
    m = np.zeros((n, n), dtype=bool)
    for i, j in directed:
        m[i, j] = True
    for i, j in undirected:
        m[i, j] = m[j, i] = True
    return m
