"""PC-stable search: skeleton, v-structures, Meek completion."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..graphs import Cpdag
from ..orientation import meek_closure as _meek_marks
from ..orientation import orient_from_sepsets
from .ci import CiBackend

Sepsets = dict[frozenset[int], frozenset[int]]


@dataclass
class PcResult:
    cpdag: Cpdag
    skeleton: np.ndarray
    sepsets: Sepsets
    conflicts: list[tuple[int, int]] = field(default_factory=list)
    n_tests: int = 0
    max_depth: int = 0


def pc_skeleton(ci: CiBackend, n_vars: int, max_depth: int | None = None) -> tuple[np.ndarray, Sepsets, int, int]:
    """Depth-synchronised edge removal.

    Every test at a given depth conditions on neighbourhoods frozen at the start
    of that depth; all removals are applied together afterwards. For a pair the
    recorded separating set is the first one found scanning ordered pairs
    ``(a, b)`` lexicographically, then subsets lexicographically.

    Returns ``(adjacency, sepsets, n_tests, last_depth)``.
    """
    adj = ~np.eye(n_vars, dtype=bool)
    sepsets: Sepsets = {}
    n_tests = 0
    depth = 0
    while max_depth is None or depth <= max_depth:
        nbrs = [sorted(int(v) for v in np.nonzero(adj[a])[0]) for a in range(n_vars)]
        if not any(len(nbrs[a]) - 1 >= depth for a in range(n_vars) if nbrs[a]):
            break
        found: Sepsets = {}
        for a in range(n_vars):
            for b in nbrs[a]:
                key = frozenset((a, b))
                if key in found:
                    continue
                rest = [v for v in nbrs[a] if v != b]
                if len(rest) < depth:
                    continue
                for s in itertools.combinations(rest, depth):
                    n_tests += 1
                    if ci.test(a, b, s).independent:
                        found[key] = frozenset(s)
                        break
        for key, s in found.items():
            a, b = tuple(key)
            adj[a, b] = adj[b, a] = False
            sepsets[key] = s
        depth += 1
    return adj, sepsets, n_tests, depth - 1


def orient_v_structures(skeleton: np.ndarray, sepsets: Sepsets) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Orient ``a -> c <- b`` for unshielded triples with ``c`` outside ``sepset(a, b)``.

    Returns the mark matrix and the list of edges left undirected because of
    contradictory proposals.
    """
    return orient_from_sepsets(skeleton, sepsets)


def meek_closure(marks: np.ndarray | Cpdag) -> Cpdag:
    if isinstance(marks, Cpdag):
        marks = marks.marks()
    return Cpdag.from_marks(_meek_marks(marks))


def run_pc(ci: CiBackend, n_vars: int | None = None, max_depth: int | None = None) -> PcResult:
    n_vars = ci.n_vars if n_vars is None else n_vars
    sk, sepsets, n_tests, depth = pc_skeleton(ci, n_vars, max_depth)
    marks, conflicts = orient_v_structures(sk, sepsets)
    return PcResult(meek_closure(marks), sk, sepsets, conflicts, n_tests, depth)


def pc(ci: CiBackend, n_vars: int | None = None) -> Cpdag:
    return run_pc(ci, n_vars).cpdag
