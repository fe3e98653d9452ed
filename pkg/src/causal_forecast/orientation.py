"""Edge orientation on partially directed graphs: v-structures and Meek rules.

All functions operate on boolean mark matrices (see :mod:`causal_forecast.graphs`)
and return new arrays; inputs are never modified.
"""
from __future__ import annotations

import logging
from typing import Callable, Mapping

import numpy as np

from .graphs import directed_path_exists

log = logging.getLogger(__name__)


def _adj(m: np.ndarray) -> np.ndarray:
    return m | m.T


def _directed(m: np.ndarray) -> np.ndarray:
    return m & ~m.T


def _undirected(m: np.ndarray) -> np.ndarray:
    return m & m.T


def orient_v_structures(
    skeleton: np.ndarray,
    is_collider: Callable[[int, int, int], bool],
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Orient every unshielded triple ``a - c - b`` that ``is_collider`` accepts.

    All proposals are gathered first. An edge proposed in both directions is
    left undirected and reported in the returned conflict list.
    """
    sk = np.asarray(skeleton, dtype=bool)
    sk = sk | sk.T
    n = sk.shape[0]
    arrows = np.zeros_like(sk)  # arrows[a, c]: proposal a -> c
    for c in range(n):
        nb = np.nonzero(sk[c])[0]
        for x in range(len(nb)):
            for y in range(x + 1, len(nb)):
                a, b = int(nb[x]), int(nb[y])
                if sk[a, b]:
                    continue
                if is_collider(a, c, b):
                    arrows[a, c] = True
                    arrows[b, c] = True
    m = sk.copy()
    conflicts = []
    for a, c in zip(*np.nonzero(arrows)):
        a, c = int(a), int(c)
        if arrows[c, a]:
            if a < c:
                conflicts.append((a, c))
            continue
        m[c, a] = False
    # finite-sample sepsets can chain proposals into a directed cycle; undo those
    while True:
        cycle = find_directed_cycle(m)
        if cycle is None:
            break
        for a, c in zip(cycle, cycle[1:] + cycle[:1]):
            m[c, a] = True
            conflicts.append((min(a, c), max(a, c)))
    if conflicts:
        log.warning("v-structure conflicts left undirected: %s", conflicts)
    return m, conflicts


def find_directed_cycle(m: np.ndarray) -> list[int] | None:
    d = _directed(m)
    n = d.shape[0]
    state = [0] * n  # 0 unseen, 1 on stack, 2 done
    stack: list[int] = []

    def visit(v: int) -> list[int] | None:
        state[v] = 1
        stack.append(v)
        for c in np.nonzero(d[v])[0]:
            c = int(c)
            if state[c] == 1:
                return stack[stack.index(c):]
            if state[c] == 0:
                found = visit(c)
                if found is not None:
                    return found
        stack.pop()
        state[v] = 2
        return None

    for v in range(n):
        if state[v] == 0:
            found = visit(v)
            if found is not None:
                return list(found)
    return None


def orient_from_sepsets(
    skeleton: np.ndarray, sepsets: Mapping[frozenset[int], frozenset[int]]
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    def is_collider(a, c, b):
        return c not in sepsets.get(frozenset((a, b)), frozenset())

    return orient_v_structures(skeleton, is_collider)


def _orient(m: np.ndarray, a: int, b: int) -> bool:
    """Turn ``a - b`` into ``a -> b`` unless that closes a directed cycle."""
    if directed_path_exists(m, b, a):
        return False
    m[b, a] = False
    return True


def _rule1(m: np.ndarray) -> bool:
    adj, d, u = _adj(m), _directed(m), _undirected(m)
    n = m.shape[0]
    for b in range(n):
        for a in np.nonzero(d[:, b])[0]:
            for c in np.nonzero(u[b])[0]:
                if c != a and not adj[a, c] and _orient(m, b, int(c)):
                    return True
    return False


def _rule2(m: np.ndarray) -> bool:
    d, u = _directed(m), _undirected(m)
    n = m.shape[0]
    for a in range(n):
        for c in np.nonzero(u[a])[0]:
            # a -> b -> c
            if np.any(d[a] & d[:, c]) and _orient(m, a, int(c)):
                return True
    return False


def _rule3(m: np.ndarray) -> bool:
    adj, d, u = _adj(m), _directed(m), _undirected(m)
    n = m.shape[0]
    for a in range(n):
        for b in np.nonzero(u[a])[0]:
            cands = [int(c) for c in np.nonzero(u[a] & d[:, b])[0]]
            for x in range(len(cands)):
                for y in range(x + 1, len(cands)):
                    if not adj[cands[x], cands[y]] and _orient(m, a, int(b)):
                        return True
    return False


def _rule4(m: np.ndarray) -> bool:
    adj, d, u = _adj(m), _directed(m), _undirected(m)
    n = m.shape[0]
    for a in range(n):
        for b in np.nonzero(u[a])[0]:
            # d -> c -> b with a - d, a adjacent to c, b and d non-adjacent
            for c in np.nonzero(d[:, b] & adj[a])[0]:
                for dd in np.nonzero(d[:, c] & u[a])[0]:
                    if dd != b and not adj[b, dd] and _orient(m, a, int(b)):
                        return True
    return False


MEEK_RULES = (_rule1, _rule2, _rule3, _rule4)


def meek_closure(marks: np.ndarray) -> np.ndarray:
    """Apply Meek rules R1-R4 until no rule fires."""
    m = np.array(marks, dtype=bool, copy=True)
    changed = True
    while changed:
        changed = False
        for rule in MEEK_RULES:
            while rule(m):
                changed = True
    return m
