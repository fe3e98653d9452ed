"""Structural noise injection and graph comparison."""
from __future__ import annotations

import logging
import math

import numpy as np

from ..graphs import Cpdag, GraphError, directed_path_exists

log = logging.getLogger(__name__)


def _count(ratio: float, n_edges: int) -> int:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0,1], got {ratio}")
    # tolerance keeps 0.3 * 10 = 3.0000000000000004 from rounding up to 4
    return int(math.ceil(ratio * n_edges - 1e-9))


def perturb(g: Cpdag, mode: str, ratio: float, seed: int) -> Cpdag:
    """Drop (``FN``) or add (``FP``) ``ceil(ratio * |edges|)`` edges at random.

    Added edges are directed and never close a directed cycle. If not enough
    such edges are found within ``100 * D`` attempts, fewer are added.
    """
    mode = mode.upper()
    edges = sorted(tuple(sorted(e)) for e in g.skeleton())
    k = _count(ratio, len(edges))
    rng = np.random.default_rng(seed)
    m = g.marks().copy()
    if mode == "FN":
        if k:
            for idx in sorted(rng.choice(len(edges), size=k, replace=False)):
                a, b = edges[idx]
                m[a, b] = m[b, a] = False
        return Cpdag.from_marks(m)
    if mode != "FP":
        raise ValueError(f"mode must be FN or FP, got {mode!r}")
    n = g.n_vars
    added = 0
    attempts = 0
    while added < k and attempts < 100 * n:
        attempts += 1
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False))
        if m[a, b] or m[b, a] or directed_path_exists(m, b, a):
            continue
        m[a, b] = True
        added += 1
    if added < k:
        log.warning("FP perturbation added %d of %d requested edges", added, k)
    return Cpdag.from_marks(m)


def jaccard(g1: Cpdag, g2: Cpdag) -> float:
    """Jaccard index of the undirected edge sets."""
    if g1.n_vars != g2.n_vars:
        raise GraphError(f"dimension mismatch: {g1.n_vars} vs {g2.n_vars}")
    s1, s2 = g1.skeleton(), g2.skeleton()
    union = s1 | s2
    if not union:
        return 1.0
    return len(s1 & s2) / len(union)
