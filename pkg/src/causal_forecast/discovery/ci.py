"""Conditional-independence backends for the PC search."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np
from scipy.stats import norm

from ..dataset import SeriesFrame
from ..graphs import Dag
from ..scm import d_separated

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CiResult:
    independent: bool
    p: float
    stat: float = float("nan")
    singular: bool = False


class CiBackend(Protocol):
    n_vars: int

    def test(self, a: int, b: int, z: Iterable[int]) -> CiResult: ...


def _validate(n_vars: int, a: int, b: int, z: tuple[int, ...]) -> None:
    if a == b:
        raise ValueError("a and b must differ")
    if a in z or b in z:
        raise ValueError("a and b must not be in the conditioning set")
    for v in (a, b, *z):
        if not 0 <= v < n_vars:
            raise IndexError(f"variable {v} out of range")


def partial_correlation(corr: np.ndarray, a: int, b: int, z: tuple[int, ...]) -> float:
    """Partial correlation of ``a`` and ``b`` given ``z`` via the precision of the sub-block.

    Raises ``np.linalg.LinAlgError`` when the sub-block is singular.
    """
    idx = [a, b, *z]
    sub = corr[np.ix_(idx, idx)]
    if np.linalg.cond(sub) > 1e12:
        raise np.linalg.LinAlgError("singular conditioning covariance")
    prec = np.linalg.inv(sub)
    return float(-prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1]))


class FisherZ:
    """Fisher-z test on partial correlations, for jointly Gaussian data."""

    def __init__(self, data: SeriesFrame | np.ndarray, alpha: float = 0.05):
        x = data.values if isinstance(data, SeriesFrame) else np.asarray(data, dtype=np.float64)
        self.n_samples, self.n_vars = x.shape
        self.alpha = alpha
        self.corr = np.corrcoef(x, rowvar=False)

    def test(self, a: int, b: int, z: Iterable[int] = ()) -> CiResult:
        z = tuple(z)
        _validate(self.n_vars, a, b, z)
        dof = self.n_samples - len(z) - 3
        if dof <= 0:
            raise ValueError(f"need n > |Z| + 3 (n={self.n_samples}, |Z|={len(z)})")
        try:
            r = partial_correlation(self.corr, a, b, z)
        except np.linalg.LinAlgError:
            log.warning("singular conditioning set for (%d,%d|%s); treating as dependent", a, b, z)
            return CiResult(False, 0.0, float("inf"), singular=True)
        r = min(max(r, -1.0 + 1e-15), 1.0 - 1e-15)
        stat = math.sqrt(dof) * abs(math.atanh(r))
        p = float(2.0 * norm.sf(stat))
        return CiResult(p > self.alpha, p, stat)


class OracleCI:
    """Answers CI queries by d-separation in a known DAG."""

    def __init__(self, dag: Dag):
        self.dag = dag
        self.n_vars = dag.n_vars

    def test(self, a: int, b: int, z: Iterable[int] = ()) -> CiResult:
        sep = d_separated(self.dag, a, b, tuple(z))
        return CiResult(sep, 1.0 if sep else 0.0)


def fisher_z_test(
    data: SeriesFrame | np.ndarray, a: int, b: int, z: Iterable[int] = (), alpha_sig: float = 0.05
) -> tuple[bool, float]:
    res = FisherZ(data, alpha_sig).test(a, b, z)
    return res.independent, res.p
