"""Pairwise Granger-causality F-tests reported as -log p."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import f as f_dist

from ..dataset import SeriesFrame

log = logging.getLogger(__name__)


@dataclass
class GrangerResult:
    neg_log_p: np.ndarray
    lag: int
    warnings: list[tuple[int, int]] = field(default_factory=list)

    @property
    def masked(self) -> np.ndarray:
        return np.eye(self.neg_log_p.shape[0], dtype=bool)


def _lags(x: np.ndarray, lag: int) -> np.ndarray:
    """Columns ``x[t-1], ..., x[t-lag]`` for ``t = lag .. T-1``."""
    t = x.shape[0]
    return np.column_stack([x[lag - k : t - k] for k in range(1, lag + 1)])


def _rss(design: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    coef, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    ill = rank < design.shape[1] or sv[-1] <= 1e-10 * sv[0]
    resid = y - design @ coef
    return float(resid @ resid), ill


def granger_matrix(data: SeriesFrame | np.ndarray, lag: int = 4) -> GrangerResult:
    """Entry ``(m, n)``: -log p that lags of variable ``m`` help predict variable ``n``.

    The restricted model regresses ``V_n`` on a constant and its own ``lag``
    lags; the unrestricted one adds ``lag`` lags of ``V_m``.
    """
    x = data.values if isinstance(data, SeriesFrame) else np.asarray(data, dtype=np.float64)
    t, d = x.shape
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if t <= 2 * lag + 10:
        raise ValueError(f"series too short for lag {lag}: T={t} <= {2 * lag + 10}")
    n_obs = t - lag
    ones = np.ones((n_obs, 1))
    own = [_lags(x[:, j], lag) for j in range(d)]
    out = np.zeros((d, d))
    warnings = []
    df_den = n_obs - 2 * lag - 1
    for n in range(d):
        y = x[lag:, n]
        restricted = np.hstack([ones, own[n]])
        rss_r, ill_r = _rss(restricted, y)
        for m in range(d):
            if m == n:
                continue
            rss_u, ill_u = _rss(np.hstack([restricted, own[m]]), y)
            if ill_r or ill_u or rss_u <= 0:
                log.warning("near-singular Granger regression %d->%d; entry set to 0", m, n)
                warnings.append((m, n))
                continue
            stat = max((rss_r - rss_u) / lag, 0.0) / (rss_u / df_den)
            out[m, n] = -float(f_dist.logsf(stat, lag, df_den))
    return GrangerResult(out, lag, warnings)
