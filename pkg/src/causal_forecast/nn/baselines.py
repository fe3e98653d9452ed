"""Per-target MLP forecasters fed either every history or only the role-selected ones."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import WindowSet
from ..roles import RoleSet
from . import autograd as ag
from .autograd import Tensor
from .train import Adam, TrainConfig, _batches


def input_masks_all_to_one(roles: Sequence[RoleSet]) -> np.ndarray:
    """(D, D) matrix; row ``i`` marks the inputs for target ``i``: itself, direct and collider variables."""
    n = len(roles)
    m = np.zeros((n, n))
    for i, r in enumerate(roles):
        for j in {i, *r.direct, *r.colliders}:
            m[i, j] = 1.0
    return m


@dataclass
class PerTargetMlp:
    """One two-layer MLP per target; masked inputs keep parameter counts identical across modes."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    input_mask: np.ndarray  # (D, D)

    @classmethod
    def init(cls, n_vars: int, lookback: int, horizon: int, hidden: int, input_mask: np.ndarray, seed: int):
        rng = np.random.default_rng(seed)
        n_in = lookback * n_vars
        w1 = rng.normal(0, np.sqrt(2.0 / (n_in + hidden)), size=(n_vars, n_in, hidden))
        w2 = rng.normal(0, np.sqrt(2.0 / (hidden + horizon)), size=(n_vars, hidden, horizon))
        return cls(
            ag.parameter(w1, "w1"),
            ag.parameter(np.zeros((n_vars, 1, hidden)), "b1"),
            ag.parameter(w2, "w2"),
            ag.parameter(np.zeros((n_vars, 1, horizon)), "b2"),
            np.asarray(input_mask, dtype=np.float64),
        )

    def params(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x: np.ndarray) -> Tensor:
        """(B, T, D) -> (B, S, D)."""
        b, t, d = x.shape
        xi = x[None, :, :, :] * self.input_mask[:, None, None, :]  # (D, B, T, D)
        h = ag.gelu(ag.add(ag.matmul(ag.Tensor(xi.reshape(d, b, t * d)), self.w1), self.b1))
        y = ag.add(ag.matmul(h, self.w2), self.b2)  # (D, B, S)
        return ag.transpose(y, (1, 2, 0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=np.float64)).data


def _fit_mlp(mlp: PerTargetMlp, train_ws: WindowSet, val_ws: WindowSet, cfg: TrainConfig) -> PerTargetMlp:
    params = mlp.params()
    opt = Adam(params, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    best = {k: p.data.copy() for k, p in params.items()}
    best_val, bad = np.inf, 0
    for _ in range(cfg.max_epochs):
        for idx in _batches(len(train_ws), cfg.batch, rng):
            for p in params.values():
                p.grad = None
            ag.mse(mlp.forward(train_ws.X[idx]), train_ws.Y[idx]).backward()
            opt.step()
        val = float(np.mean((mlp.predict(val_ws.X) - val_ws.Y) ** 2))
        if val < best_val:
            best_val, bad = val, 0
            best = {k: p.data.copy() for k, p in params.items()}
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    for k, p in params.items():
        p.data = best[k]
    return mlp


def _per_target_mse(mlp: PerTargetMlp, ws: WindowSet) -> np.ndarray:
    return np.mean((mlp.predict(ws.X) - ws.Y) ** 2, axis=(0, 1))


def mlp_all_to_one(
    train_ws: WindowSet, val_ws: WindowSet, test_ws: WindowSet, roles: Sequence[RoleSet],
    cfg: TrainConfig = TrainConfig(), hidden: int = 64,
) -> np.ndarray:
    """Per-target test MSE when target ``i`` sees only its own, direct and collider histories."""
    d = train_ws.X.shape[2]
    mask = input_masks_all_to_one(roles)
    mlp = PerTargetMlp.init(d, train_ws.lookback, train_ws.horizon, hidden, mask, cfg.seed)
    return _per_target_mse(_fit_mlp(mlp, train_ws, val_ws, cfg), test_ws)


def mlp_all_to_all(
    train_ws: WindowSet, val_ws: WindowSet, test_ws: WindowSet,
    cfg: TrainConfig = TrainConfig(), hidden: int = 64,
) -> np.ndarray:
    """Per-target test MSE when every target sees all ``D`` histories."""
    d = train_ws.X.shape[2]
    mlp = PerTargetMlp.init(d, train_ws.lookback, train_ws.horizon, hidden, np.ones((d, d)), cfg.seed)
    return _per_target_mse(_fit_mlp(mlp, train_ws, val_ws, cfg), test_ws)
