"""Losses, Adam, the early-stopping loop, evaluation and finite-difference checks."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..dataset import WindowSet
from . import autograd as ag
from .autograd import NonFiniteError, Tensor
from .model import CdtModel

log = logging.getLogger(__name__)

BCE_EPS = 1e-7
LR_GRID = (1e-3, 1e-4)
BATCH_GRID = (32, 64, 128)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 32
    max_epochs: int = 10
    patience: int = 3
    lam: float = 0.2
    seed: int = 0
    backbone: str = "transformer"
    use_prior_reg: bool = True
    divergence_threshold: float = 1e6
    dtype: str = "float64"  # float32 is allowed for speed; checks run in float64
    logit_lr_mult: float = 1.0  # step-size multiplier for the adapter logits

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("lr, batch, max_epochs and patience must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.backbone not in ("transformer", "mlp"):
            raise ValueError(f"unknown backbone {self.backbone!r}")

    def off_grid(self) -> list[str]:
        out = []
        if self.lr not in LR_GRID:
            out.append(f"lr={self.lr}")
        if self.batch not in BATCH_GRID:
            out.append(f"batch={self.batch}")
        return out


def bce_prior(w: Tensor, target: np.ndarray, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy between ``sigmoid(w)`` and a 0/1 prior, off the diagonal."""
    p = ag._sigmoid(w.data)
    pc = np.clip(p, eps, 1.0 - eps)
    off = ~np.eye(w.shape[0], dtype=bool)
    n = off.sum()
    vals = -(target * np.log(pc) + (1.0 - target) * np.log(1.0 - pc))
    live = (p > eps) & (p < 1.0 - eps)

    def back(g):
        return (g * np.where(off & live, p - target, 0.0) / n,)

    return Tensor(vals[off].mean(), parents=(w,), backward=back)


def prior_reg(model: CdtModel) -> Tensor:
    parts = [bce_prior(model.params["w_" + k], model.priors.as_dict()[k]) for k in ("dcs", "ccs", "sp")]
    return ag.add(ag.add(parts[0], parts[1]), parts[2])


@dataclass
class LossParts:
    total: Tensor
    mse: float
    reg: float
    aux: float


def loss(out, y: np.ndarray, model: CdtModel, lam: float, use_prior_reg: bool = True) -> LossParts:
    """Forecast MSE + ``lam`` * prior BCE + the projection head's regression loss.

    The forecaster is fitted on the raw output and the projection head on the
    batch-centred raw output, so at its optimum the head estimates
    ``E[y_raw | spouse] - E[y_raw]`` and ``y_hat = y_raw - phi`` removes it.
    Fitting the forecaster through ``y_hat`` instead lets ``y_raw`` and ``phi``
    drift together along any spouse direction the target does not depend on.
    The reported ``mse`` is always that of ``y_hat``.
    """
    y = np.asarray(y, dtype=np.float64)
    total = ag.mse(out.y_raw, y)
    mse_hat = float(np.mean((out.y_hat.data - y) ** 2))
    reg_val = 0.0
    if lam > 0 and use_prior_reg and model.config.learn_logits:
        reg = prior_reg(model)
        reg_val = float(reg.data)
        total = ag.add(total, ag.mul(reg, lam))
    aux_val = 0.0
    if out.phi is not None:
        yr = ag.stop_gradient(out.y_raw)
        centred = ag.sub(yr, ag.mean(yr, axis=0, keepdims=True))
        aux = ag.mse(out.phi, centred)
        aux_val = float(aux.data)
        total = ag.add(total, aux)
    return LossParts(total, mse_hat, reg_val, aux_val)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, b1=0.9, b2=0.999, eps=1e-8, scale=None):
        self.params = params
        self.scale = scale or {}
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            lr = self.lr * self.scale.get(k, 1.0)
            p.data = p.data - lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")
    stopped_early: bool = False

    def write_csv(self, path: str | Path) -> None:
        write_history(path, self.history)


def write_history(path: str | Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse", "reg"])
        for row in history:
            w.writerow([row["epoch"], repr(row["train_mse"]), repr(row["val_mse"]), repr(row["reg"])])


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, size):
        yield order[i : i + size]


def evaluate_arrays(predict: Callable[[np.ndarray], np.ndarray], ws: WindowSet) -> tuple[float, float]:
    if len(ws) == 0:
        raise ValueError("cannot evaluate on an empty window set")
    err = predict(ws.X) - ws.Y
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


def evaluate(model: CdtModel, ws: WindowSet) -> tuple[float, float]:
    """(MSE, MAE) of the projected forecast, averaged over windows, horizon and targets."""
    return evaluate_arrays(model.predict, ws)


def train(model: CdtModel, train_ws: WindowSet, val_ws: WindowSet, cfg: TrainConfig) -> TrainResult:
    """Adam with early stopping on validation MSE; the model ends at its best checkpoint."""
    if len(train_ws) == 0 or len(val_ws) == 0:
        raise ValueError("train and validation window sets must be nonempty")
    for item in cfg.off_grid():
        log.info("training outside the documented grid: %s", item)
    with ag.precision(cfg.dtype):
        model.load_state(model.state())  # recast parameters
        result = _train(model, train_ws, val_ws, cfg)
    model.load_state(model.state())
    return result


def _train(model: CdtModel, train_ws: WindowSet, val_ws: WindowSet, cfg: TrainConfig) -> TrainResult:
    params = model.trainable()
    lr_scale = {k: cfg.logit_lr_mult for k in params if k.startswith("w_")}
    opt = Adam(params, cfg.lr, scale=lr_scale)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    best_state = model.state()
    bad = 0
    for epoch in range(cfg.max_epochs):
        mses, regs = [], []
        for idx in _batches(len(train_ws), cfg.batch, rng):
            model.zero_grad()
            try:
                out = model.forward(train_ws.X[idx])
                parts = loss(out, train_ws.Y[idx], model, cfg.lam, cfg.use_prior_reg)
            except NonFiniteError as e:
                raise DivergenceError(f"non-finite value at epoch {epoch}: {e}") from e
            total = float(parts.total.data)
            if not np.isfinite(total) or total > cfg.divergence_threshold:
                raise DivergenceError(
                    f"loss {total:.3g} exceeded {cfg.divergence_threshold:g} at epoch {epoch} "
                    f"(mse={parts.mse:.3g}, reg={parts.reg:.3g}, aux={parts.aux:.3g})"
                )
            parts.total.backward()
            opt.step()
            mses.append(parts.mse)
            regs.append(parts.reg)
        val_mse, _ = evaluate(model, val_ws)
        result.history.append(
            {"epoch": epoch, "train_mse": float(np.mean(mses)), "val_mse": val_mse, "reg": float(np.mean(regs))}
        )
        if val_mse < result.best_val:
            result.best_val, result.best_epoch = val_mse, epoch
            best_state = model.state()
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                result.stopped_early = True
                break
    model.load_state(best_state)
    return result


def grad_check(
    model: CdtModel,
    x: np.ndarray,
    y: np.ndarray,
    lam: float = 0.2,
    eps: float = 1e-5,
    n_checks: int = 200,
    seed: int = 0,
    corrupt: Callable[[dict[str, np.ndarray]], None] | None = None,
) -> float:
    """Max relative error between backprop and central differences on random parameter entries.

    Stop-gradients are disabled so the check differentiates the full scalar
    objective. ``corrupt`` may alter the analytic gradients before comparison.
    """

    def objective() -> Tensor:
        return loss(model.forward(x), y, model, lam).total

    with ag.stop_gradients_disabled():
        model.zero_grad()
        objective().backward()
        params = model.trainable()
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)).copy() for k, p in params.items()}
        if corrupt is not None:
            corrupt(grads)
        keys = list(params)
        sizes = np.array([params[k].data.size for k in keys])
        rng = np.random.default_rng(seed)
        flat = rng.choice(sizes.sum(), size=min(n_checks, int(sizes.sum())), replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        worst = 0.0
        for f in np.sort(flat):
            ki = int(np.searchsorted(offsets, f, side="right") - 1)
            k = keys[ki]
            p = params[k]
            j = np.unravel_index(int(f - offsets[ki]), p.shape)
            orig = p.data[j]
            p.data[j] = orig + eps
            up = float(objective().data)
            p.data[j] = orig - eps
            down = float(objective().data)
            p.data[j] = orig
            num = (up - down) / (2 * eps)
            ana = float(grads[k][j])
            rel = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, rel)
    return worst
