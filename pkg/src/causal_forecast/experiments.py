"""Synthetic experiment suite: ablations, prior-perturbation robustness, projection gap."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .dataset import PreparedData, SeriesFrame, SplitSpec, prepare
from .discovery import FisherZ, perturb, pc
from .graphs import Cpdag, Dag
from .nn.model import CdtModel, ModelConfig
from .nn.train import TrainConfig, TrainResult, evaluate, train
from .roles import decompose_all, init_logits, prior_matrices
from .scm import LinearScm, sample_ar_noise, sample_lagged

log = logging.getLogger(__name__)

# 0 -> 1 -> 2 <- 3 with 0 -> 4 and 5 -> 6: for target 1, 0 is a parent, 2 a
# collider, 3 its spouse, 4 shares a cause with it and 5, 6 are unrelated.
SUITE_EDGES = frozenset({(0, 1), (1, 2), (3, 2), (0, 4), (5, 6)})

VARIANTS = ("full", "static-prior", "random-init", "wo-dcs", "wo-ccs", "wo-mask")


@dataclass(frozen=True)
class SuiteConfig:
    n_steps: int = 2000
    process: str = "ar_noise"  # or "lagged"
    lag: int = 1
    # persistent noise on the root causes 0, 3, 5 and white noise elsewhere, so
    # a target's own past says little and its causes' pasts carry the signal
    ar: float | tuple = (0.95, 0.0, 0.0, 0.95, 0.0, 0.95, 0.0)
    obs_noise: float = 0.0
    lookback: int = 8
    horizon: int = 4
    stride: int = 1
    pc_alpha: float = 0.05
    adapter_alpha: float = 1.0
    adapter_beta: float = 1.0
    d_model: int = 16
    enc_hidden: int = 16
    n_layers: int = 2
    split: SplitSpec = SplitSpec(0.7, 0.1, 0.2)


def suite_dag() -> Dag:
    return Dag(7, SUITE_EDGES)


def suite_data(seed: int, cfg: SuiteConfig = SuiteConfig()) -> tuple[SeriesFrame, Dag]:
    dag = suite_dag()
    scm = LinearScm.random(dag, seed)
    if cfg.process == "ar_noise":
        frame = sample_ar_noise(scm, cfg.n_steps, seed, ar=cfg.ar, obs_noise=cfg.obs_noise)
    elif cfg.process == "lagged":
        frame = sample_lagged(scm, cfg.n_steps, cfg.lag, seed, ar=cfg.ar, obs_noise=cfg.obs_noise)
    else:
        raise ValueError(f"unknown process {cfg.process!r}")
    return frame, dag


def discover_prior(prep: PreparedData, alpha: float = 0.05) -> Cpdag:
    """PC on the normalised training rows, treated as i.i.d. samples."""
    return pc(FisherZ(prep.train.values, alpha))


def variant_configs(variant: str, base: ModelConfig, train_cfg: TrainConfig, alpha: float, beta: float):
    """(model config, train config, adapter alpha, adapter beta) for an ablation variant."""
    if variant == "full":
        return base, train_cfg, alpha, beta
    if variant == "static-prior":
        return replace(base, learn_logits=False), train_cfg, alpha, beta
    if variant == "random-init":
        return base, replace(train_cfg, use_prior_reg=False), 0.0, 0.0
    if variant == "wo-dcs":
        return replace(base, use_dcs=False), train_cfg, alpha, beta
    if variant == "wo-ccs":
        return replace(base, use_ccs=False), train_cfg, alpha, beta
    if variant == "wo-mask":
        return replace(base, mask="causal"), train_cfg, alpha, beta
    if variant == "no-projection":
        return replace(base, use_projection=False), train_cfg, alpha, beta
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class RunResult:
    variant: str
    seed: int
    train_mse: float
    val_mse: float
    test_mse: float
    test_mae: float
    history: TrainResult
    model: CdtModel

    @property
    def gap(self) -> float:
        return self.test_mse - self.train_mse


def run_variant(
    prep: PreparedData,
    prior: Cpdag,
    variant: str,
    seed: int,
    suite: SuiteConfig = SuiteConfig(),
    train_cfg: TrainConfig | None = None,
) -> RunResult:
    """Train one variant. The same seed gives every variant the same initial weights and batches."""
    train_cfg = replace(train_cfg or TrainConfig(dtype="float32"), seed=seed)
    base = ModelConfig(
        prep.train.n_vars, suite.lookback, suite.horizon, d_model=suite.d_model,
        enc_hidden=suite.enc_hidden, n_layers=suite.n_layers, backbone=train_cfg.backbone,
    )
    mcfg, tcfg, a, b = variant_configs(variant, base, train_cfg, suite.adapter_alpha, suite.adapter_beta)
    masks = prior_matrices(decompose_all(prior))
    model = CdtModel(mcfg, init_logits(masks, a, b), seed=seed)
    hist = train(model, prep.train_windows, prep.val_windows, tcfg)
    tr, _ = evaluate(model, prep.train_windows)
    va, _ = evaluate(model, prep.val_windows)
    te, te_mae = evaluate(model, prep.test_windows)
    return RunResult(variant, seed, tr, va, te, te_mae, hist, model)


def _prepared(seed: int, suite: SuiteConfig, frame: SeriesFrame | None = None) -> PreparedData:
    """Windows for one seed; a supplied ``frame`` replaces the synthetic draw and is shared by all seeds."""
    if frame is None:
        frame, _ = suite_data(seed, suite)
    return prepare(frame, suite.split, suite.lookback, suite.horizon, suite.stride)


def ablate(
    seeds=range(5),
    variants=VARIANTS,
    suite: SuiteConfig = SuiteConfig(),
    train_cfg: TrainConfig | None = None,
    frame: SeriesFrame | None = None,
) -> list[RunResult]:
    out = []
    for seed in seeds:
        prep = _prepared(seed, suite, frame)
        prior = discover_prior(prep, suite.pc_alpha)
        for v in variants:
            out.append(run_variant(prep, prior, v, seed, suite, train_cfg))
            log.info("ablate seed=%d %s test_mse=%.4f", seed, v, out[-1].test_mse)
    return out


def summarize(results: list[RunResult], attr: str = "test_mse") -> dict[str, float]:
    by: dict[str, list[float]] = {}
    for r in results:
        by.setdefault(r.variant, []).append(getattr(r, attr))
    return {k: float(np.mean(v)) for k, v in by.items()}


@dataclass
class PerturbRow:
    ratio: float
    seed: int
    jaccard: float
    mse_dca: float
    mse_static: float


def perturbation_robustness(
    mode: str = "FN",
    ratios=(0.0, 0.1, 0.2, 0.3),
    seeds=range(5),
    suite: SuiteConfig = SuiteConfig(),
    train_cfg: TrainConfig | None = None,
    frame: SeriesFrame | None = None,
) -> list[PerturbRow]:
    """Test MSE of the learnable and the frozen adapter when the prior graph is corrupted."""
    from .discovery import jaccard

    rows = []
    for seed in seeds:
        prep = _prepared(seed, suite, frame)
        prior = discover_prior(prep, suite.pc_alpha)
        for ratio in ratios:
            g = perturb(prior, mode, ratio, seed)
            dca = run_variant(prep, g, "full", seed, suite, train_cfg)
            static = run_variant(prep, g, "static-prior", seed, suite, train_cfg)
            rows.append(PerturbRow(ratio, seed, jaccard(prior, g), dca.test_mse, static.test_mse))
    return rows


def degradation(rows: list[PerturbRow], ratio: float) -> tuple[float, float]:
    """Mean MSE increase from ratio 0 to ``ratio`` for (dca, static)."""
    base = {r.seed: r for r in rows if r.ratio == 0.0}
    at = [r for r in rows if r.ratio == ratio]
    d_dca = np.mean([r.mse_dca - base[r.seed].mse_dca for r in at])
    d_static = np.mean([r.mse_static - base[r.seed].mse_static for r in at])
    return float(d_dca), float(d_static)


def gap_experiment(
    seeds=range(5),
    suite: SuiteConfig = SuiteConfig(),
    train_cfg: TrainConfig | None = None,
    frame: SeriesFrame | None = None,
) -> list[RunResult]:
    """Full model with and without the spouse projection, for train/test gap comparison."""
    return ablate(seeds, ("full", "no-projection"), suite, train_cfg, frame)
