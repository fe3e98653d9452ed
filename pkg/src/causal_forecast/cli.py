"""Command-line pipeline: every subcommand writes its outputs, the resolved config and a manifest under out.dir."""
from __future__ import annotations

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")  # single-threaded BLAS keeps reruns bit-identical

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments as ex
from .config import ConfigError, RunConfig
from .dataset import DataError, SeriesFrame, SplitSpec, load_csv, prepare, save_csv
from .discovery import FisherZ, granger_matrix, run_pc
from .graphs import Cpdag, Dag, GraphError, edges_to_marks, read_adjacency_csv, write_adjacency_csv
from .nn.autograd import NonFiniteError
from .nn.model import CdtModel, ModelConfig, load_checkpoint, save_checkpoint
from .nn.train import DivergenceError, TrainConfig, evaluate, train
from .roles import decompose_all, init_logits, prior_matrices
from .scm import LinearScm, random_dag, sample_ar_noise, sample_iid, sample_lagged

log = logging.getLogger(__name__)


class MissingArtifactError(FileNotFoundError):
    pass


EXIT_CODES = (
    (ConfigError, 2),
    (DataError, 3),
    (GraphError, 3),
    (DivergenceError, 4),
    (NonFiniteError, 4),
    (MissingArtifactError, 5),
    (ValueError, 2),  # remaining argument validation from library constructors
)

NAMED_DAGS = {
    "chain": (3, ((0, 1), (1, 2))),
    "fork": (3, ((0, 1), (0, 2))),
    "collider": (3, ((0, 2), (1, 2))),
    "suite": (7, tuple(sorted(ex.SUITE_EDGES))),
}


# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_matrix(path: Path, m: np.ndarray, names: Sequence[str]) -> None:
    """Square matrix with variable names on both axes; row = source, column = target."""
    write_table(path, ["", *names], ([n, *row] for n, row in zip(names, np.asarray(m))))


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects outputs of one subcommand and writes config and manifest."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out.dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.seeds: list[int] = [cfg["train.seed"]]

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self) -> None:
        (self.out / "config.txt").write_text(self.cfg.dump(), encoding="utf-8")
        files = [self.out / "config.txt", *self.outputs]
        manifest = {
            "command": self.command,
            "seeds": self.seeds,
            "inputs": [{"path": str(p), "sha256": sha256(p)} for p in self.inputs],
            "outputs": [{"path": p.name, "sha256": sha256(p)} for p in files],
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# shared pipeline pieces


def _frame(run: Run) -> SeriesFrame:
    path = run.cfg["data.path"]
    if not path:
        raise ConfigError("data.path is required for this subcommand")
    if not Path(path).is_file():
        raise MissingArtifactError(f"data file not found: {path}")
    run.inputs.append(Path(path))
    return load_csv(path)


def _split(cfg: RunConfig) -> SplitSpec:
    return SplitSpec(cfg["split.train"], cfg["split.val"], cfg["split.test"])


def _prepared(run: Run, frame: SeriesFrame):
    c = run.cfg
    return prepare(frame, _split(c), c["window.lookback"], c["window.horizon"], c["window.stride"])


def _discover(run: Run, frame: SeriesFrame):
    """PC on the normalised training rows."""
    prep = _prepared(run, frame)
    return run_pc(FisherZ(prep.train.values, run.cfg["pc.alpha"])), prep


def _graph(run: Run, frame: SeriesFrame, graph_path: str | None) -> Cpdag:
    if graph_path:
        if not Path(graph_path).is_file():
            raise MissingArtifactError(f"graph file not found: {graph_path}")
        run.inputs.append(Path(graph_path))
        g, names = read_adjacency_csv(graph_path)
        if list(names) != list(frame.names):
            raise DataError(f"graph variables {names} do not match data columns {list(frame.names)}")
        return g
    res, _ = _discover(run, frame)
    write_adjacency_csv(run.path("cpdag.csv"), res.cpdag, frame.names)
    return res.cpdag


def _train_cfg(cfg: RunConfig, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        lr=cfg["train.lr"], batch=cfg["train.batch"], max_epochs=cfg["train.epochs"],
        patience=cfg["train.patience"], lam=cfg["train.lambda"],
        seed=cfg["train.seed"] if seed is None else seed,
        backbone=cfg["train.backbone"], dtype=cfg["train.dtype"],
    )


def _suite(cfg: RunConfig) -> ex.SuiteConfig:
    return replace(
        ex.SuiteConfig(),
        lookback=cfg["window.lookback"], horizon=cfg["window.horizon"], stride=cfg["window.stride"],
        pc_alpha=cfg["pc.alpha"], adapter_alpha=cfg["adapter.alpha"], adapter_beta=cfg["adapter.beta"],
        split=_split(cfg),
    )


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def _experiment_frame(run: Run) -> SeriesFrame | None:
    return _frame(run) if run.cfg["data.path"] else None


# subcommands


def cmd_synth(run: Run, args) -> None:
    seed = run.cfg["train.seed"]
    if args.dag == "random":
        dag = random_dag(args.vars, args.edge_prob, seed)
    else:
        n, edges = NAMED_DAGS[args.dag]
        dag = Dag(n, edges)
    if args.n < 2:
        raise ConfigError("--n must be >= 2")
    scm = LinearScm.random(dag, seed)
    if args.process == "iid":
        frame = sample_iid(scm, args.n, seed)
    elif args.process == "ar-noise":
        frame = sample_ar_noise(scm, args.n, seed, ar=args.ar, obs_noise=args.obs_noise)
    else:
        frame = sample_lagged(scm, args.n, args.lag, seed, ar=args.ar, obs_noise=args.obs_noise)
    save_csv(run.path("data.csv"), frame)
    truth = Cpdag.from_marks(edges_to_marks(dag.n_vars, sorted(dag.edges)))
    write_adjacency_csv(run.path("graph.csv"), truth, frame.names)
    write_matrix(run.path("weights.csv"), scm.weight_matrix(), frame.names)


def cmd_discover(run: Run, args) -> None:
    frame = _frame(run)
    res, _ = _discover(run, frame)
    names = frame.names
    write_adjacency_csv(run.path("cpdag.csv"), res.cpdag, names)
    rows = []
    for key in sorted(res.sepsets, key=lambda k: sorted(k)):
        a, b = sorted(key)
        rows.append([names[a], names[b], " ".join(names[v] for v in sorted(res.sepsets[key]))])
    write_table(run.path("sepsets.csv"), ["a", "b", "sepset"], rows)
    write_table(
        run.path("pc_summary.csv"),
        ["n_tests", "max_depth", "n_edges", "n_conflicts"],
        [[res.n_tests, res.max_depth, res.cpdag.n_edges(), len(res.conflicts)]],
    )


def cmd_granger(run: Run, args) -> None:
    frame = _frame(run)
    res = granger_matrix(frame, run.cfg["granger.lag"])
    for w in res.warnings:
        log.warning("%s", w)
    write_matrix(run.path("granger.csv"), res.neg_log_p, frame.names)


def cmd_decompose(run: Run, args) -> None:
    frame = _frame(run)
    g = _graph(run, frame, args.graph)
    roles = decompose_all(g)
    names = frame.names
    write_table(
        run.path("roles.csv"), ["target", "variable", "role"],
        ([names[t], names[v], r] for rs in roles for t, v, r in rs.rows()),
    )
    masks = prior_matrices(roles)
    for k, m in masks.as_dict().items():
        write_matrix(run.path(f"mask_{k}.csv"), m, names)


def _build_model(cfg: RunConfig, g: Cpdag, n_vars: int, seed: int) -> CdtModel:
    s = _suite(cfg)
    mcfg = ModelConfig(
        n_vars, cfg["window.lookback"], cfg["window.horizon"], d_model=s.d_model,
        enc_hidden=s.enc_hidden, n_layers=s.n_layers, backbone=cfg["train.backbone"],
    )
    masks = prior_matrices(decompose_all(g))
    return CdtModel(mcfg, init_logits(masks, cfg["adapter.alpha"], cfg["adapter.beta"]), seed=seed)


def cmd_train(run: Run, args) -> None:
    frame = _frame(run)
    g = _graph(run, frame, args.graph)
    prep = _prepared(run, frame)
    seed = run.cfg["train.seed"]
    model = _build_model(run.cfg, g, frame.n_vars, seed)
    hist = train(model, prep.train_windows, prep.val_windows, _train_cfg(run.cfg))
    hist.write_csv(run.path("history.csv"))
    save_checkpoint(run.path("model.npz"), model, {"names": list(frame.names), "best_epoch": hist.best_epoch})
    _write_metrics(run, model, prep)
    for k, m in model.adapter_state().relevance().items():
        write_matrix(run.path(f"relevance_{k}.csv"), m, frame.names)


def _write_metrics(run: Run, model: CdtModel, prep) -> None:
    rows = []
    for split, ws in (("train", prep.train_windows), ("val", prep.val_windows), ("test", prep.test_windows)):
        mse, mae = evaluate(model, ws)
        rows.append([split, mse, mae])
    write_table(run.path("metrics.csv"), ["split", "mse", "mae"], rows)


def cmd_eval(run: Run, args) -> None:
    if not Path(args.checkpoint).is_file():
        raise MissingArtifactError(f"checkpoint not found: {args.checkpoint}")
    frame = _frame(run)
    run.inputs.append(Path(args.checkpoint))
    model, extra = load_checkpoint(args.checkpoint)
    c = model.config
    if c.n_vars != frame.n_vars:
        raise DataError(f"checkpoint expects {c.n_vars} variables, data has {frame.n_vars}")
    if (c.lookback, c.horizon) != (run.cfg["window.lookback"], run.cfg["window.horizon"]):
        raise ConfigError(
            f"checkpoint window {c.lookback}/{c.horizon} differs from config "
            f"{run.cfg['window.lookback']}/{run.cfg['window.horizon']}"
        )
    _write_metrics(run, model, _prepared(run, frame))


def cmd_perturb(run: Run, args) -> None:
    seeds = _seeds(args.seeds)
    run.seeds = seeds
    rows = ex.perturbation_robustness(
        args.mode, _floats(args.ratios), seeds, _suite(run.cfg), _train_cfg(run.cfg), _experiment_frame(run)
    )
    write_table(
        run.path("perturb_runs.csv"), ["ratio", "seed", "jaccard", "mse_dca", "mse_static"],
        ([r.ratio, r.seed, r.jaccard, r.mse_dca, r.mse_static] for r in rows),
    )
    table = []
    for ratio in sorted({r.ratio for r in rows}):
        at = [r for r in rows if r.ratio == ratio]
        table.append([ratio, float(np.mean([r.mse_dca for r in at])), float(np.mean([r.mse_static for r in at]))])
    write_table(run.path("perturb.csv"), ["ratio", "mse_dca", "mse_static"], table)


def _run_rows(results):
    return ([r.variant, r.seed, r.train_mse, r.val_mse, r.test_mse, r.test_mae, r.gap] for r in results)


RUN_HEADER = ["variant", "seed", "train_mse", "val_mse", "test_mse", "test_mae", "gap"]


def cmd_ablate(run: Run, args) -> None:
    seeds = _seeds(args.seeds)
    run.seeds = seeds
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    for v in variants:
        if v not in ex.VARIANTS + ("no-projection",):
            raise ConfigError(f"unknown variant {v!r}")
    res = ex.ablate(seeds, variants, _suite(run.cfg), _train_cfg(run.cfg), _experiment_frame(run))
    write_table(run.path("ablation_runs.csv"), RUN_HEADER, _run_rows(res))
    mse, mae = ex.summarize(res), ex.summarize(res, "test_mae")
    write_table(run.path("ablation.csv"), ["variant", "mse", "mae"], ([v, mse[v], mae[v]] for v in variants))


def cmd_gapexp(run: Run, args) -> None:
    seeds = _seeds(args.seeds)
    run.seeds = seeds
    res = ex.gap_experiment(seeds, _suite(run.cfg), _train_cfg(run.cfg), _experiment_frame(run))
    write_table(run.path("gap_runs.csv"), RUN_HEADER, _run_rows(res))
    gap = ex.summarize(res, "gap")
    write_table(run.path("gap.csv"), ["variant", "mean_gap"], ([v, gap[v]] for v in ("full", "no-projection")))
    for r in res:
        r.history.write_csv(run.path(f"history_{r.variant}_seed{r.seed}.csv"))


COMMANDS = {
    "synth": cmd_synth,
    "discover": cmd_discover,
    "granger": cmd_granger,
    "decompose": cmd_decompose,
    "train": cmd_train,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "ablate": cmd_ablate,
    "gapexp": cmd_gapexp,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--data", help="shorthand for data.path")
    common.add_argument("--out", help="shorthand for out.dir")
    common.add_argument("--seed", type=int, help="shorthand for train.seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="causal-forecast", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("synth", parents=[common], help="sample a linear SCM")
    s.add_argument("--dag", choices=(*NAMED_DAGS, "random"), default="collider")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--vars", type=int, default=5, help="variables for --dag random")
    s.add_argument("--edge-prob", type=float, default=0.3)
    s.add_argument(
        "--process", choices=("iid", "ar-noise", "lagged"), default="iid",
        help="i.i.d. rows, within-step SCM with AR(1) noise, or edges acting across --lag steps",
    )
    s.add_argument("--lag", type=int, default=1, help="edge delay for --process lagged")
    s.add_argument("--ar", type=float, default=0.5, help="AR(1) coefficient of the noise or series")
    s.add_argument("--obs-noise", type=float, default=0.0)
    sub.add_parser("discover", parents=[common], help="PC on the training split")
    sub.add_parser("granger", parents=[common], help="pairwise Granger -log p matrix")
    for name in ("decompose", "train"):
        q = sub.add_parser(name, parents=[common])
        q.add_argument("--graph", help="adjacency CSV; PC runs inline when omitted")
    e = sub.add_parser("eval", parents=[common])
    e.add_argument("--checkpoint", required=True)
    q = sub.add_parser("perturb", parents=[common])
    q.add_argument("--mode", choices=("FN", "FP"), default="FN")
    q.add_argument("--ratios", default="0,0.1,0.2,0.3")
    q.add_argument("--seeds", default="0,1,2,3,4")
    q = sub.add_parser("ablate", parents=[common])
    q.add_argument("--seeds", default="0,1,2,3,4")
    q.add_argument("--variants", default=",".join(ex.VARIANTS))
    q = sub.add_parser("gapexp", parents=[common])
    q.add_argument("--seeds", default="0,1,2,3,4")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(*item.split("=", 1))
    for key, val in (("data.path", args.data), ("out.dir", args.out), ("train.seed", args.seed)):
        if val is not None:
            cfg.set(key, val)
    return cfg.validate()


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        run = Run(args.command, resolve_config(args))
        COMMANDS[args.command](run, args)
        run.finish()
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except Exception as e:
        for cls, code in EXIT_CODES:
            if isinstance(e, cls):
                msg = " ".join(str(e).split())
                print(f"{type(e).__name__}: {msg}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
