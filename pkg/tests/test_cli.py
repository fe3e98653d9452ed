import csv
import json

import numpy as np
import pytest

from causal_forecast.cli import main, sha256
from causal_forecast.config import ConfigError, RunConfig
from causal_forecast.graphs import read_adjacency_csv

FAST = ["--set", "train.epochs=1", "--set", "window.lookback=4", "--set", "window.horizon=2"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def series(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--dag", "suite", "--process", "ar-noise", "--ar", "0.8", "--n", "400", "--out", str(out)]) == 0
    return out / "data.csv"


# ---- config ----

def test_config_parse_and_dump_round_trip():
    cfg = RunConfig.parse("# comment\ntrain.lr = 1e-4  # inline\nwindow.lookback=16\n\n")
    assert cfg["train.lr"] == 1e-4 and cfg["window.lookback"] == 16
    assert RunConfig.parse(cfg.dump()).values == cfg.values
    lines = cfg.dump().splitlines()
    assert lines == sorted(lines)


@pytest.mark.parametrize(
    "text", ["nope.key = 1", "train.batch = many", "just words", "split.train = 0.9"]
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text).validate()


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "none.txt")


# ---- subcommands ----

def test_synth_collider(tmp_path):
    assert main(["synth", "--dag", "collider", "--n", "100000", "--out", str(tmp_path)]) == 0
    data = _rows(tmp_path / "data.csv")
    assert len(data) == 100_001 and len(data[0]) == 3
    g, names = read_adjacency_csv(tmp_path / "graph.csv")
    assert g.directed_edges() == {(0, 2), (1, 2)}
    assert (tmp_path / "config.txt").is_file() and (tmp_path / "manifest.json").is_file()


def test_discover_recovers_collider(tmp_path):
    syn = tmp_path / "syn"
    main(["synth", "--dag", "collider", "--n", "20000", "--out", str(syn)])
    out = tmp_path / "d"
    assert main(["discover", "--data", str(syn / "data.csv"), "--out", str(out)]) == 0
    g, _ = read_adjacency_csv(out / "cpdag.csv")
    assert g.directed_edges() == {(0, 2), (1, 2)}
    seps = _rows(out / "sepsets.csv")
    assert seps[0] == ["a", "b", "sepset"] and len(seps) == 2


def test_granger_and_decompose(series, tmp_path):
    assert main(["granger", "--data", str(series), "--out", str(tmp_path / "g")]) == 0
    m = _rows(tmp_path / "g" / "granger.csv")
    vals = np.array([[float(v) for v in r[1:]] for r in m[1:]])
    assert vals.shape == (7, 7) and np.all(np.diag(vals) == 0) and vals.max() > 0
    assert main(["decompose", "--data", str(series), "--out", str(tmp_path / "r")]) == 0
    roles = _rows(tmp_path / "r" / "roles.csv")
    assert roles[0] == ["target", "variable", "role"] and len(roles) == 1 + 7 * 6
    for k in ("dcs", "ccs", "sp"):
        assert (tmp_path / "r" / f"mask_{k}.csv").is_file()


def test_train_eval_and_manifest(series, tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--data", str(series), "--out", str(out), *FAST]) == 0
    for name in ("history.csv", "model.npz", "metrics.csv", "cpdag.csv", "relevance_dcs.csv"):
        assert (out / name).is_file()
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "train" and man["seeds"] == [0]
    for item in man["outputs"]:
        assert sha256(out / item["path"]) == item["sha256"]
    assert man["inputs"][0]["sha256"] == sha256(series)
    ev = tmp_path / "e"
    assert main(["eval", "--data", str(series), "--out", str(ev), "--checkpoint", str(out / "model.npz"), *FAST]) == 0
    assert _rows(ev / "metrics.csv") == _rows(out / "metrics.csv")


def test_train_with_graph_file(series, tmp_path):
    graph = series.parent / "graph.csv"
    out = tmp_path / "t"
    assert main(["train", "--data", str(series), "--graph", str(graph), "--out", str(out), *FAST]) == 0
    assert not (out / "cpdag.csv").exists()


def test_experiment_subcommands(series, tmp_path):
    common = ["--data", str(series), "--seeds", "0", *FAST]
    assert main(["perturb", "--ratios", "0,0.3", "--out", str(tmp_path / "p"), *common]) == 0
    assert _rows(tmp_path / "p" / "perturb.csv")[0] == ["ratio", "mse_dca", "mse_static"]
    assert len(_rows(tmp_path / "p" / "perturb.csv")) == 3
    assert main(["ablate", "--out", str(tmp_path / "a"), *common]) == 0
    labels = [r[0] for r in _rows(tmp_path / "a" / "ablation.csv")[1:]]
    assert labels == ["full", "static-prior", "random-init", "wo-dcs", "wo-ccs", "wo-mask"]
    assert main(["gapexp", "--out", str(tmp_path / "x"), *common]) == 0
    assert [r[0] for r in _rows(tmp_path / "x" / "gap.csv")[1:]] == ["full", "no-projection"]


# ---- exit codes ----

def _code(args, capsys):
    code = main(args)
    err = capsys.readouterr().err.strip().splitlines()
    return code, err


def test_exit_config_error(tmp_path, capsys):
    code, err = _code(["synth", "--set", "bogus.key=1", "--out", str(tmp_path)], capsys)
    assert code == 2 and len(err) == 1 and err[0].startswith("ConfigError: ")
    code, _ = _code(["frobnicate"], capsys)
    assert code == 2


def test_exit_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,x\n")
    code, err = _code(["discover", "--data", str(bad), "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and err[0].startswith("DataError: ")


def test_exit_missing_artifact(series, tmp_path, capsys):
    code, err = _code(["discover", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")], capsys)
    assert code == 5 and err[0].startswith("MissingArtifactError: ")
    code, _ = _code(["eval", "--data", str(series), "--checkpoint", str(tmp_path / "x.npz"), "--out", str(tmp_path)], capsys)
    assert code == 5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_divergence(series, tmp_path, capsys):
    args = ["train", "--data", str(series), "--out", str(tmp_path), *FAST, "--set", "train.lr=1e6"]
    code, err = _code(args, capsys)
    assert code == 4 and err[0].startswith("DivergenceError: ")


# ---- determinism ----

SUBCOMMANDS = [
    ["synth", "--dag", "random", "--vars", "5", "--process", "ar-noise", "--n", "300"],
    ["discover"],
    ["granger"],
    ["decompose"],
    ["train", *FAST],
    ["perturb", "--ratios", "0.3", "--seeds", "0", *FAST],
    ["ablate", "--seeds", "0", "--variants", "full,wo-mask", *FAST],
    ["gapexp", "--seeds", "0", *FAST],
]


@pytest.mark.parametrize("cmd", SUBCOMMANDS, ids=[c[0] for c in SUBCOMMANDS])
def test_rerun_byte_identical(cmd, series, tmp_path):
    args = cmd if cmd[0] == "synth" else [*cmd, "--data", str(series)]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    # config.txt records out.dir, so it and its manifest hash legitimately differ
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("out.dir")]  # noqa: E731
    assert strip(a / "config.txt") == strip(b / "config.txt")
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    for m in (ma, mb):
        m["outputs"] = [o for o in m["outputs"] if o["path"] != "config.txt"]
    assert ma == mb
    for n in names:
        if n not in ("config.txt", "manifest.json"):
            assert (a / n).read_bytes() == (b / n).read_bytes(), n
