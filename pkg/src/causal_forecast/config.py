"""Line-oriented ``key = value`` run configuration with typed, closed key set."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable


class ConfigError(ValueError):
    pass


# key -> (type, default)
KEYS: dict[str, tuple[type, Any]] = {
    "data.path": (str, ""),
    "split.train": (float, 0.7),
    "split.val": (float, 0.1),
    "split.test": (float, 0.2),
    "window.lookback": (int, 8),
    "window.horizon": (int, 4),
    "window.stride": (int, 1),
    "pc.alpha": (float, 0.05),
    "granger.lag": (int, 4),
    "adapter.alpha": (float, 1.0),
    "adapter.beta": (float, 1.0),
    "train.lr": (float, 1e-3),
    "train.batch": (int, 32),
    "train.epochs": (int, 10),
    "train.patience": (int, 3),
    "train.lambda": (float, 0.2),
    "train.seed": (int, 0),
    "train.backbone": (str, "transformer"),
    "train.dtype": (str, "float32"),
    "out.dir": (str, "out"),
}


def _coerce(key: str, raw: Any) -> Any:
    typ = KEYS[key][0]
    if isinstance(raw, typ) and typ is not str and not isinstance(raw, bool):
        return raw
    text = str(raw).strip()
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {text!r}") from None
    return text


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in KEYS.items()})

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def set(self, key: str, raw: Any) -> None:
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, raw)

    def update(self, pairs: Iterable[tuple[str, Any]]) -> "RunConfig":
        for k, v in pairs:
            self.set(k, v)
        return self

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cfg = cls()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected 'key = value'")
            k, v = line.split("=", 1)
            cfg.set(k, v)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        return cls.parse(text)

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    def validate(self) -> "RunConfig":
        total = self["split.train"] + self["split.val"] + self["split.test"]
        if min(self["split.train"], self["split.val"], self["split.test"]) <= 0 or abs(total - 1.0) > 1e-9:
            raise ConfigError("split fractions must be positive and sum to 1")
        for k in ("window.lookback", "window.horizon", "window.stride", "granger.lag", "train.batch",
                  "train.epochs", "train.patience"):
            if self[k] < 1:
                raise ConfigError(f"{k} must be >= 1")
        if not 0 < self["pc.alpha"] < 1:
            raise ConfigError("pc.alpha must lie in (0, 1)")
        if self["adapter.alpha"] < 0 or self["adapter.beta"] < 0:
            raise ConfigError("adapter.alpha and adapter.beta must be >= 0")
        if self["train.lr"] <= 0 or self["train.lambda"] < 0:
            raise ConfigError("train.lr must be > 0 and train.lambda >= 0")
        if self["train.backbone"] not in ("transformer", "mlp"):
            raise ConfigError("train.backbone must be transformer or mlp")
        if self["train.dtype"] not in ("float32", "float64"):
            raise ConfigError("train.dtype must be float32 or float64")
        return self
