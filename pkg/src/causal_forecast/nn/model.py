"""The role-aware forecaster: encoder, causal adapter, segment attention, spouse projection."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..roles import AdapterState, PriorMasks
from . import autograd as ag
from .autograd import Tensor

SEGMENTS = ("dcs", "ccs", "es")
MASK_KINDS = ("segment", "causal", "full")


@dataclass(frozen=True)
class ModelConfig:
    n_vars: int
    lookback: int
    horizon: int
    d_model: int = 16
    enc_hidden: int = 32
    patch: int = 4
    n_layers: int = 2
    n_heads: int = 1
    ff_mult: int = 2
    phi_hidden: int = 16
    readout: str = "last"  # or "mean" over endogenous tokens
    pos_restart: bool = True  # positional index restarts in every segment
    mask: str = "segment"
    use_dcs: bool = True
    use_ccs: bool = True
    learn_logits: bool = True
    use_projection: bool = True
    backbone: str = "transformer"  # "mlp" mixes tokens by a uniform masked average instead of attention
    per_var_heads: bool = True  # role heads get one weight matrix per source variable

    def __post_init__(self):
        if self.n_vars < 2 or self.lookback < 1 or self.horizon < 1:
            raise ValueError("need n_vars >= 2, lookback >= 1, horizon >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.readout not in ("last", "mean"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.mask not in MASK_KINDS:
            raise ValueError(f"unknown mask {self.mask!r}")
        if self.backbone not in ("transformer", "mlp"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.patch < 1 or self.n_layers < 1:
            raise ValueError("patch and n_layers must be >= 1")


def build_segment_mask(t: int, kind: str = "segment") -> np.ndarray:
    """Visibility over the token stream ``[DCS 0..T-1, CCS 0..T-1, ES 0..T-1]``.

    ``mask[q, k]`` is True when query token ``q`` may attend to key ``k``.
    ``kind="segment"``: DCS and CCS tokens see their own segment up to the same
    time; ES tokens see all three segments up to the same time.
    ``kind="causal"``: ordinary lower-triangular mask over the stream.
    ``kind="full"``: everything visible.
    """
    if t < 1:
        raise ValueError("T must be >= 1")
    n = 3 * t
    if kind == "full":
        return np.ones((n, n), dtype=bool)
    if kind == "causal":
        return np.tril(np.ones((n, n), dtype=bool))
    if kind != "segment":
        raise ValueError(f"unknown mask kind {kind!r}")
    tri = np.tril(np.ones((t, t), dtype=bool))
    zero = np.zeros((t, t), dtype=bool)
    return np.block([[tri, zero, zero], [zero, tri, zero], [tri, tri, tri]])


def causal_patches(x: np.ndarray, patch: int) -> np.ndarray:
    """(B, T, D) -> (B, D, T, patch); token t holds ``x[t-patch+1 .. t]``, zero-padded."""
    b, t, d = x.shape
    xp = np.concatenate([np.zeros((b, patch - 1, d)), x], axis=1)
    idx = np.arange(t)[:, None] + np.arange(patch)[None, :]
    return np.transpose(xp[:, idx, :], (0, 3, 1, 2))


@dataclass
class ForwardOut:
    y_raw: Tensor  # (B, S, D)
    h_sp: Tensor  # (B, D, d), time-pooled spouse context
    phi: Tensor | None  # (B, S, D)
    y_hat: Tensor  # (B, S, D)


class CdtModel:
    """All targets are processed in one pass; target ``i`` owns column ``i`` of each logit matrix."""

    def __init__(self, config: ModelConfig, adapter: AdapterState, seed: int = 0):
        if adapter.priors.n_vars != config.n_vars:
            raise ValueError("adapter size does not match n_vars")
        self.config = config
        self.adapter_init = adapter
        self.priors = adapter.priors
        rng = np.random.default_rng(seed)
        c = config
        d, h = c.d_model, c.enc_hidden
        p: dict[str, np.ndarray] = {}

        def lin(name, n_in, n_out):
            p[name + ".w"] = rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), size=(n_in, n_out))
            p[name + ".b"] = np.zeros(n_out)

        lin("enc0", c.patch, h)
        lin("enc1", h, h)
        lin("enc2", h, d)
        for g in ("g_d", "g_c", "g_s"):
            if c.per_var_heads:
                p[g + ".w"] = rng.normal(0.0, np.sqrt(1.0 / d), size=(c.n_vars, d, d))
                p[g + ".b"] = np.zeros((c.n_vars, 1, d))
            else:
                lin(g, d, d)
        n_pos = c.lookback if c.pos_restart else 3 * c.lookback
        p["pos"] = rng.normal(0.0, 0.02, size=(n_pos, d))
        p["seg"] = rng.normal(0.0, 0.02, size=(3, d))
        for layer in range(c.n_layers):
            pre = f"blk{layer}."
            for ln in ("ln1", "ln2"):
                p[pre + ln + ".g"] = np.ones(d)
                p[pre + ln + ".b"] = np.zeros(d)
            for m in ("q", "k", "v", "o") if c.backbone == "transformer" else ("v", "o"):
                lin(pre + m, d, d)
            # softmax ignores a per-query shift, so a key bias never gets a gradient
            p.pop(pre + "k.b", None)
            lin(pre + "ff1", d, c.ff_mult * d)
            lin(pre + "ff2", c.ff_mult * d, d)
        p["lnf.g"] = np.ones(d)
        p["lnf.b"] = np.zeros(d)
        lin("pred", d, c.horizon)
        lin("phi1", d, c.phi_hidden)
        lin("phi2", c.phi_hidden, c.horizon)
        p["w_dcs"] = adapter.w_dcs.copy()
        p["w_ccs"] = adapter.w_ccs.copy()
        p["w_sp"] = adapter.w_sp.copy()
        self.params: dict[str, Tensor] = {}
        for k, v in p.items():
            trainable = c.learn_logits or not k.startswith("w_")
            self.params[k] = Tensor(v, requires_grad=trainable, name=k)
        self._mask = build_segment_mask(c.lookback, c.mask)
        self._uniform = self._mask / self._mask.sum(axis=1, keepdims=True)

    # parameter bookkeeping

    def trainable(self) -> dict[str, Tensor]:
        c = self.config
        out = {}
        for k, t in self.params.items():
            if not t.requires_grad:
                continue
            if not c.use_projection and k.startswith(("phi", "g_s", "w_sp")):
                continue
            out[k] = t
        return out

    def n_parameters(self) -> int:
        return int(sum(t.data.size for t in self.trainable().values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            if self.params[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=ag._STATE["dtype"])

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def adapter_state(self) -> AdapterState:
        a = self.adapter_init
        return AdapterState(
            self.params["w_dcs"].data.copy(),
            self.params["w_ccs"].data.copy(),
            self.params["w_sp"].data.copy(),
            a.priors,
            a.alpha,
            a.beta,
        )

    # building blocks

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return ag.add(ag.matmul(x, self.params[name + ".w"]), self.params[name + ".b"])

    def encode(self, x: np.ndarray) -> Tensor:
        """(B, T, D) history -> (B, D, T, d); each variable is encoded independently."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        c = self.config
        if x.shape[1:] != (c.lookback, c.n_vars):
            raise ValueError(f"expected history of shape (B, {c.lookback}, {c.n_vars}), got {x.shape}")
        h = ag.Tensor(causal_patches(x, c.patch))
        h = ag.gelu(self._linear(h, "enc0"))
        h = ag.gelu(self._linear(h, "enc1"))
        return self._linear(h, "enc2")

    def head(self, h: Tensor, name: str) -> Tensor:
        return ag.gelu(self._linear(h, name))

    def adapter_aggregate(self, h: Tensor, weights: Tensor, head: str) -> Tensor:
        """``out[b, i] = sum_j weights[j, i] * g(h[b, j])`` for every target ``i``.

        ``weights`` are relevance probabilities (already passed through the sigmoid).
        """
        b, d_vars, t, d = h.shape
        g = ag.reshape(self.head(h, head), (b, d_vars, t * d))
        out = ag.matmul(ag.transpose(weights, (1, 0)), g)
        return ag.reshape(out, (b, d_vars, t, d))

    def relevance(self, key: str) -> Tensor:
        return ag.sigmoid(self.params["w_" + key])

    def _attention(self, x: Tensor, layer: int) -> Tensor:
        c = self.config
        pre = f"blk{layer}."
        if c.backbone == "mlp":
            return self._linear(ag.matmul(ag.Tensor(self._uniform), self._linear(x, pre + "v")), pre + "o")
        b, d_vars, n, d = x.shape
        nh, dh = c.n_heads, d // c.n_heads

        def split(t):
            if nh == 1:
                return t
            return ag.transpose(ag.reshape(t, (b, d_vars, n, nh, dh)), (0, 1, 3, 2, 4))

        q = split(self._linear(x, pre + "q"))
        k = split(ag.matmul(x, self.params[pre + "k.w"]))
        v = split(self._linear(x, pre + "v"))
        scores = ag.mul(ag.matmul(q, ag.transpose(k, (*range(k.ndim - 2), k.ndim - 1, k.ndim - 2))), 1.0 / np.sqrt(dh))
        att = ag.matmul(ag.masked_softmax(scores, self._mask), v)
        if nh > 1:
            att = ag.reshape(ag.transpose(att, (0, 1, 3, 2, 4)), (b, d_vars, n, d))
        return self._linear(att, pre + "o")

    def _block(self, x: Tensor, layer: int) -> Tensor:
        pre = f"blk{layer}."
        p = self.params
        y = ag.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        x = ag.add(x, self._attention(y, layer))
        y = ag.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        y = self._linear(ag.gelu(self._linear(y, pre + "ff1")), pre + "ff2")
        return ag.add(x, y)

    def tokens(self, h: Tensor) -> Tensor:
        """Serialised per-target stream (B, D, 3T, d) before the attention blocks."""
        c = self.config
        b, d_vars, t, d = h.shape
        segs = []
        for key, use in (("dcs", c.use_dcs), ("ccs", c.use_ccs)):
            if use:
                segs.append(self.adapter_aggregate(h, self.relevance(key), "g_" + key[0]))
            else:
                segs.append(ag.Tensor(np.zeros((b, d_vars, t, d))))
        segs.append(h)
        pos, seg = self.params["pos"], self.params["seg"]
        out = []
        for s_idx, s in enumerate(segs):
            pe = pos if c.pos_restart else ag.getitem(pos, slice(s_idx * t, (s_idx + 1) * t))
            out.append(ag.add(ag.add(s, pe), ag.getitem(seg, slice(s_idx, s_idx + 1))))
        return ag.concat(out, axis=2)

    def hidden(self, x: np.ndarray) -> Tensor:
        """Final-layer token states (B, D, 3T, d)."""
        z = self.tokens(self.encode(x))
        for layer in range(self.config.n_layers):
            z = self._block(z, layer)
        return ag.layer_norm(z, self.params["lnf.g"], self.params["lnf.b"])

    def spouse_context(self, h: Tensor) -> Tensor:
        """Time-pooled spouse aggregate (B, D, d).

        Aggregation is restricted to the prior's spouse candidates; the logits
        only reweight within that support. Letting every variable in with a
        small weight makes the projection subtract genuine signal from parents
        and common-cause relatives, which are correlated with the target.
        The logits are refined by the prior regulariser only, and the shared
        encoder is not trained through this branch.
        """
        w = ag.mul(ag.stop_gradient(self.relevance("sp")), self.priors.sp)
        return ag.mean(self.adapter_aggregate(ag.stop_gradient(h), w, "g_s"), axis=2)

    def phi_hat(self, h_sp: Tensor) -> Tensor:
        """Estimated centred conditional mean of the raw output given spouse context, (B, S, D)."""
        y = self._linear(ag.gelu(self._linear(h_sp, "phi1")), "phi2")
        return ag.transpose(y, (0, 2, 1))

    def forward(self, x: np.ndarray) -> ForwardOut:
        c = self.config
        h = self.encode(x)
        z = self.tokens(h)
        for layer in range(c.n_layers):
            z = self._block(z, layer)
        z = ag.layer_norm(z, self.params["lnf.g"], self.params["lnf.b"])
        t = c.lookback
        if c.readout == "last":
            r = ag.getitem(z, (slice(None), slice(None), 3 * t - 1))
        else:
            r = ag.mean(ag.getitem(z, (slice(None), slice(None), slice(2 * t, 3 * t))), axis=2)
        y_raw = ag.transpose(self._linear(r, "pred"), (0, 2, 1))
        h_sp = self.spouse_context(h)
        if not c.use_projection:
            return ForwardOut(y_raw, h_sp, None, y_raw)
        phi = self.phi_hat(h_sp)
        return ForwardOut(y_raw, h_sp, phi, spouse_project(y_raw, phi))

    def forward_target(self, x: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray]:
        """Raw forecast (B, S) and spouse context (B, d) for one target."""
        out = self.forward(x)
        return out.y_raw.data[:, :, target], out.h_sp.data[:, target]

    def predict(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        chunks = [self.forward(x[i : i + batch]).y_hat.data for i in range(0, len(x), batch)]
        return np.concatenate(chunks, axis=0)

    def with_config(self, **changes) -> "CdtModel":
        """A copy sharing current parameter values under a modified config."""
        m = CdtModel(replace(self.config, **changes), self.adapter_init)
        m.load_state(self.state())
        return m


def spouse_project(y_raw: Tensor, phi: Tensor | None) -> Tensor:
    """Subtract the estimated spouse-driven component from the raw forecast.

    ``phi`` only receives gradient from its own regression loss, so in the
    forecasting loss it acts as a fixed correction.
    """
    if phi is None:
        return y_raw
    return ag.sub(y_raw, ag.stop_gradient(phi))


# checkpoints


def save_checkpoint(path: str | Path, model: CdtModel, extra: dict | None = None) -> None:
    meta = {
        "config": asdict(model.config),
        "alpha": model.adapter_init.alpha,
        "beta": model.adapter_init.beta,
        "shapes": {k: list(t.shape) for k, t in model.params.items()},
        "extra": extra or {},
    }
    arrays = {"param/" + k: t.data for k, t in model.params.items()}
    arrays.update({"prior/" + k: v for k, v in model.priors.as_dict().items()})
    arrays.update({"init/" + k: getattr(model.adapter_init, "w_" + k) for k in ("dcs", "ccs", "sp")})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[CdtModel, dict]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        priors = PriorMasks(z["prior/dcs"], z["prior/ccs"], z["prior/sp"])
        adapter = AdapterState(
            z["init/dcs"].copy(), z["init/ccs"].copy(), z["init/sp"].copy(), priors, meta["alpha"], meta["beta"]
        )
        model = CdtModel(ModelConfig(**meta["config"]), adapter)
        model.load_state({k[len("param/") :]: z[k] for k in z.files if k.startswith("param/")})
    return model, meta["extra"]


@dataclass
class ParamReport:
    total: int
    by_group: dict[str, int] = field(default_factory=dict)


def parameter_report(model: CdtModel) -> ParamReport:
    groups: dict[str, int] = {}
    for k, t in model.trainable().items():
        g = k.split(".")[0]
        groups[g] = groups.get(g, 0) + t.data.size
    return ParamReport(sum(groups.values()), groups)
