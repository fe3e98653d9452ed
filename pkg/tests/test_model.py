import numpy as np
import pytest

from causal_forecast.graphs import Dag
from causal_forecast.nn import autograd as ag
from causal_forecast.nn.model import (
    CdtModel,
    ModelConfig,
    build_segment_mask,
    load_checkpoint,
    parameter_report,
    save_checkpoint,
    spouse_project,
)
from causal_forecast.roles import decompose_all, init_logits, prior_matrices
from causal_forecast.scm import cpdag_of

D, T, S = 4, 8, 4
# 0 -> 2 <- 1, 2 -> 3: gives every mask kind some support
GRAPH = cpdag_of(Dag(D, {(0, 2), (1, 2), (2, 3)}))


def _adapter(alpha=1.0, beta=1.0):
    return init_logits(prior_matrices(decompose_all(GRAPH)), alpha, beta)


def _model(seed=0, **kw):
    kw.setdefault("d_model", 16)
    return CdtModel(ModelConfig(D, T, S, **kw), _adapter(), seed=seed)


def _x(b=3, seed=0):
    return np.random.default_rng(seed).standard_normal((b, T, D))


# ---- segment mask ----

def test_mask_single_step():
    m = build_segment_mask(1).astype(int)
    np.testing.assert_array_equal(m, [[1, 0, 0], [0, 1, 0], [1, 1, 1]])


@pytest.mark.parametrize("t", [1, 2, 5, 8])
def test_mask_blocks_and_row_sums(t):
    m = build_segment_mask(t)
    tri = np.tril(np.ones((t, t), dtype=bool))
    blk = lambda r, c: m[r * t : (r + 1) * t, c * t : (c + 1) * t]  # noqa: E731
    assert not blk(0, 1).any() and not blk(1, 0).any()
    assert not blk(0, 2).any() and not blk(1, 2).any()
    for r, c in [(0, 0), (1, 1), (2, 0), (2, 1), (2, 2)]:
        np.testing.assert_array_equal(blk(r, c), tri)
    np.testing.assert_array_equal(m[2 * t :].sum(axis=1), 3 * np.arange(1, t + 1))


def test_mask_kinds():
    assert build_segment_mask(3, "full").all()
    np.testing.assert_array_equal(build_segment_mask(3, "causal"), np.tril(np.ones((9, 9), dtype=bool)))
    with pytest.raises(ValueError):
        build_segment_mask(0)
    with pytest.raises(ValueError):
        build_segment_mask(3, "other")


# ---- encoder ----

def test_encoder_shape():
    m = CdtModel(ModelConfig(7, 96, 96, d_model=64), init_logits(prior_matrices(decompose_all(cpdag_of(Dag(7))))))
    h = m.encode(np.zeros((1, 96, 7)))
    assert h.shape == (1, 7, 96, 64)


def test_encoder_channel_independent():
    m = _model()
    x = _x()
    perm = np.array([2, 0, 3, 1])
    h = m.encode(x).data
    hp = m.encode(x[:, :, perm]).data
    np.testing.assert_allclose(hp, h[:, perm], atol=1e-12)


def test_encoder_zero_input_zero_final_layer():
    m = _model()
    m.params["enc2.w"].data[:] = 0.0
    m.params["enc2.b"].data[:] = np.arange(16.0)
    h = m.encode(np.zeros((2, T, D))).data
    np.testing.assert_array_equal(h, np.broadcast_to(np.arange(16.0), h.shape))


def test_encoder_rejects_bad_shape():
    with pytest.raises(ValueError):
        _model().encode(np.zeros((1, T + 1, D)))


# ---- adapter ----

def test_adapter_limits():
    m = _model()
    h = m.encode(_x())
    zero = m.adapter_aggregate(h, ag.Tensor(np.zeros((D, D))), "g_d").data
    np.testing.assert_array_equal(zero, 0.0)
    sat = ag.sigmoid(ag.Tensor(np.where(np.eye(D)[[1]].T @ np.ones((1, D)) > 0, 50.0, -50.0)))
    out = m.adapter_aggregate(h, sat, "g_d").data
    g1 = m.head(h, "g_d").data[:, 1]
    for i in range(D):
        np.testing.assert_allclose(out[:, i], g1, atol=1e-12)


def test_adapter_prior_weight_at_alpha_one():
    m = _model()
    rel = m.relevance("ccs").data
    assert round(float(rel[2, 0]), 3) == 0.731
    assert round(float(rel[3, 0]), 3) == 0.269


def test_adapter_monotone_in_alpha():
    prior = prior_matrices(decompose_all(GRAPH)).dcs > 0
    lo = init_logits(prior_matrices(decompose_all(GRAPH)), 0.5, 1.0).relevance()["dcs"]
    hi = init_logits(prior_matrices(decompose_all(GRAPH)), 1.5, 1.0).relevance()["dcs"]
    assert np.all(hi[prior] > lo[prior])


# ---- forward ----

def test_forward_shapes():
    out = _model().forward(_x())
    assert out.y_raw.shape == (3, S, D) and out.y_hat.shape == (3, S, D)
    assert out.h_sp.shape == (3, D, 16) and out.phi.shape == (3, S, D)


def test_suppressed_logits_equal_removed_segments():
    m = _model()
    m.params["w_dcs"].data[:] = -1000.0
    m.params["w_ccs"].data[:] = -1000.0
    removed = m.with_config(use_dcs=False, use_ccs=False)
    x = _x()
    np.testing.assert_allclose(m.forward(x).y_raw.data, removed.forward(x).y_raw.data, atol=1e-6)


def test_mask_wiring_probe():
    m = _model()
    x = _x()
    assert not np.allclose(m.forward(x).y_raw.data, m.with_config(mask="full").forward(x).y_raw.data)


def test_future_inputs_invisible_to_earlier_tokens():
    m = _model()
    x = _x(2)
    base = m.hidden(x).data
    for t in range(T - 1):
        x2 = x.copy()
        x2[:, t + 1 :] = 0.0
        z = m.hidden(x2).data
        for seg in range(3):
            np.testing.assert_array_equal(z[:, :, seg * T : seg * T + t + 1], base[:, :, seg * T : seg * T + t + 1])


def test_batching_consistency():
    m = _model()
    x = _x(5)
    full = m.forward(x).y_hat.data
    for b in range(5):
        np.testing.assert_allclose(m.forward(x[b : b + 1]).y_hat.data[0], full[b], atol=1e-6)
    np.testing.assert_allclose(m.predict(x, batch=2), full, atol=1e-6)


def test_multi_head_and_mean_readout_run():
    out = _model(n_heads=4, readout="mean", pos_restart=False).forward(_x())
    assert np.isfinite(out.y_hat.data).all()


def test_mlp_backbone():
    m = _model(backbone="mlp")
    assert not any(k.endswith(("q.w", "k.w")) for k in m.params)
    x = _x()
    assert m.forward(x).y_hat.shape == (3, S, D)
    # the uniform mixing obeys the same visibility
    z = m.hidden(x).data
    x2 = x.copy()
    x2[:, 4:] = 0.0
    np.testing.assert_array_equal(m.hidden(x2).data[:, :, 2 * T : 2 * T + 4], z[:, :, 2 * T : 2 * T + 4])


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(1, T, S)
    with pytest.raises(ValueError):
        ModelConfig(D, T, S, d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(D, T, S, backbone="rnn")
    with pytest.raises(ValueError):
        CdtModel(ModelConfig(5, T, S), _adapter())


# ---- spouse projection ----

def test_spouse_project_identity_and_repeat():
    y = ag.Tensor(np.ones((2, S, D)))
    assert spouse_project(y, None) is y
    np.testing.assert_array_equal(spouse_project(y, ag.Tensor(np.zeros((2, S, D)))).data, y.data)
    phi = ag.Tensor(np.full((2, S, D), 0.25))
    twice = spouse_project(spouse_project(y, phi), phi).data
    np.testing.assert_allclose(twice, 0.5)


def test_spouse_context_limited_to_prior_spouses():
    m = _model()
    h = m.encode(_x())
    ctx = m.spouse_context(h).data
    # only target 0 (spouse 1) and target 1 (spouse 0) have spouses
    sp = prior_matrices(decompose_all(GRAPH)).sp
    assert sp[1, 0] == 1 and sp[0, 1] == 1 and sp.sum() == 2
    np.testing.assert_array_equal(ctx[:, 2:], 0.0)
    assert np.abs(ctx[:, :2]).sum() > 0


def test_no_projection_variant():
    m = _model(use_projection=False)
    out = m.forward(_x())
    assert out.phi is None and out.y_hat is out.y_raw
    assert not any(k.startswith(("phi", "g_s", "w_sp")) for k in m.trainable())


# ---- bookkeeping ----

def test_parameter_report():
    m = _model()
    r = parameter_report(m)
    assert r.total == m.n_parameters() == sum(r.by_group.values())
    assert {"enc0", "g_d", "pred", "phi1", "w_dcs"} <= set(r.by_group)


def test_frozen_logits_not_trainable():
    m = _model(learn_logits=False)
    assert not any(k.startswith("w_") for k in m.trainable())


def test_checkpoint_round_trip(tmp_path):
    m = _model(seed=3)
    m.params["w_dcs"].data[0, 1] = 0.123
    save_checkpoint(tmp_path / "a.npz", m, {"epoch": 4})
    save_checkpoint(tmp_path / "b.npz", m, {"epoch": 4})
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    m2, extra = load_checkpoint(tmp_path / "a.npz")
    assert extra == {"epoch": 4} and m2.config == m.config
    x = _x()
    np.testing.assert_array_equal(m2.predict(x), m.predict(x))
    np.testing.assert_array_equal(m2.adapter_init.w_dcs, m.adapter_init.w_dcs)
