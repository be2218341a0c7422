import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structq.neural import (
    AdamState,
    AttentionMode,
    EncoderConfig,
    NonFiniteError,
    adam_step,
    backend,
    copy_params,
    forward,
    init_params,
    loss_and_grad,
    param_count,
    positional_encoding,
)
from structq.neural import checkpoint
from structq.neural.gradcheck import check_gradients, relative_error
from structq.neural.network import dropout_masks

BACKENDS = ("numpy", "numba")


@pytest.fixture(params=BACKENDS)
def kernels(request):
    before = backend.name()
    backend.use(request.param)
    yield request.param
    backend.use(before)


def small(n=4, L=5, **kw):
    cfg = EncoderConfig(n_actions=n, max_len=L, **kw)
    return cfg, init_params(cfg, np.random.default_rng(0))


def test_config_defaults():
    cfg = EncoderConfig(n_actions=20, max_len=11)
    assert (cfg.embed_dim, cfg.num_heads, cfg.ff_dim, cfg.dropout_p, cfg.num_layers) == (32, 8, 64, 0.1, 1)
    assert cfg.embed_dim // cfg.num_heads == 4
    assert cfg.mask_token == 20 and cfg.vocab == 21


def test_config_rejects_indivisible_heads():
    with pytest.raises(ValueError):
        EncoderConfig(n_actions=4, max_len=3, embed_dim=30, num_heads=8)


def test_param_count_matches_shapes():
    cfg, p = small()
    assert param_count(p) == cfg.param_count() == sum(int(np.prod(s)) for s in cfg.param_shapes().values())


def test_positional_encoding_read_only():
    pe = positional_encoding(6, 8)
    assert pe.shape == (6, 8) and not pe.flags.writeable
    assert np.allclose(pe[0, 0::2], 0.0) and np.allclose(pe[0, 1::2], 1.0)


def test_forward_shapes_and_eval_determinism(kernels):
    cfg, p = small()
    tok = np.random.default_rng(1).integers(0, cfg.vocab, (3, 5))
    a = forward(p, tok, "full", cfg)
    b = forward(p, tok, "full", cfg)
    assert a.scores.shape == (3, 5, 4) and a.values.shape == (3, 5)
    assert np.array_equal(a.scores, b.scores)


def test_forward_rejects_bad_tokens():
    cfg, p = small()
    with pytest.raises(ValueError):
        forward(p, np.array([[0, 9]]), "full", cfg)
    with pytest.raises(ValueError):
        forward(p, np.zeros((1, 7), dtype=int), "full", cfg)


def test_non_finite_parameters_detected():
    cfg, p = small()
    p["wh2"][0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        forward(p, np.zeros((1, 3), dtype=int), "full", cfg)


def test_training_forward_needs_rng():
    cfg, p = small()
    with pytest.raises(ValueError):
        forward(p, np.zeros((1, 3), dtype=int), "full", cfg, train=True)


def test_dropout_masks_are_inverted_and_seeded():
    cfg, _ = small()
    m = dropout_masks(cfg, (200, 5, 32), np.random.default_rng(0))
    assert len(m) == 3
    vals = np.unique(m[0])
    assert set(np.round(vals, 12)) <= {0.0, round(1 / 0.9, 12)}
    assert abs(m[0].mean() - 1.0) < 0.02
    again = dropout_masks(cfg, (200, 5, 32), np.random.default_rng(0))
    assert all(np.array_equal(x, y) for x, y in zip(m, again))


@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_causal_rows_ignore_later_tokens(seed, p):
    cfg, params = small(L=5)
    rng = np.random.default_rng(seed)
    tok = rng.integers(0, cfg.vocab, (2, 5))
    moved = tok.copy()
    moved[:, p] = (moved[:, p] + 1 + rng.integers(cfg.vocab - 1)) % cfg.vocab
    a = forward(params, tok, AttentionMode.CAUSAL, cfg).scores
    b = forward(params, moved, AttentionMode.CAUSAL, cfg).scores
    assert np.array_equal(a[:, :p], b[:, :p])


def test_full_attention_rows_see_later_tokens():
    cfg, params = small(L=5)
    tok = np.array([[0, 1, 2, 3, 0]])
    moved = tok.copy()
    moved[0, 3] = 1
    a = forward(params, tok, "full", cfg).scores
    b = forward(params, moved, "full", cfg).scores
    assert not np.allclose(a[0, :3], b[0, :3])


@pytest.mark.parametrize("mode", ["causal", "full"])
@pytest.mark.parametrize("heads", [1, 2, 8])
def test_gradients_match_finite_differences(kernels, mode, heads):
    cfg, p = small(num_heads=heads)
    rng = np.random.default_rng(3)
    tok = rng.integers(0, cfg.vocab, (3, 5))
    targets = rng.standard_normal((3, 5, 4))
    select = rng.random((3, 5, 4)) < 0.5
    masks = dropout_masks(cfg, (3, 5, cfg.embed_dim), rng)
    loss, g = loss_and_grad(p, cfg, tok, mode, targets, select, masks=masks)
    res = check_gradients(lambda q: loss_and_grad(q, cfg, tok, mode, targets, select, masks=masks)[0],
                          p, g, np.random.default_rng(4), n_coords=50, min_abs=1e-7)
    assert len(res) == 50
    assert max(r[4] for r in res) < 1e-5


def test_value_head_gradient():
    from structq.neural import backward
    cfg, p = small()
    tok = np.array([[0, 1, 2]])
    fwd = forward(p, tok, "causal", cfg)
    target = np.array([[1.0, -1.0, 0.5]])

    def loss(q):
        return float(((forward(q, tok, "causal", cfg).values - target) ** 2).sum())

    g = backward(p, fwd, cfg, dvalues=2.0 * (fwd.values - target))
    res = check_gradients(loss, p, g, np.random.default_rng(0), n_coords=30, min_abs=1e-7)
    assert max(r[4] for r in res) < 1e-5


def test_backends_agree():
    cfg, p = small()
    rng = np.random.default_rng(5)
    tok = rng.integers(0, cfg.vocab, (4, 5))
    targets = rng.standard_normal((4, 5, 4))
    select = rng.random((4, 5, 4)) < 0.5
    out = {}
    before = backend.name()
    for name in BACKENDS:
        backend.use(name)
        out[name] = loss_and_grad(p, cfg, tok, "causal", targets, select)
    backend.use(before)
    assert out["numba"][0] == pytest.approx(out["numpy"][0], rel=1e-12)
    for k in p:
        assert np.allclose(out["numba"][1][k], out["numpy"][1][k], rtol=1e-10, atol=1e-13)


def test_backend_rejects_unknown():
    with pytest.raises(ValueError):
        backend.use("cuda")


def test_zero_loss_when_targets_match(kernels):
    cfg, p = small()
    tok = np.array([[0, 1, 2, 3, 4]])
    scores = forward(p, tok, "full", cfg).scores
    loss, g = loss_and_grad(p, cfg, tok, "full", scores, np.ones_like(scores, dtype=bool))
    assert loss == 0.0
    assert all(not v.any() for v in g.values())


def test_single_entry_loss_is_squared_error():
    cfg, p = small()
    tok = np.array([[0, 1]])
    scores = forward(p, tok, "full", cfg).scores
    select = np.zeros_like(scores, dtype=bool)
    select[0, 1, 2] = True
    loss, _ = loss_and_grad(p, cfg, tok, "full", np.full_like(scores, 0.25), select)
    assert loss == pytest.approx((scores[0, 1, 2] - 0.25) ** 2, rel=1e-14)


def test_empty_target_mask_rejected():
    cfg, p = small()
    with pytest.raises(ValueError):
        loss_and_grad(p, cfg, np.array([[0]]), "full", np.zeros((1, 1, 4)), np.zeros((1, 1, 4)))


def test_layer_norm_statistics():
    from structq.neural import _kernels_numpy as k
    cfg, p = small()
    x = np.random.default_rng(0).standard_normal((2, 5, 32)) * 3 + 1
    ones = np.ones_like(x)
    block = [p[f"l0.{n}"] for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b",
                                    "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")]
    y, cache = k.block_forward(x, False, 8, ones, ones, *block)
    xhat2 = cache[10]
    assert np.abs(xhat2.mean(axis=-1)).max() < 1e-6
    assert np.abs(xhat2.var(axis=-1) - 1).max() < 1e-3


# -- Adam -----------------------------------------------------------------------

def test_adam_first_step_magnitude():
    p = {"w": np.array([0.0])}
    st_ = AdamState.for_params(p, lr=0.001)
    adam_step(p, {"w": np.array([1.0])}, st_)
    assert p["w"][0] == pytest.approx(-0.001, rel=1e-7)
    assert st_.t == 1


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    fresh = {"w": np.array([1.0])}
    adam_step(fresh, {"w": np.zeros(1)}, AdamState.for_params(fresh))
    assert fresh["w"][0] == 1.0
    p = {"w": np.array([1.0, 2.0])}
    st_ = AdamState.for_params(p)
    adam_step(p, {"w": np.array([1.0, 1.0])}, st_)
    m, v = st_.m["w"].copy(), st_.v["w"].copy()
    adam_step(p, {"w": np.zeros(2)}, st_)
    assert np.allclose(st_.m["w"], 0.9 * m) and np.allclose(st_.v["w"], 0.999 * v)


def test_adam_quadratic_bowl_pinned():
    p = {"w": np.array([3.0, -2.0, 1.0, 0.5, -4.0])}
    st_ = AdamState.for_params(p, lr=0.05)
    start = float((p["w"] ** 2).sum())
    for _ in range(200):
        adam_step(p, {"w": 2 * p["w"]}, st_)
    end = float((p["w"] ** 2).sum())
    assert end < 0.1 * start
    assert end == pytest.approx(6.7919868199840355e-06, rel=1e-9)


def test_adam_rejects_non_finite_gradient():
    p = {"w": np.array([1.0])}
    with pytest.raises(NonFiniteError):
        adam_step(p, {"w": np.array([np.inf])}, AdamState.for_params(p))
    assert p["w"][0] == 1.0


# -- checkpoints ----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    cfg, p = small()
    checkpoint.save(tmp_path / "c.sqck", p, "meta")
    q, meta = checkpoint.load(tmp_path / "c.sqck")
    assert meta == "meta" and set(q) == set(p)
    assert all(np.array_equal(p[k], q[k]) and p[k].shape == q[k].shape for k in p)


def test_checkpoint_rejects_corruption():
    cfg, p = small()
    blob = checkpoint.dumps(p)
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXX" + blob[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])


def test_checkpoint_is_little_endian():
    blob = checkpoint.dumps({"a": np.array([1.0])})
    assert blob.endswith(np.array([1.0], dtype="<f8").tobytes())


def test_copy_params_is_deep():
    _, p = small()
    q = copy_params(p)
    q["emb"][0, 0] += 1
    assert p["emb"][0, 0] != q["emb"][0, 0]


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)
