import numpy as np
import pytest

from est import checkpoint
from est import tensor as T
from est.errors import ConfigError, DimensionError
from est.model import EST, ModelConfig, positional_encoding, profile
from est.tensor import Tensor

MINI = dict(d=8, n=3, J=2, num_heads=2, num_encoder_layers=1, num_decoder_layers=1,
            height=8, width=8, encoder_kind="linear", num_shuffle_types=5)


def mini(**kw):
    return EST(ModelConfig(**{**MINI, **kw}))


def frames_for(model, videos=2, seed=0):
    c = model.cfg
    return np.random.default_rng(seed).random((videos, c.n, c.J, c.height, c.width, c.channels))


# -- positional encoding -------------------------------------------------------

def test_positional_encoding_examples():
    pe = positional_encoding(7, 64)
    np.testing.assert_array_equal(pe[0, 0::2], 0.0)
    np.testing.assert_array_equal(pe[0, 1::2], 1.0)
    assert pe[1, 0] == pytest.approx(np.sin(1.0), abs=1e-12)
    assert pe[1, 1] == pytest.approx(np.cos(1.0), abs=1e-12)
    assert pe[3, 2] == pytest.approx(np.sin(3 / 10000 ** (2 / 64)), abs=1e-12)


def test_positional_encoding_rejects_odd_width():
    with pytest.raises(ConfigError):
        positional_encoding(3, 5)


# -- encoder -------------------------------------------------------------------

def test_encoder_shape():
    m = EST(ModelConfig(encoder_kind="linear"))
    H = m.encode(Tensor(np.random.default_rng(0).normal(size=(2, 7, 64))))
    assert H.shape == (2, 7, 64)


def test_encoder_without_positions_is_permutation_equivariant():
    m = mini(d=16, n=5, num_heads=4, num_encoder_layers=2)
    R = np.random.default_rng(1).normal(size=(1, 5, 16))
    perm = [4, 2, 0, 1, 3]
    a = m.encode(Tensor(R), positional=False).data
    b = m.encode(Tensor(R[:, perm]), positional=False).data
    np.testing.assert_allclose(b, a[:, perm], atol=1e-9)


def test_encoder_with_positions_breaks_equivariance():
    m = mini(d=16, n=5, num_heads=4, num_encoder_layers=2)
    R = np.random.default_rng(1).normal(size=(1, 5, 16))
    perm = [4, 2, 0, 1, 3]
    a = m.encode(Tensor(R)).data
    b = m.encode(Tensor(R[:, perm])).data
    assert np.abs(b - a[:, perm]).max() > 1e-3


def test_encoder_single_snippet():
    m = mini(n=1)
    assert m.encode(Tensor(np.ones((1, 1, 8)))).shape == (1, 1, 8)


def test_encoder_width_mismatch():
    with pytest.raises(DimensionError):
        mini().encode(Tensor(np.ones((1, 3, 6))))


# -- decoder -------------------------------------------------------------------

def test_cross_attention_sums_to_one():
    m = mini()
    H = Tensor(np.random.default_rng(2).normal(size=(4, 3, 8)))
    T_, cross = m.decode(H)
    assert T_.shape == (4, 8)
    np.testing.assert_allclose(cross.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(cross >= 0)


def test_decoder_uses_attention_over_snippets():
    m = mini()
    H = Tensor(np.random.default_rng(3).normal(size=(1, 3, 8)))
    H2 = Tensor(H.data[:, [1, 0, 2]])
    np.testing.assert_allclose(m.decode(H2)[0].data, m.decode(H)[0].data, atol=1e-12)


def test_decoder_single_query_per_video():
    m = mini()
    H = np.random.default_rng(4).normal(size=(2, 3, 8))
    both = m.decode(Tensor(H))[0].data
    one = m.decode(Tensor(H[1:]))[0].data
    np.testing.assert_allclose(both[1:], one, atol=1e-12)


# -- heads ---------------------------------------------------------------------

def test_head_outputs_are_distributions():
    m = mini()
    out = m(frames_for(m, 3))
    assert out.probs.shape == (3, 7) and out.order_probs.shape == (3, 5)
    np.testing.assert_allclose(out.probs.data.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(out.order_probs.data.sum(axis=1), 1.0, atol=1e-12)


def test_order_feature_width_default():
    m = EST(ModelConfig(encoder_kind="linear"))
    O = m.order_features(Tensor(np.zeros((1, 7, 64))), Tensor(np.ones((1, 64))))
    assert O.shape == (1, 448)
    np.testing.assert_array_equal(O.data, 1.0)


def test_order_features_width_mismatch():
    with pytest.raises(DimensionError):
        mini().order_features(Tensor(np.zeros((1, 3, 8))), Tensor(np.zeros((1, 4))))


def test_order_head_sees_snippet_order():
    m = mini()
    x = frames_for(m, 1, seed=5)
    a = m(x).order_probs.data
    b = m(x[:, [2, 0, 1]]).order_probs.data
    assert np.abs(a - b).max() > 1e-6


def test_unbatched_input_matches_batched():
    m = mini()
    x = frames_for(m, 1)
    np.testing.assert_array_equal(m(x[0]).probs.data, m(x).probs.data)


def test_init_is_seeded():
    a, b, c = mini(init_seed=3), mini(init_seed=3), mini(init_seed=4)
    assert checkpoint.dumps(a.params) == checkpoint.dumps(b.params)
    assert checkpoint.dumps(a.params) != checkpoint.dumps(c.params)


def test_load_state_dict_shape_mismatch():
    with pytest.raises(DimensionError):
        mini().load_state_dict(mini(d=4).state_dict())


# -- config --------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(d=7, num_heads=1), dict(d=8, num_heads=3),
                                dict(height=10)])
def test_bad_model_configs(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**{**MINI, **kw})


# -- profiler ------------------------------------------------------------------

PINNED = [
    dict(MINI),
    dict(d=16, n=4, J=3, num_heads=4, num_encoder_layers=2, num_decoder_layers=1,
         height=16, width=16, encoder_kind="conv", conv1=2, conv2=3, num_classes=5,
         num_shuffle_types=6, ffn_width=24),
    dict(),
]


def count_macs(model, with_ssop):
    """Tally matmul and conv work for one video by wrapping the engine primitives."""
    total = [0]
    real_matmul, real_conv = T.matmul, T.conv2d

    def matmul(a, b):
        out = real_matmul(a, b)
        total[0] += int(np.prod(out.shape)) * a.shape[-1]
        return out

    def conv2d(x, w, bias):
        out = real_conv(x, w, bias)
        total[0] += int(np.prod(out.shape)) * w.shape[0]
        return out

    T.matmul, T.conv2d = matmul, conv2d
    try:
        model(frames_for(model, 1), with_ssop=with_ssop)
    finally:
        T.matmul, T.conv2d = real_matmul, real_conv
    return total[0]


@pytest.mark.parametrize("kw", PINNED, ids=["mini", "mid", "default"])
def test_profile_parameter_count_matches_checkpoint_tally(kw):
    cfg = ModelConfig(**kw)
    m = EST(cfg)
    state = checkpoint.loads(checkpoint.dumps(m.params))
    assert profile(cfg)["parameter_count"] == sum(v.size for v in state.values())


@pytest.mark.parametrize("kw", PINNED, ids=["mini", "mid", "default"])
def test_profile_macs_match_counted_work(kw):
    m = EST(ModelConfig(**kw))
    prof = profile(m.cfg)
    inference = count_macs(m, with_ssop=False)
    assert prof["mac_count"] == inference
    assert prof["ssop_head_macs"] == count_macs(m, with_ssop=True) - inference


def test_profile_tiny_linear_layer_tally():
    # a single 8 -> 4 affine map holds 8*4 weights plus 4 biases
    from est.layers import add_linear
    p = {}
    add_linear(p, "x", 8, 4, np.random.default_rng(0))
    assert sum(t.size for t in p.values()) == 36


def test_profile_outputs_are_ints_and_monotone_in_ffn():
    counts = [profile(ModelConfig(**{**MINI, "ffn_width": f})) for f in (8, 16, 32)]
    for c in counts:
        assert all(isinstance(v, int) for v in c.values())
    assert counts[0]["parameter_count"] < counts[1]["parameter_count"] < counts[2]["parameter_count"]
    assert counts[0]["mac_count"] < counts[1]["mac_count"] < counts[2]["mac_count"]
