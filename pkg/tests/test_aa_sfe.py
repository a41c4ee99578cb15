import numpy as np
import pytest

from est import aa_sfe
from est.aa_sfe import (AASFE, FrameEncoder, FrameEncoderConfig, aggregate,
                        extract_snippet_features, frame_weights, global_vector,
                        intra_snippet_attention)
from est.errors import DimensionError
from est.gradcheck import gradcheck
from est.tensor import Tensor, tsum

import oracles


def make_sfe(d=4, kind="linear", h=8, w=8, seed=0):
    params = {}
    sfe = AASFE(FrameEncoderConfig(h, w, 1, kind, (4, 8), 4), d, params,
                np.random.default_rng(seed))
    return sfe, params


# -- frame encoder ----------------------------------------------------------

@pytest.mark.parametrize("kind", ["linear", "conv"])
def test_identical_frames_identical_rows(kind):
    sfe, _ = make_sfe(kind=kind)
    frame = np.random.default_rng(0).random((8, 8, 1))
    out = aa_sfe.encode_frames(np.stack([frame] * 3), sfe.encoder).data
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])


def test_encoder_output_shape_default_geometry():
    params = {}
    enc = FrameEncoder(FrameEncoderConfig(), 64, params, np.random.default_rng(0))
    assert enc(np.zeros((5, 32, 32, 1))).shape == (5, 64)


def test_linear_encoder_zero_frames_zero_bias():
    sfe, params = make_sfe()
    assert not params["frame.proj.bias"].data.any()
    assert not aa_sfe.encode_frames(np.zeros((5, 8, 8, 1)), sfe.encoder).data.any()


def test_encoder_geometry_mismatch():
    sfe, _ = make_sfe()
    with pytest.raises(DimensionError):
        sfe.encoder(np.zeros((2, 16, 8, 1)))


# -- first level: intra-snippet attention ------------------------------------

def test_intra_attention_is_row_equivariant():
    sfe, params = make_sfe()
    I = np.random.default_rng(1).normal(size=(5, 4))
    perm = [3, 0, 4, 1, 2]
    a = intra_snippet_attention(Tensor(I), params)[0].data
    b = intra_snippet_attention(Tensor(I[perm]), params)[0].data
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_intra_attention_single_frame_is_value_projection():
    sfe, params = make_sfe()
    params["sfe.v.bias"].data[:] = np.random.default_rng(9).normal(size=4)
    I = np.random.default_rng(2).normal(size=(1, 4))
    out = intra_snippet_attention(Tensor(I), params)[0].data
    expected = I @ params["sfe.v.weight"].data + params["sfe.v.bias"].data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_intra_attention_matches_hand_rolled_oracle():
    sfe, params = make_sfe()
    rng = np.random.default_rng(3)
    for name in ("sfe.q.bias", "sfe.v.bias"):
        params[name].data[:] = rng.normal(size=4)
    I = rng.normal(size=(3, 4)).tolist()

    def project(name, bias=True):
        out = oracles.matmul(I, params[f"{name}.weight"].data.tolist())
        if bias:
            out = [[x + b for x, b in zip(row, params[f"{name}.bias"].data)] for row in out]
        return out

    expected, _ = oracles.attention(project("sfe.q"), project("sfe.k", bias=False),
                                    project("sfe.v"))
    got = intra_snippet_attention(Tensor(I), params)[0].data
    np.testing.assert_allclose(got, expected, atol=1e-12)


# -- second level ------------------------------------------------------------

def test_global_vector_examples():
    assert global_vector(Tensor([[1.0, -2.0]])).data.tolist() == [1.0, -2.0]
    assert global_vector(Tensor([[1.0, 0.0], [0.0, 1.0]])).data.tolist() == [1.0, 1.0]
    v = [0.3, -0.1, 2.0]
    assert global_vector(Tensor([v, v, v])).data.tolist() == v


def test_frame_weights_examples():
    rows = Tensor([[1.0, 0.0], [0.0, 1.0]])
    alpha = frame_weights(rows, Tensor([1.0, 1.0])).data
    np.testing.assert_allclose(alpha, [2 ** -0.5, 2 ** -0.5], atol=1e-12)

    rows = Tensor([[3.0, 2.0, 5.0], [1.0, 2.0, -1.0], [0.0, 1.0, 4.0]])
    alpha = frame_weights(rows, global_vector(rows)).data
    assert alpha[0] == pytest.approx(1.0, abs=1e-12)


def test_aggregate_examples():
    rows = np.random.default_rng(4).normal(size=(5, 3))
    np.testing.assert_allclose(aggregate(Tensor(rows), Tensor(np.full(5, 0.3))).data,
                               rows.mean(axis=0), atol=1e-12)
    np.testing.assert_array_equal(aggregate(Tensor(rows), Tensor([1.0, 0, 0, 0, 0])).data, rows[0])
    out = aggregate(Tensor([[2.0, 0.0], [0.0, 2.0]]), Tensor([0.5, 1.0])).data
    np.testing.assert_allclose(out, [2 / 3, 4 / 3], atol=1e-12)


def test_aggregate_zero_weight_sum_is_finite():
    out = aggregate(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([0.5, -0.5])).data
    assert np.all(np.isfinite(out))


def test_alpha_in_unit_interval_and_positive_weights_stay_in_hull():
    sfe, params = make_sfe(d=6)
    params["frame.proj.bias"].data[:] = 0.5
    rng = np.random.default_rng(5)
    for _ in range(200):
        I_prime = Tensor(rng.normal(size=(5, 6)))
        alpha = frame_weights(I_prime, global_vector(I_prime))
        assert np.all(np.abs(alpha.data) <= 1 + 1e-12)
        if np.all(alpha.data > 0):
            R = aggregate(I_prime, alpha).data
            assert np.all(R >= I_prime.data.min(axis=0) - 1e-12)
            assert np.all(R <= I_prime.data.max(axis=0) + 1e-12)


# -- full extractor ----------------------------------------------------------------

def test_extract_shape_default():
    params = {}
    sfe = AASFE(FrameEncoderConfig(), 64, params, np.random.default_rng(0))
    R, alpha = extract_snippet_features(np.random.default_rng(0).random((7, 5, 32, 32, 1)), sfe)
    assert R.shape == (7, 64) and alpha.shape == (7, 5)


def test_snippet_order_permutes_rows():
    sfe, _ = make_sfe(kind="conv")
    frames = np.random.default_rng(6).random((4, 3, 8, 8, 1))
    perm = [2, 0, 3, 1]
    a = sfe(frames).data
    b = sfe(frames[perm]).data
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_frame_order_within_snippet_does_not_matter():
    sfe, _ = make_sfe(kind="conv")
    rng = np.random.default_rng(7)
    frames = rng.random((3, 5, 8, 8, 1))
    base = sfe(frames).data
    shuffled = frames.copy()
    shuffled[1] = frames[1][rng.permutation(5)]
    np.testing.assert_allclose(sfe(shuffled).data, base, atol=1e-9)


def test_aa_sfe_gradients_match_finite_differences():
    sfe, params = make_sfe(d=4, h=8, w=8)
    for name in ("sfe.q.bias", "sfe.v.bias", "frame.proj.bias"):
        params[name].data[:] = np.random.default_rng(8).normal(size=params[name].shape)
    frames = np.random.default_rng(9).random((3, 2, 8, 8, 1))
    weights = np.random.default_rng(10).normal(size=(3, 4))
    report = gradcheck(lambda: tsum(sfe(frames) * weights), params, h=1e-5, tol=1e-5)
    assert report.passed, report.per_parameter


@pytest.mark.parametrize("kind", ["linear", "conv"])
def test_encoder_ignores_global_brightness(kind):
    sfe, _ = make_sfe(kind=kind)
    frames = np.random.default_rng(11).random((2, 8, 8, 1))
    a = aa_sfe.encode_frames(frames, sfe.encoder).data
    b = aa_sfe.encode_frames(frames + np.array([0.3, -0.2])[:, None, None, None], sfe.encoder).data
    np.testing.assert_allclose(a, b, atol=1e-12)
