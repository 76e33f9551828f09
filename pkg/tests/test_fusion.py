import numpy as np
import pytest
from hypothesis import given, settings

from helpers import seeds
from radbev.bev import BevGrid, GridSpec, resample
from radbev.errors import ChannelMismatch, SpecMismatch, ValidationError
from radbev.fusion import ConvKernel, concat_channels, conv2d, point_fusion, predict_heatmap, roi_fusion
from radbev.oracles import oracle_conv

SPEC = GridSpec(0, 8, 0, 8, 1.0)


def rand_grid(rng, c, spec=SPEC):
    return BevGrid(spec.with_channels(c), rng.normal(size=(spec.rows, spec.cols, c)))


def test_kernel_validation():
    with pytest.raises(ValidationError):
        ConvKernel(np.zeros((2, 3, 1, 1)), [0.0])
    with pytest.raises(ValidationError):
        ConvKernel(np.zeros((3, 3, 1, 2)), [0.0])
    with pytest.raises(ValidationError):
        ConvKernel(np.full((1, 1, 1, 1), np.inf), [0.0])


def test_conv_identity():
    g = rand_grid(np.random.default_rng(0), 3)
    np.testing.assert_array_equal(conv2d(g, ConvKernel.pointwise(np.eye(3))).data, g.data)


def test_conv_impulse_response():
    d = np.zeros((8, 8, 1))
    d[4, 4] = 1
    out = conv2d(BevGrid(SPEC, d), ConvKernel(np.ones((3, 3, 1, 1)), [0.0])).data[:, :, 0]
    expected = np.zeros((8, 8))
    expected[3:6, 3:6] = 1
    np.testing.assert_array_equal(out, expected)


def test_conv_is_cross_correlation():
    d = np.zeros((8, 8, 1))
    d[4, 4] = 1
    w = np.zeros((3, 3, 1, 1))
    w[0, 2] = 1  # picks the input at (i - 1, j + 1)
    out = conv2d(BevGrid(SPEC, d), ConvKernel(w, [0.0])).data[:, :, 0]
    assert out[5, 3] == 1 and out.sum() == 1


def test_conv_channel_check():
    with pytest.raises(ChannelMismatch):
        conv2d(rand_grid(np.random.default_rng(0), 2), ConvKernel.pointwise(np.eye(3)))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_conv_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    g = rand_grid(rng, 2, GridSpec(0, 5, 0, 5, 1.0))
    k = ConvKernel.random(rng, 3, 2, 3)
    np.testing.assert_allclose(conv2d(g, k).data, oracle_conv(g.data, k.weights, k.bias), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_conv_linear(seed):
    rng = np.random.default_rng(seed)
    g1, g2 = rand_grid(rng, 2), rand_grid(rng, 2)
    k = ConvKernel(rng.normal(size=(5, 5, 2, 2)), np.zeros(2))
    a, b = rng.normal(size=2)
    lhs = conv2d(BevGrid(g1.spec, a * g1.data + b * g2.data), k).data
    np.testing.assert_allclose(lhs, a * conv2d(g1, k).data + b * conv2d(g2, k).data, atol=1e-9)


# Point fusion: image at half the head cell size, radar at double


def inputs(rng, c_img=3, c_rad=2):
    img = rand_grid(rng, c_img, SPEC.with_cell_size(0.5))
    rad = rand_grid(rng, c_rad, SPEC.with_cell_size(2.0))
    return img, rad


def test_point_fusion_zero_radar_passes_image():
    rng = np.random.default_rng(1)
    img, rad = inputs(rng)
    rad = BevGrid(rad.spec, np.zeros(rad.spec.shape))
    w = np.zeros((5, 3))
    w[2:, :] = np.eye(3)
    out = point_fusion(img, rad, ConvKernel.pointwise(w))
    np.testing.assert_allclose(out.data, resample(img, 0.5).data, atol=1e-15)
    assert out.spec.cell_size == 1.0


def test_point_fusion_order_matters():
    rng = np.random.default_rng(2)
    img, rad = inputs(rng, 2, 2)
    w = np.zeros((4, 1))
    w[0, 0] = 1.0  # first channel only: radar first
    k = ConvKernel.pointwise(w)
    a = point_fusion(img, rad, k, align=True).data
    np.testing.assert_allclose(a[..., 0], resample(rad, 2).data[..., 0], atol=1e-15)
    swapped = point_fusion(resample(rad, 2), resample(img, 0.5), k, align=False).data
    assert not np.allclose(a, swapped)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_point_fusion_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    img, rad = inputs(rng)
    k = ConvKernel.random(rng, 3, 5, 4)
    cat = np.concatenate([resample(rad, 2).data, resample(img, 0.5).data], axis=2)
    np.testing.assert_allclose(point_fusion(img, rad, k).data, oracle_conv(cat, k.weights, k.bias), atol=1e-12)


def test_point_fusion_spec_mismatch():
    rng = np.random.default_rng(3)
    img, rad = inputs(rng)
    with pytest.raises(SpecMismatch):
        point_fusion(img, rad, ConvKernel.pointwise(np.ones((5, 1))), align=False)
    with pytest.raises(SpecMismatch):
        concat_channels(img, rad)


def test_predict_heatmap_examples():
    z = BevGrid(SPEC.with_channels(2), np.zeros((8, 8, 2)))
    np.testing.assert_array_equal(predict_heatmap(z, ConvKernel.pointwise(np.eye(2))).data, 0.5)
    sat = predict_heatmap(z, ConvKernel.pointwise(np.eye(2), [10.0, 10.0])).data
    assert np.all(np.abs(sat - 1) < 1e-4)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_predict_heatmap_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    g = rand_grid(rng, 3)
    k = ConvKernel.random(rng, 3, 3, 2)
    out = predict_heatmap(g, k).data
    np.testing.assert_allclose(out, 1 / (1 + np.exp(-oracle_conv(g.data, k.weights, k.bias))), atol=1e-12)
    assert np.all((out > 0) & (out < 1))


# ROI fusion


def test_roi_unit_radar_with_averaging_kernel():
    rng = np.random.default_rng(4)
    pf = BevGrid(SPEC.with_channels(2), rng.uniform(size=(8, 8, 2)))
    ones = BevGrid(SPEC.with_channels(6), np.ones((8, 8, 6)))
    w = np.zeros((12, 2))
    for c in range(2):
        w[c * 6:(c + 1) * 6, c] = 1 / 6
    np.testing.assert_allclose(roi_fusion(pf, ones, ConvKernel.pointwise(w)).data, pf.data, atol=1e-15)


def test_roi_zero_radar_gives_bias():
    rng = np.random.default_rng(5)
    pf = BevGrid(SPEC.with_channels(2), rng.uniform(size=(8, 8, 2)))
    zero = BevGrid(SPEC.with_channels(6), np.zeros((8, 8, 6)))
    out = roi_fusion(pf, zero, ConvKernel.pointwise(rng.normal(size=(12, 2)), [0.3, -0.2])).data
    np.testing.assert_array_equal(out[..., 0], 0.3)
    np.testing.assert_array_equal(out[..., 1], -0.2)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_roi_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    pf = BevGrid(SPEC.with_channels(3), rng.uniform(size=(8, 8, 3)))
    rh = BevGrid(SPEC.with_channels(6), rng.uniform(size=(8, 8, 6)))
    k = ConvKernel.pointwise(rng.normal(size=(18, 3)), rng.normal(size=3))
    prod = np.zeros((8, 8, 18))
    for c in range(3):
        for a in range(6):
            prod[:, :, c * 6 + a] = pf.data[:, :, c] * rh.data[:, :, a]
    np.testing.assert_allclose(roi_fusion(pf, rh, k).data, oracle_conv(prod, k.weights, k.bias), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_roi_monotone_in_radar(seed):
    rng = np.random.default_rng(seed)
    pf = BevGrid(SPEC.with_channels(2), rng.uniform(size=(8, 8, 2)))
    rh = rng.uniform(size=(8, 8, 6))
    k = ConvKernel.pointwise(rng.uniform(size=(12, 2)))
    lo = roi_fusion(pf, BevGrid(SPEC.with_channels(6), rh), k).data
    hi = roi_fusion(pf, BevGrid(SPEC.with_channels(6), rh + rng.uniform(size=rh.shape)), k).data
    assert np.all(hi >= lo - 1e-15)


def test_roi_errors():
    pf = BevGrid(SPEC.with_channels(1), np.zeros((8, 8, 1)))
    with pytest.raises(SpecMismatch):
        roi_fusion(pf, BevGrid(GridSpec(0, 8, 0, 8, 2.0, 6), np.zeros((4, 4, 6))), ConvKernel.pointwise(np.ones((6, 1))))
    with pytest.raises(ValidationError):
        roi_fusion(pf, BevGrid(SPEC.with_channels(6), np.zeros((8, 8, 6))), ConvKernel(np.ones((3, 3, 6, 1)), [0.0]))
