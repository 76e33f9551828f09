import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import box, seeds
from radbev.bev import BevGrid, GridSpec, cell_to_world, gt_heatmap
from radbev.errors import EmptyBatch, ShapeMismatch, ValidationError
from radbev.head import (
    BIN_CENTERS,
    LossWeights,
    RegressionTargets,
    circle_nms,
    decode_detections,
    decode_rotation,
    encode_rotation,
    focal_loss,
    local_maxima,
    offset_target,
    rasterize_detections,
    reg_losses,
    rotation_bin,
    total_loss,
)
from radbev.oracles import central_difference, relative_error

SPEC = GridSpec(0, 10, -5, 5, 0.5)


# Focal loss


def test_focal_single_cell():
    value, _ = focal_loss(np.array([0.5]), np.array([1.0]))
    assert abs(value - 0.17329) < 1e-5
    assert value == pytest.approx(-math.log(0.5) * 0.25, abs=1e-15)


def test_focal_saturated_prediction():
    gt = np.zeros((4, 4))
    gt[1, 2] = 1
    pred = np.where(gt == 1, 1 - 1e-4, 1e-4)
    assert focal_loss(pred, gt)[0] < 1e-3


def test_focal_hand_computed_negative():
    # G = 0.5, p = 0.2, alpha 2, gamma 4, no positives so N = 1
    value, _ = focal_loss(np.array([0.2]), np.array([0.5]))
    expected = -(0.5 * math.log(0.2) * 0.8**2 + (1 - 0.5**4) * math.log(0.8) * 0.2**2)
    assert value == pytest.approx(expected, abs=1e-15)


def test_focal_normalizer_counts_centers():
    gt = np.array([1.0, 0.995, 0.5, 0.0])
    pred = np.array([0.3, 0.6, 0.4, 0.1])
    v2, _ = focal_loss(pred, gt)
    v1, _ = focal_loss(pred, np.array([1.0, 0.985, 0.5, 0.0]))
    raw = lambda g: -(g * np.log(pred) * (1 - pred) ** 2 + (1 - g**4) * np.log1p(-pred) * pred**2).sum()  # noqa: E731
    assert v2 == pytest.approx(raw(gt) / 2, abs=1e-14)
    assert v1 == pytest.approx(raw(np.array([1.0, 0.985, 0.5, 0.0])) / 1, abs=1e-14)


def test_focal_cornernet_variant():
    gt = np.array([1.0, 0.5])
    pred = np.array([0.7, 0.2])
    v, _ = focal_loss(pred, gt, variant="cornernet")
    expected = -(math.log(0.7) * 0.3**2 + 0.5**4 * math.log(0.8) * 0.2**2)
    assert v == pytest.approx(expected, abs=1e-15)
    with pytest.raises(ValidationError):
        focal_loss(pred, gt, variant="other")
    with pytest.raises(ShapeMismatch):
        focal_loss(pred, np.zeros(3))


def test_focal_keeps_grid_type():
    g = BevGrid(SPEC.with_channels(1), np.full((20, 20, 1), 0.3))
    _, grad = focal_loss(g, BevGrid(SPEC.with_channels(1), np.zeros((20, 20, 1))))
    assert isinstance(grad, BevGrid) and grad.data.shape == (20, 20, 1)


def _focal_instance(rng):
    gt = rng.uniform(0, 1, (4, 5)) ** 3
    gt[rng.integers(4), rng.integers(5)] = 1.0
    pred = rng.uniform(0.01, 0.99, (4, 5))
    return pred, gt


@pytest.mark.parametrize("variant", ["paper", "cornernet"])
def test_focal_gradient_finite_difference(variant):
    rng = np.random.default_rng(0)
    for _ in range(20):
        pred, gt = _focal_instance(rng)
        _, grad = focal_loss(pred, gt, variant=variant)
        num = central_difference(lambda p: focal_loss(p, gt, variant=variant)[0], pred, 1e-5)
        assert relative_error(grad, num, 1e-6).max() < 1e-4


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_focal_nonincreasing_toward_target(seed, g):
    rng = np.random.default_rng(seed)
    target = 1.0 if g > 0.99 else 0.0  # binary targets: moving toward them never hurts
    start = rng.uniform(1e-3, 1 - 1e-3)
    path = np.linspace(start, target, 50)
    vals = [focal_loss(np.array([p]), np.array([target]))[0] for p in path]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_focal_finite_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(-1, 2, (5, 5))  # clamped internally
    gt = rng.uniform(0, 1, (5, 5))
    v, grad = focal_loss(pred, gt)
    assert np.isfinite(v) and v >= 0 and np.all(np.isfinite(grad))


# Regression losses


def _reg_instance(rng, n=3, n_att=2):
    yaw = rng.uniform(-np.pi, np.pi, n)
    gts = RegressionTargets(rng.normal(size=(n, 3)), rng.uniform(0.5, 5, (n, 3)), rng.normal(size=(n, 2)), yaw=yaw,
                            attributes=(rng.uniform(size=(n, n_att)) > 0.5).astype(float))
    preds = RegressionTargets(rng.normal(size=(n, 3)), rng.uniform(0.5, 5, (n, 3)), rng.normal(size=(n, 2)),
                              bin_logits=rng.normal(size=(n, 2)), bin_residuals=rng.uniform(-np.pi, np.pi, (n, 2)),
                              attributes=rng.uniform(0.05, 0.95, (n, n_att)))
    return preds, gts


def _with(preds, name, value):
    kw = dict(offset=preds.offset, dims=preds.dims, velocity=preds.velocity, bin_logits=preds.bin_logits,
              bin_residuals=preds.bin_residuals, attributes=preds.attributes)
    kw[name] = value
    return RegressionTargets(**kw)


def test_reg_perfect_prediction():
    rng = np.random.default_rng(1)
    _, gts = _reg_instance(rng)
    conf = 3.0
    bins = rotation_bin(gts.yaw)
    logits = np.where(np.arange(2)[None, :] == bins[:, None], conf, 0.0)
    res = gts.yaw[:, None] - np.array(BIN_CENTERS)[None, :]
    preds = RegressionTargets(gts.offset, gts.dims, gts.velocity, bin_logits=logits, bin_residuals=res,
                              attributes=np.clip(gts.attributes, 1e-4, 1 - 1e-4))
    out = reg_losses(preds, gts)
    assert out.components["off"] == 0 and out.components["dim"] == 0 and out.components["vel"] == 0
    ce = -(conf - math.log(math.exp(conf) + 1))
    assert out.components["rot"] == pytest.approx(ce - 1.0, abs=1e-12)


def test_reg_dim_mean():
    z = np.zeros((1, 3))
    gts = RegressionTargets(z, np.ones((1, 3)), np.zeros((1, 2)), yaw=[0.0])
    preds = RegressionTargets(z, np.ones((1, 3)) + [0.1, 0.2, 0.3], np.zeros((1, 2)),
                              bin_logits=[[0.0, 0.0]], bin_residuals=[[0.0, 0.0]])
    assert reg_losses(preds, gts).components["dim"] == pytest.approx(0.2, abs=1e-15)


def test_reg_errors():
    rng = np.random.default_rng(2)
    preds, gts = _reg_instance(rng)
    empty = RegressionTargets(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2)), yaw=np.zeros(0))
    with pytest.raises(EmptyBatch):
        reg_losses(preds, empty)
    with pytest.raises(ShapeMismatch):
        reg_losses(_reg_instance(rng, n=2)[0], gts)
    with pytest.raises(ValidationError):
        LossWeights(lambda_dim=-1)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_reg_components_match_direct_formulas(seed):
    rng = np.random.default_rng(seed)
    preds, gts = _reg_instance(rng, n=4, n_att=3)
    out = reg_losses(preds, gts)
    n = 4
    off = sum(abs(preds.offset[i, k] - gts.offset[i, k]) for i in range(n) for k in range(3)) / n
    dim = sum(abs(preds.dims[i, k] - gts.dims[i, k]) for i in range(n) for k in range(3)) / (3 * n)
    vel = sum(abs(preds.velocity[i, k] - gts.velocity[i, k]) for i in range(n) for k in range(2)) / (2 * n)
    rot = 0.0
    for i in range(n):
        b = 0 if abs(math.remainder(gts.yaw[i], 2 * math.pi)) <= math.pi / 2 else 1
        z = preds.bin_logits[i]
        ce = -(z[b] - math.log(math.exp(z[0]) + math.exp(z[1])))
        cos = sum(math.cos(gts.yaw[i] - c - preds.bin_residuals[i, k]) for k, c in enumerate(BIN_CENTERS)) / 2
        rot += (ce - cos) / n
    att = 0.0
    for i in range(n):
        for k in range(3):
            a, p = gts.attributes[i, k], preds.attributes[i, k]
            att += (1 / 3) * -(a * math.log(p) + (1 - a) * math.log(1 - p)) / (n * 3)
    for key, want in (("off", off), ("dim", dim), ("vel", vel), ("rot", rot), ("att", att)):
        assert out.components[key] == pytest.approx(want, abs=1e-12)
    assert out.total == pytest.approx(off + dim + vel + rot + att, abs=1e-12)


def test_reg_gradients_finite_difference():
    rng = np.random.default_rng(3)
    w = LossWeights(lambda_off=0.7, lambda_dim=1.3, lambda_vel=0.4, lambda_rot=2.0, lambda_att=0.5)
    for _ in range(20):
        preds, gts = _reg_instance(rng, n=3, n_att=2)
        out = reg_losses(preds, gts, w)
        for name, attr in (("offset", "offset"), ("dims", "dims"), ("velocity", "velocity"),
                           ("bin_logits", "bin_logits"), ("bin_residuals", "bin_residuals"),
                           ("attributes", "attributes")):
            x = getattr(preds, attr)
            num = central_difference(lambda v: reg_losses(_with(preds, attr, v), gts, w).total, x, 1e-5)
            assert relative_error(out.grads[name], num, 1e-6).max() < 1e-4, name


def test_total_loss():
    assert total_loss(0.7, 5.0, 0.0) == 0.7
    assert total_loss(0.5, 2.0, 0.25) == 1.0


# Rotation code and offsets


@settings(max_examples=100, deadline=None)
@given(st.floats(-math.pi, math.pi))
def test_rotation_round_trip(theta):
    code = encode_rotation(theta)
    assert code.shape == (8,) and code[3] == 0 and code[7] == 0
    assert abs(math.remainder(decode_rotation(code) - theta, 2 * math.pi)) < 1e-12


def test_offset_target():
    x, y = cell_to_world(SPEC, 3, 4)
    assert offset_target(SPEC, x, y) == (0.0, 0.0)
    dx, dy = offset_target(SPEC, x + 0.2, y - 0.1)
    assert dx == pytest.approx(0.4) and dy == pytest.approx(-0.2)


# Decoding


def test_local_maxima_strict():
    h = np.zeros((5, 5, 1))
    h[2, 2] = 1
    h[0, 0] = h[0, 1] = 0.5  # plateau: neither is a strict maximum
    m = local_maxima(h)
    assert m[2, 2, 0] and not m[0, 0, 0] and not m[0, 1, 0] and m.sum() == 1


def test_decode_zero_heatmap():
    assert decode_detections(BevGrid(SPEC.with_channels(10), np.zeros((20, 20, 10))), score_thresh=0.0) == []


def test_decode_single_bump():
    x, y = cell_to_world(SPEC, 7, 12)
    heat = gt_heatmap([box(x, y, "bus")], SPEC)
    heat = BevGrid(heat.spec, heat.data * 0.8)
    dets = decode_detections(heat, score_thresh=0.1)
    assert len(dets) == 1
    assert dets[0].class_name == "bus" and dets[0].center[:2] == (x, y) and dets[0].score == pytest.approx(0.8)


def test_decode_applies_regression():
    heat = np.zeros((20, 20, 10))
    heat[4, 6, 0] = 0.9
    reg = {k: np.zeros((20, 20, c)) for k, c in (("offset", 3), ("dims", 3), ("vel", 2), ("rot", 8), ("attr", 2))}
    reg["offset"][4, 6] = (0.4, -0.2, 1.1)
    reg["dims"][4, 6] = np.log([1.8, 4.5, 1.6])
    reg["vel"][4, 6] = (2.0, -1.0)
    reg["rot"][4, 6] = encode_rotation(2.5)
    reg["attr"][4, 6] = (0.2, 0.8)
    grids = {k: BevGrid.from_array(SPEC, v) for k, v in reg.items()}
    (d,) = decode_detections(BevGrid(SPEC.with_channels(10), heat), grids, 0.1, attributes=("a", "b"))
    x0, y0 = cell_to_world(SPEC, 4, 6)
    np.testing.assert_allclose(d.center, (x0 + 0.2, y0 - 0.1, 1.1), atol=1e-12)
    np.testing.assert_allclose(d.size, (1.8, 4.5, 1.6), atol=1e-12)
    assert d.yaw == pytest.approx(2.5) and d.velocity == (2.0, -1.0) and d.attribute == "b"


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 10))
def test_decode_sorted_capped_and_idempotent(seed, max_det):
    rng = np.random.default_rng(seed)
    heat = BevGrid(SPEC.with_channels(10), rng.uniform(size=(20, 20, 10)) ** 4)
    dets = decode_detections(heat, score_thresh=0.2, max_det=max_det)
    assert len(dets) <= max_det
    scores = [d.score for d in dets]
    assert scores == sorted(scores, reverse=True)
    again = decode_detections(rasterize_detections(dets, SPEC), score_thresh=0.2, max_det=max_det)
    key = lambda b: (b.class_name, b.center, b.score)  # noqa: E731
    assert sorted(map(key, again)) == sorted(map(key, dets))


def test_decode_shape_checks():
    with pytest.raises(ShapeMismatch):
        decode_detections(BevGrid(SPEC.with_channels(3), np.zeros((20, 20, 3))))
    bad = {"vel": BevGrid(SPEC.with_channels(3), np.zeros((20, 20, 3)))}
    with pytest.raises(ShapeMismatch):
        decode_detections(BevGrid(SPEC.with_channels(10), np.zeros((20, 20, 10))), bad)


def test_circle_nms():
    a = box(0, 0, score=0.9)
    b = box(0.5, 0, score=0.8)
    c = box(0.5, 0, "truck", score=0.7)
    d = box(3, 0, score=0.6)
    assert circle_nms([b, a, c, d], 1.0) == [a, c, d]
    assert circle_nms([a, b], {"car": 0.4}) == [a, b]
