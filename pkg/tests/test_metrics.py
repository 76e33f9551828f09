import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import box, seeds
from radbev.errors import SceneKeyMismatch
from radbev.metrics import (
    EvalConfig,
    average_precision,
    evaluate,
    match_detections,
    nds,
    scale_iou,
    tp_metrics,
    yaw_difference,
)
from radbev.oracles import oracle_ap, oracle_greedy_match, oracle_max_matching


def test_no_predictions():
    g = [box(0, 0), box(5, 0)]
    m = match_detections([], g, "car", 2.0)
    assert m.matches == [] and m.unmatched_gts == [0, 1]


def test_threshold_boundary():
    p, g = [box(0.3, 0)], [box(0, 0)]
    assert len(match_detections(p, g, "car", 0.5).matches) == 1
    assert match_detections(p, g, "car", 0.25).matches == []
    # strictly below d
    assert match_detections([box(0.5, 0)], g, "car", 0.5).matches == []


def test_greedy_takes_nearest_unmatched():
    g = [box(0, 0), box(1, 0)]
    p = [box(0.9, 0, score=0.5), box(0.1, 0, score=0.9)]
    m = match_detections(p, g, "car", 2.0)
    assert [(i, j) for i, j, _ in m.matches] == [(1, 0), (0, 1)]


def test_class_mismatch_never_matches():
    assert match_detections([box(0, 0, "truck")], [box(0, 0, "car")], "car", 2.0).matches == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.7, 1.6, 3.0]), st.sampled_from(["car", "bus"]),
                          st.sampled_from([0.2, 0.5, 0.9])), max_size=4),
       st.lists(st.tuples(st.sampled_from([0.0, 1.6, 3.0]), st.sampled_from(["car", "bus"])), max_size=3),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_greedy_equals_oracle(pred_spec, gt_spec, d):
    preds = [box(x, 0, c, s) for x, c, s in pred_spec]
    gts = [box(x, 0, c) for x, c in gt_spec]
    for cls in ("car", "bus"):
        got = [(i, j) for i, j, _ in match_detections(preds, gts, cls, d).matches]
        assert got == oracle_greedy_match(preds, gts, cls, d)
        assert len(got) <= oracle_max_matching(preds, gts, cls, d)


def test_ap_examples():
    assert average_precision([box(0, 0)], [box(0, 0)], "car", 0.5) == 1.0
    assert average_precision([box(9, 0)], [box(0, 0)], "car", 0.5) == 0.0
    assert average_precision([], [box(0, 0)], "car", 0.5) == 0.0
    assert math.isnan(average_precision([box(0, 0)], [], "car", 0.5))


def test_ap_mixed_case_matches_oracle():
    preds = [box(0.1, 0, score=0.9), box(5, 0, score=0.8), box(10.2, 0, score=0.3)]
    gts = [box(0, 0), box(10, 0)]
    got = average_precision(preds, gts, "car", 1.0)
    assert abs(got - oracle_ap(preds, gts, "car", 1.0)) < 1e-12
    # hand check: recall 0.5 at precision 1, then (0.5, 0.5), then (1.0, 2/3)
    assert 0 < got < 1


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(0, 8), st.integers(1, 6))
def test_ap_matches_oracle_random(seed, n_pred, n_gt):
    rng = np.random.default_rng(seed)
    gts = [box(*rng.uniform(0, 6, 2), rng.choice(["car", "bus"])) for _ in range(n_gt)]
    preds = [box(*rng.uniform(0, 6, 2), rng.choice(["car", "bus"]), float(rng.uniform())) for _ in range(n_pred)]
    for cls in ("car", "bus"):
        a, b = average_precision(preds, gts, cls, 2.0), oracle_ap(preds, gts, cls, 2.0)
        assert (math.isnan(a) and math.isnan(b)) or abs(a - b) < 1e-12


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_ap_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    gts = [box(*rng.uniform(0, 6, 2)) for _ in range(4)]
    preds = [box(*rng.uniform(0, 6, 2), score=float(rng.uniform())) for _ in range(6)]
    aps = [average_precision(preds, gts, "car", d) for d in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(aps, aps[1:]))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_duplicates_never_help(seed):
    # GTs further than 2d apart, so no prediction can reach two of them
    rng = np.random.default_rng(seed)
    gts = [box(6.0 * k + rng.uniform(-0.5, 0.5), rng.uniform(0, 6)) for k in range(3)]
    preds = [box(rng.uniform(0, 14), rng.uniform(0, 6), score=float(rng.uniform(0.1, 1))) for _ in range(4)]
    dup = box(*preds[0].center[:2], score=preds[0].score)
    assert average_precision(preds + [dup], gts, "car", 2.0) <= average_precision(preds, gts, "car", 2.0) + 1e-15


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_ap_rank_invariant(seed):
    rng = np.random.default_rng(seed)
    gts = [box(*rng.uniform(0, 6, 2)) for _ in range(3)]
    preds = [box(*rng.uniform(0, 6, 2), score=float(rng.uniform(0.01, 1))) for _ in range(5)]
    squashed = [box(*p.center[:2], score=p.score**3) for p in preds]
    assert average_precision(preds, gts, "car", 2.0) == average_precision(squashed, gts, "car", 2.0)


# TP metrics


def test_tp_identical():
    b = box(1, 2, yaw=0.3, velocity=(1, 1), attribute="moving")
    assert tp_metrics([(b, b)]) == {"ATE": 0, "ASE": 0, "AOE": 0, "AVE": 0, "AAE": 0}


def test_tp_examples():
    p = box(0.3, 0.4, velocity=(0.3, 0.4), yaw=math.pi - 0.05)
    g = box(0, 0, yaw=-math.pi + 0.05)
    out = tp_metrics([(p, g)])
    assert out["ATE"] == pytest.approx(0.5) and out["AVE"] == pytest.approx(0.5)
    assert out["AOE"] == pytest.approx(0.1, abs=1e-12)


def test_tp_scale_and_attribute():
    a = box(0, 0, size=(1, 2, 3), attribute="x")
    b = box(0, 0, size=(2, 2, 3), attribute="y")
    assert scale_iou(a, b) == pytest.approx(0.5)
    out = tp_metrics([(a, b)])
    assert out["ASE"] == pytest.approx(0.5) and out["AAE"] == 1.0


def test_tp_no_pairs_and_not_applicable():
    assert tp_metrics([]) == {k: 1.0 for k in ("ATE", "ASE", "AOE", "AVE", "AAE")}
    out = tp_metrics([(box(0, 0, "traffic_cone"), box(0, 0, "traffic_cone"))], "traffic_cone")
    assert out["ATE"] == 0 and math.isnan(out["AOE"]) and math.isnan(out["AVE"])


def test_barrier_yaw_half_period():
    assert yaw_difference(0.1, math.pi + 0.1, math.pi) == pytest.approx(0.0, abs=1e-12)
    out = tp_metrics([(box(0, 0, "barrier", yaw=0.0), box(0, 0, "barrier", yaw=math.pi))], "barrier")
    assert out["AOE"] == pytest.approx(0.0, abs=1e-12)


# NDS and reports


@pytest.mark.parametrize("row, expected", [
    ((0.377, 0.534, 0.271, 0.558, 0.493, 0.209), 0.482),
    ((0.308, 0.665, 0.273, 0.533, 0.829, 0.205), 0.403),
    ((0.332, 0.649, 0.263, 0.535, 0.540, 0.142), 0.453),
])
def test_nds_reported_rows(row, expected):
    exact = nds(Fraction(str(row[0])), [Fraction(str(v)) for v in row[1:]])
    assert abs(exact - Fraction(str(expected))) <= Fraction("0.0005")
    assert abs(nds(row[0], row[1:]) - float(exact)) < 1e-15


def test_nds_clamps_errors():
    assert nds(0.5, [1.0, 2.0, 5.0, 1.0, 3.0]) == 0.25
    with pytest.raises(ValueError):
        nds(0.5, [0.1, 0.2])


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.lists(st.floats(0, 3), min_size=5, max_size=5), st.floats(0, 0.5), st.integers(0, 4))
def test_nds_monotone(m, tps, delta, k):
    base = nds(m, tps)
    assert nds(min(m + delta, 1.0), tps) >= base
    worse = list(tps)
    worse[k] += delta
    assert nds(m, worse) <= base


def test_evaluate_empty_predictions():
    gts = {"s": [box(0, 0), box(5, 5, "bus")]}
    rep = evaluate({"s": []}, gts)
    assert rep["mAP"] == 0 and rep["NDS"] == 0
    assert all(v == 1.0 for v in rep["mTP"].values())
    assert rep["per_class"]["truck"]["ap"]["2.0"] is None


def test_evaluate_perfect():
    gts = {"a": [box(0, 0, velocity=(1, 0), attribute="m")], "b": [box(3, 3, "bus", attribute="s")]}
    rep = evaluate(gts, gts)
    assert rep["mAP"] == 1.0 and rep["NDS"] == 1.0
    assert set(rep) == {"mAP", "NDS", "mTP", "per_class"}


def test_evaluate_key_mismatch():
    with pytest.raises(SceneKeyMismatch):
        evaluate({"a": []}, {"b": []})


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(dist_thresholds=(2.0, 1.0))
    with pytest.raises(ValueError):
        EvalConfig(dist_thresholds=())
