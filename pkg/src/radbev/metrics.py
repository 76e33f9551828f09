"""Center-distance detection metrics: AP, true-positive errors, mAP and NDS.

Follows the nuScenes detection protocol where the protocol is fixed
(distance thresholds, precision/recall clipping at 0.1, 101-point recall
grid, TP errors at the 2 m threshold) with two simplifications: TP errors
are plain means over matched pairs, and no range/visibility filtering is
applied to ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .boxes import CLASSES, Box3D
from .errors import SceneKeyMismatch

TP_NAMES = ("ATE", "ASE", "AOE", "AVE", "AAE")
MTP_KEYS = tuple("m" + n for n in TP_NAMES)

# TP errors that the nuScenes protocol leaves undefined for a class.
NOT_APPLICABLE = {
    "traffic_cone": frozenset({"AOE", "AVE", "AAE"}),
    "barrier": frozenset({"AVE", "AAE"}),
}
# Classes whose heading is only defined modulo pi.
HALF_PERIOD_YAW = frozenset({"barrier"})
RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class EvalConfig:
    dist_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    classes: tuple[str, ...] = CLASSES
    tp_threshold: float = 2.0
    min_recall: float = 0.1
    min_precision: float = 0.1
    not_applicable: Mapping[str, frozenset] = field(default_factory=lambda: dict(NOT_APPLICABLE))

    def __post_init__(self):
        th = tuple(float(d) for d in self.dist_thresholds)
        if not th or any(d <= 0 for d in th) or list(th) != sorted(th):
            raise ValueError("distance thresholds must be positive and sorted")
        object.__setattr__(self, "dist_thresholds", th)
        object.__setattr__(self, "classes", tuple(self.classes))


@dataclass
class Matching:
    """Greedy matching result; indices refer to the input lists."""

    matches: list[tuple[int, int, float]]
    unmatched_preds: list[int]
    unmatched_gts: list[int]


def center_distance(a: Box3D, b: Box3D) -> float:
    return float(np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]))


def score_order(boxes: Sequence[Box3D]) -> list[int]:
    """Indices by descending score; ties keep input order."""
    return sorted(range(len(boxes)), key=lambda i: -boxes[i].score)


def match_detections(preds: Sequence[Box3D], gts: Sequence[Box3D], class_name: str, d: float) -> Matching:
    """Greedy center-distance matching within one sample.

    Predictions of ``class_name`` are visited by descending score; each takes
    the nearest still-unmatched ground truth of the same class if that
    distance is strictly below ``d``.
    """
    gt_idx = [j for j, g in enumerate(gts) if g.class_name == class_name]
    pred_idx = [i for i, p in enumerate(preds) if p.class_name == class_name]
    pred_idx = [pred_idx[k] for k in score_order([preds[i] for i in pred_idx])]
    taken: set[int] = set()
    matches, unmatched = [], []
    for i in pred_idx:
        best, best_d = None, np.inf
        for j in gt_idx:
            if j in taken:
                continue
            dist = center_distance(preds[i], gts[j])
            if dist < best_d:
                best, best_d = j, dist
        if best is not None and best_d < d:
            taken.add(best)
            matches.append((i, best, best_d))
        else:
            unmatched.append(i)
    return Matching(matches, unmatched, [j for j in gt_idx if j not in taken])


def _as_scenes(boxes) -> dict:
    return dict(boxes) if isinstance(boxes, Mapping) else {"": list(boxes)}


def accumulate(preds, gts, class_name: str, d: float):
    """Score-ordered TP flags over all samples.

    Returns:
        (tp flags array, number of GT boxes, list of matched (pred, gt) pairs
        in score order).
    """
    preds, gts = _as_scenes(preds), _as_scenes(gts)
    npos = sum(1 for key in gts for g in gts[key] if g.class_name == class_name)
    flat = [(key, i, p) for key in sorted(preds) for i, p in enumerate(preds[key]) if p.class_name == class_name]
    flat.sort(key=lambda e: -e[2].score)
    taken: set[tuple] = set()
    flags, pairs = [], []
    for key, _, p in flat:
        best, best_d = None, np.inf
        for j, g in enumerate(gts.get(key, ())):
            if g.class_name != class_name or (key, j) in taken:
                continue
            dist = center_distance(p, g)
            if dist < best_d:
                best, best_d = j, dist
        if best is not None and best_d < d:
            taken.add((key, best))
            flags.append(True)
            pairs.append((p, gts[key][best]))
        else:
            flags.append(False)
    return np.array(flags, dtype=bool), npos, pairs


def ap_from_flags(flags: np.ndarray, npos: int, min_recall: float = 0.1, min_precision: float = 0.1) -> float:
    """Area under the 101-point interpolated precision/recall curve, clipped."""
    if npos == 0:
        return float("nan")
    if len(flags) == 0:
        return 0.0
    tp = np.cumsum(flags, dtype=np.float64)
    fp = np.cumsum(~flags, dtype=np.float64)
    prec = tp / (tp + fp)
    rec = tp / float(npos)
    prec = np.interp(RECALL_GRID, rec, prec, right=0.0)
    prec = prec[round(100 * min_recall) + 1 :] - min_precision
    prec[prec < 0] = 0.0
    return min(float(np.mean(prec)) / (1.0 - min_precision), 1.0)


def average_precision(preds, gts, class_name: str, d: float, min_recall: float = 0.1,
                      min_precision: float = 0.1) -> float:
    """AP of one class at one distance threshold; NaN when the class has no GT.

    ``preds``/``gts`` are box lists for a single sample or dicts keyed by sample.
    """
    flags, npos, _ = accumulate(preds, gts, class_name, d)
    return ap_from_flags(flags, npos, min_recall, min_precision)


def yaw_difference(a: float, b: float, period: float = 2 * np.pi) -> float:
    """Smallest absolute heading difference, in [0, pi]."""
    diff = (a - b + period / 2) % period - period / 2
    if diff > np.pi:
        diff -= 2 * np.pi
    return float(abs(diff))


def scale_iou(a: Box3D, b: Box3D) -> float:
    """IoU of the two boxes after aligning centers and headings."""
    inter = float(np.prod(np.minimum(a.size, b.size)))
    return inter / (float(np.prod(a.size)) + float(np.prod(b.size)) - inter)


def tp_metrics(pairs: Sequence[tuple[Box3D, Box3D]], class_name: str = "car",
               not_applicable: Mapping[str, frozenset] = NOT_APPLICABLE) -> dict[str, float]:
    """Mean TP errors over (prediction, ground truth) pairs.

    Errors undefined for the class are NaN; with no pairs every defined
    error is 1.0.
    """
    skip = not_applicable.get(class_name, frozenset())
    period = np.pi if class_name in HALF_PERIOD_YAW else 2 * np.pi
    if not pairs:
        out = {k: 1.0 for k in TP_NAMES}
    else:
        out = {
            "ATE": float(np.mean([center_distance(p, g) for p, g in pairs])),
            "ASE": float(np.mean([1.0 - scale_iou(p, g) for p, g in pairs])),
            "AOE": float(np.mean([yaw_difference(p.yaw, g.yaw, period) for p, g in pairs])),
            "AVE": float(np.mean([np.hypot(p.velocity[0] - g.velocity[0], p.velocity[1] - g.velocity[1])
                                  for p, g in pairs])),
            "AAE": float(np.mean([0.0 if p.attribute == g.attribute else 1.0 for p, g in pairs])),
        }
    for k in skip:
        out[k] = float("nan")
    return out


def nds(map_: float, mtp) -> float:
    """Detection score from mAP and the five mean TP errors (dict or sequence)."""
    vals = [mtp[k] for k in MTP_KEYS] if isinstance(mtp, Mapping) else list(mtp)
    if len(vals) != 5:
        raise ValueError("need exactly five mean TP errors")
    # integer constants keep exact (Fraction/Decimal) inputs exact
    return (5 * map_ + sum(1 - min(1, v) for v in vals)) / 10


def _finite_or_none(v: float):
    return None if v is None or not np.isfinite(v) else float(v)


def evaluate(preds: Mapping[str, Sequence[Box3D]], gts: Mapping[str, Sequence[Box3D]],
             cfg: EvalConfig = EvalConfig()) -> dict:
    """Full report: per-class AP per threshold and TP errors, mAP, mTPs, NDS.

    Classes without ground truth appear with null entries and are left out
    of every average.
    """
    if set(preds) != set(gts):
        raise SceneKeyMismatch(f"prediction samples {sorted(set(preds) ^ set(gts))} do not align with ground truth")
    per_class, aps, tps = {}, [], {k: [] for k in TP_NAMES}
    for cls in cfg.classes:
        ap = {}
        npos = 0
        for d in cfg.dist_thresholds:
            flags, npos, _ = accumulate(preds, gts, cls, d)
            ap[d] = ap_from_flags(flags, npos, cfg.min_recall, cfg.min_precision)
        _, _, pairs = accumulate(preds, gts, cls, cfg.tp_threshold)
        tp = tp_metrics(pairs, cls, cfg.not_applicable)
        if npos == 0:
            tp = {k: float("nan") for k in TP_NAMES}
        else:
            aps.append(float(np.mean(list(ap.values()))))
            for k in TP_NAMES:
                if np.isfinite(tp[k]):
                    tps[k].append(tp[k])
        per_class[cls] = {
            "ap": {str(d): _finite_or_none(v) for d, v in ap.items()},
            "tp": {k: _finite_or_none(tp[k]) for k in TP_NAMES},
        }
    map_ = float(np.mean(aps)) if aps else 0.0
    mtp = {"m" + k: (float(np.mean(v)) if v else 1.0) for k, v in tps.items()}
    return {"mAP": map_, "NDS": nds(map_, mtp), "mTP": mtp, "per_class": per_class}
