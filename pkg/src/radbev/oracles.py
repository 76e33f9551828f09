"""Slow reference implementations used to check the library in tests.

Nothing here imports the operations it checks. Every function is a direct
loop over its definition with no vectorization or shortcuts; grid extents
are passed as plain ``(x_min, x_max, y_min, y_max, cell_size)`` tuples.
Boxes only need ``center``, ``class_name`` and ``score`` attributes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _grid_shape(extent) -> tuple[int, int]:
    x_min, x_max, y_min, y_max, cell = extent
    return int(round((x_max - x_min) / cell)), int(round((y_max - y_min) / cell))


def _cell(extent, x: float, y: float):
    """(row, col) of the half-open cell holding (x, y), or None outside."""
    x_min, x_max, y_min, y_max, cell = extent
    if not (x_min <= x < x_max and y_min <= y < y_max):
        return None
    rows, cols = _grid_shape(extent)
    return min(int(math.floor((x - x_min) / cell)), rows - 1), min(int(math.floor((y - y_min) / cell)), cols - 1)


def _planar(a, b) -> float:
    return math.sqrt((a.center[0] - b.center[0]) ** 2 + (a.center[1] - b.center[1]) ** 2)


# Matching and AP


def oracle_greedy_match(preds, gts, class_name: str, d: float) -> list[tuple[int, int]]:
    """Greedy matching exactly as documented.

    Predictions of the class in descending score (ties: input order) each
    take the closest unmatched same-class GT (ties: lower index) whose
    center distance is strictly below ``d``.
    """
    cand = [i for i in range(len(preds)) if preds[i].class_name == class_name]
    # insertion sort keeps equal scores in input order
    order: list[int] = []
    for i in cand:
        k = len(order)
        while k > 0 and preds[order[k - 1]].score < preds[i].score:
            k -= 1
        order.insert(k, i)
    used = [False] * len(gts)
    out = []
    for i in order:
        best = -1
        for j in range(len(gts)):
            if used[j] or gts[j].class_name != class_name:
                continue
            if best < 0 or _planar(preds[i], gts[j]) < _planar(preds[i], gts[best]):
                best = j
        if best >= 0 and _planar(preds[i], gts[best]) < d:
            used[best] = True
            out.append((i, best))
    return out


def oracle_max_matching(preds, gts, class_name: str, d: float) -> int:
    """Largest number of one-to-one (pred, GT) pairs closer than ``d``, by brute force."""
    p = [x for x in preds if x.class_name == class_name]
    g = [x for x in gts if x.class_name == class_name]
    best = 0
    for k in range(min(len(p), len(g)), 0, -1):
        for ps in itertools.combinations(range(len(p)), k):
            for gs in itertools.permutations(range(len(g)), k):
                if all(_planar(p[a], g[b]) < d for a, b in zip(ps, gs)):
                    return k
    return best


def _interp_at(r: float, rec: list[float], prec: list[float]) -> float:
    """Piecewise-linear precision at recall ``r``; 0 beyond the last recall."""
    if r < rec[0]:
        return prec[0]
    if r > rec[-1]:
        return 0.0
    j = 0
    for k in range(len(rec)):
        if rec[k] <= r:
            j = k
    if rec[j] == r or j == len(rec) - 1:
        return prec[j]
    t = (prec[j + 1] - prec[j]) / (rec[j + 1] - rec[j])
    return t * (r - rec[j]) + prec[j]


def oracle_ap(preds, gts, class_name: str, d: float, min_recall: float = 0.1, min_precision: float = 0.1) -> float:
    """AP by explicit enumeration of score cutoffs.

    For every cutoff k the top-k predictions give one (recall, precision)
    point; precision is sampled on the 101-point recall grid, points below
    ``min_recall`` are dropped, ``min_precision`` is subtracted and floored
    at zero, and the mean is rescaled by ``1 / (1 - min_precision)``.
    """
    npos = sum(1 for g in gts if g.class_name == class_name)
    if npos == 0:
        return float("nan")
    matched = {i for i, _ in oracle_greedy_match(preds, gts, class_name, d)}
    mine = [i for i in range(len(preds)) if preds[i].class_name == class_name]
    ranked = sorted(mine, key=lambda i: (-preds[i].score, i))
    if not ranked:
        return 0.0
    rec, prec = [], []
    tp = 0
    for k, i in enumerate(ranked, start=1):
        tp += i in matched
        rec.append(tp / npos)
        prec.append(tp / k)
    first = int(round(100 * min_recall)) + 1
    total = 0.0
    for idx in range(first, 101):
        total += max(_interp_at(idx / 100.0, rec, prec) - min_precision, 0.0)
    return total / (101 - first) / (1.0 - min_precision)


# Grids


def oracle_conv(data: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded, stride-1 cross-correlation by explicit loops."""
    rows, cols, c_in = data.shape
    kh, kw, _, c_out = weights.shape
    out = np.zeros((rows, cols, c_out))
    for i in range(rows):
        for j in range(cols):
            for o in range(c_out):
                acc = bias[o]
                for a in range(kh):
                    for b in range(kw):
                        si, sj = i + a - kh // 2, j + b - kw // 2
                        if 0 <= si < rows and 0 <= sj < cols:
                            for c in range(c_in):
                                acc += data[si, sj, c] * weights[a, b, c, o]
                out[i, j, o] = acc
    return out


def oracle_scatter(features: np.ndarray, ray_points: np.ndarray, extent) -> np.ndarray:
    """Sum each frustum element's feature vector into the cell under its point."""
    rows, cols = _grid_shape(extent)
    n_ch = features.shape[-1]
    out = np.zeros((rows, cols, n_ch))
    f = features.reshape(-1, n_ch)
    p = ray_points.reshape(-1, 3)
    for k in range(len(p)):
        rc = _cell(extent, p[k, 0], p[k, 1])
        if rc is not None:
            for c in range(n_ch):
                out[rc[0], rc[1], c] += f[k, c]
    return out


def oracle_voxelize(points: np.ndarray, extent) -> np.ndarray:
    """Per-cell mean of columns (0, 1, 2, 3, 4) and the point count."""
    rows, cols = _grid_shape(extent)
    sums: dict[tuple[int, int], list[float]] = {}
    counts: dict[tuple[int, int], int] = {}
    for p in points:
        rc = _cell(extent, p[0], p[1])
        if rc is None:
            continue
        acc = sums.setdefault(rc, [0.0] * 5)
        for c in range(5):
            acc[c] += p[c]
        counts[rc] = counts.get(rc, 0) + 1
    out = np.zeros((rows, cols, 6))
    for rc, acc in sums.items():
        for c in range(5):
            out[rc[0], rc[1], c] = acc[c] / counts[rc]
        out[rc[0], rc[1], 5] = counts[rc]
    return out


# spread columns for the six heatmap channels: x_rms, y_rms, vx_rms, vy_rms, rcs, false_alarm
_SPREAD = (8, 9, 10, 11, 4, 7)


def oracle_gaussian(points: np.ndarray, extent, tau: float) -> np.ndarray:
    """Six-channel truncated Gaussian heatmap, every cell against every point."""
    x_min, _, y_min, _, cell = extent
    rows, cols = _grid_shape(extent)
    out = np.zeros((rows, cols, 6))
    for p in points:
        for ch, col in enumerate(_SPREAD):
            s = max(p[col], tau)
            for i in range(rows):
                dx = x_min + (i + 0.5) * cell - p[0]
                if abs(dx) > 3.0 * s:
                    continue
                for j in range(cols):
                    dy = y_min + (j + 0.5) * cell - p[1]
                    if abs(dy) > 3.0 * s:
                        continue
                    v = math.exp(-(dx * dx + dy * dy) / (2.0 * s)) / (2.0 * math.pi * s)
                    if v > out[i, j, ch]:
                        out[i, j, ch] = v
    return out


def oracle_gt_heatmap(centers, sigmas, channels, extent, n_channels: int) -> np.ndarray:
    """Dense max-combined Gaussians of height 1 on each center's cell."""
    rows, cols = _grid_shape(extent)
    out = np.zeros((rows, cols, n_channels))
    for (x, y), s, ch in zip(centers, sigmas, channels):
        rc = _cell(extent, x, y)
        if rc is None:
            continue
        for i in range(rows):
            for j in range(cols):
                v = math.exp(-((i - rc[0]) ** 2 + (j - rc[1]) ** 2) / (2.0 * s * s))
                out[i, j, ch] = max(out[i, j, ch], v)
    return out


# Derivatives


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``f`` at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2.0 * h)
    return g


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
