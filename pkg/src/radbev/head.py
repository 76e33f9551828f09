"""Detection losses with analytic gradients and center-heatmap decoding.

Regression conventions shared by targets and decoding:

* offset: (dx, dy) in output cells relative to the center cell's center,
  plus absolute z in meters;
* dims: (w, l, h) in meters; the ``dims`` regression grid stores their logs;
* rotation: two bins centered at 0 and pi, eight scalars per object laid out
  as ``[logit, sin(res), cos(res), unused]`` for each bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .bev import BevGrid, GridSpec, cell_to_world, cells_of
from .boxes import CLASSES, Box3D
from .errors import EmptyBatch, ShapeMismatch, ValidationError
from .geometry import wrap_angle

EPS = 1e-4
POSITIVE_THRESHOLD = 0.99
BIN_CENTERS = (0.0, np.pi)


@dataclass(frozen=True)
class LossWeights:
    beta: float = 0.25
    lambda_off: float = 1.0
    lambda_dim: float = 1.0
    lambda_vel: float = 1.0
    lambda_rot: float = 1.0
    lambda_att: float = 1.0
    alpha: float = 2.0
    gamma: float = 4.0
    attribute_weights: tuple[float, ...] | None = None  # default 1/N_A each

    def __post_init__(self):
        vals = [self.beta, self.lambda_off, self.lambda_dim, self.lambda_vel, self.lambda_rot, self.lambda_att]
        if any(v < 0 for v in vals) or self.alpha < 0 or self.gamma < 0:
            raise ValidationError("loss weights must be nonnegative")

    def att_weights(self, n_att: int) -> np.ndarray:
        if self.attribute_weights is None:
            return np.full(n_att, 1.0 / max(n_att, 1))
        w = np.asarray(self.attribute_weights, dtype=np.float64)
        if w.shape != (n_att,):
            raise ShapeMismatch(f"{len(w)} attribute weights for {n_att} attributes")
        return w


def _unwrap(x):
    return (x.data, x) if isinstance(x, BevGrid) else (np.asarray(x, dtype=np.float64), None)


def focal_loss(pred, gt, alpha: float = 2.0, gamma: float = 4.0, variant: str = "paper", eps: float = EPS):
    """Penalty-reduced focal loss over a class heatmap.

    ``variant="paper"`` weights every cell's positive term by the target
    value G and the negative term by ``1 - G**gamma``, with ``alpha`` on both
    modulating factors. ``variant="cornernet"`` is the usual form: positive
    term only on center cells, negative term weighted by ``(1 - G)**gamma``.
    Both normalize by the number of cells with ``G >= 0.99`` (at least 1).

    Returns:
        (value, grad) where grad has the type and shape of ``pred``.
    """
    p_raw, p_grid = _unwrap(pred)
    g, _ = _unwrap(gt)
    if p_raw.shape != g.shape:
        raise ShapeMismatch(f"pred {p_raw.shape} vs gt {g.shape}")
    p = np.clip(p_raw, eps, 1.0 - eps)
    n = max(int(np.count_nonzero(g >= POSITIVE_THRESHOLD)), 1)
    logp, log1p = np.log(p), np.log1p(-p)
    q = 1.0 - p
    if variant == "paper":
        w_pos = g
        w_neg = 1.0 - g**gamma
    elif variant == "cornernet":
        pos = g >= POSITIVE_THRESHOLD
        w_pos = pos.astype(np.float64)
        w_neg = np.where(pos, 0.0, (1.0 - g) ** gamma)
    else:
        raise ValidationError(f"unknown focal loss variant {variant!r}")
    term = w_pos * logp * q**alpha + w_neg * log1p * p**alpha
    value = float(-term.sum() / n)
    d_pos = q**alpha / p - alpha * q ** (alpha - 1.0) * logp
    d_neg = alpha * p ** (alpha - 1.0) * log1p - p**alpha / q
    grad = -(w_pos * d_pos + w_neg * d_neg) / n
    grad = np.where((p_raw >= eps) & (p_raw <= 1.0 - eps), grad, 0.0)
    if p_grid is not None:
        grad = BevGrid(p_grid.spec, grad)
    return value, grad


@dataclass(frozen=True, eq=False)
class RegressionTargets:
    """Per-object regression quantities, one row per matched object.

    Ground truth fills ``yaw`` and binary ``attributes``; predictions fill
    ``bin_logits``, ``bin_residuals`` and attribute probabilities.
    """

    offset: np.ndarray
    dims: np.ndarray
    velocity: np.ndarray
    yaw: np.ndarray | None = None
    bin_logits: np.ndarray | None = None
    bin_residuals: np.ndarray | None = None
    attributes: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        for name in ("offset", "dims", "velocity", "yaw", "bin_logits", "bin_residuals", "attributes"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=np.float64))
        n = len(self.offset)
        if self.attributes.size == 0:
            object.__setattr__(self, "attributes", np.zeros((n, 0)))
        if self.offset.shape != (n, 3) or self.dims.shape != (n, 3) or self.velocity.shape != (n, 2):
            raise ShapeMismatch("offset/dims need (N, 3), velocity (N, 2)")

    def __len__(self):
        return len(self.offset)


@dataclass
class RegLoss:
    components: dict[str, float]
    total: float
    grads: dict[str, np.ndarray]


def rotation_bin(theta, centers: Sequence[float] = BIN_CENTERS) -> np.ndarray:
    """Index of the bin whose center is angularly closest to each theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    d = np.abs(wrap_angle(theta[:, None] - np.asarray(centers)[None, :]))
    return np.argmin(d, axis=1)


def reg_losses(preds: RegressionTargets, gts: RegressionTargets, w: LossWeights = LossWeights(),
               bin_centers: Sequence[float] = BIN_CENTERS, eps: float = EPS) -> RegLoss:
    """Offset/dimension/velocity L1, multi-bin rotation and attribute BCE losses.

    Returns component values, the weighted sum, and gradients of that sum
    w.r.t. the predicted offset, dims, velocity, bin logits, bin residuals
    and attribute probabilities. L1 kinks get subgradient 0.
    """
    n = len(gts)
    if n == 0:
        raise EmptyBatch("regression losses need at least one matched object")
    if len(preds) != n:
        raise ShapeMismatch(f"{len(preds)} predictions for {n} targets")
    if gts.yaw is None or preds.bin_logits is None or preds.bin_residuals is None:
        raise ValidationError("targets need yaw; predictions need bin logits and residuals")
    centers = np.asarray(bin_centers, dtype=np.float64)
    n_bins = len(centers)
    if preds.bin_logits.shape != (n, n_bins) or preds.bin_residuals.shape != (n, n_bins):
        raise ShapeMismatch(f"rotation predictions need shape ({n}, {n_bins})")

    d_off = preds.offset - gts.offset
    d_dim = preds.dims - gts.dims
    d_vel = preds.velocity - gts.velocity
    l_off = float(np.abs(d_off).sum() / n)
    l_dim = float(np.abs(d_dim).mean())
    l_vel = float(np.abs(d_vel).mean())

    target_bin = rotation_bin(gts.yaw, centers)
    logp = log_softmax(preds.bin_logits, axis=1)
    ce = -logp[np.arange(n), target_bin]
    ang = gts.yaw[:, None] - centers[None, :] - preds.bin_residuals
    l_rot = float((ce - np.cos(ang).mean(axis=1)).mean())

    n_att = gts.attributes.shape[1]
    if n_att:
        if preds.attributes.shape != gts.attributes.shape:
            raise ShapeMismatch("attribute predictions and labels differ in shape")
        a_hat = np.clip(preds.attributes, eps, 1.0 - eps)
        a = gts.attributes
        wi = w.att_weights(n_att)
        bce = -(a * np.log(a_hat) + (1.0 - a) * np.log1p(-a_hat))
        l_att = float((bce * wi).sum() / (n * n_att))
        g_att = wi * (-a / a_hat + (1.0 - a) / (1.0 - a_hat)) / (n * n_att)
        g_att = np.where((preds.attributes >= eps) & (preds.attributes <= 1.0 - eps), g_att, 0.0)
    else:
        l_att = 0.0
        g_att = np.zeros_like(gts.attributes)

    onehot = np.zeros((n, n_bins))
    onehot[np.arange(n), target_bin] = 1.0
    grads = {
        "offset": w.lambda_off * np.sign(d_off) / n,
        "dims": w.lambda_dim * np.sign(d_dim) / d_dim.size,
        "velocity": w.lambda_vel * np.sign(d_vel) / d_vel.size,
        "bin_logits": w.lambda_rot * (softmax(preds.bin_logits, axis=1) - onehot) / n,
        "bin_residuals": -w.lambda_rot * np.sin(ang) / (n_bins * n),
        "attributes": w.lambda_att * g_att,
    }
    comps = {"off": l_off, "dim": l_dim, "vel": l_vel, "rot": l_rot, "att": l_att}
    total = (w.lambda_off * l_off + w.lambda_dim * l_dim + w.lambda_vel * l_vel
             + w.lambda_rot * l_rot + w.lambda_att * l_att)
    return RegLoss(comps, float(total), grads)


def total_loss(cls: float, reg: float, beta: float) -> float:
    return beta * reg + cls


def offset_target(spec: GridSpec, x: float, y: float) -> tuple[float, float]:
    """Sub-cell offset of (x, y) from its cell's center, in cells."""
    fx = (x - spec.x_min) / spec.cell_size
    fy = (y - spec.y_min) / spec.cell_size
    return fx - (np.floor(fx) + 0.5), fy - (np.floor(fy) + 0.5)


def encode_rotation(theta: float, centers: Sequence[float] = BIN_CENTERS, confidence: float = 5.0) -> np.ndarray:
    """Eight-scalar rotation code with the correct bin's logit set to ``confidence``."""
    out = np.zeros(4 * len(centers))
    b = int(rotation_bin(theta, centers)[0])
    for i, c in enumerate(centers):
        res = wrap_angle(theta - c)
        out[4 * i : 4 * i + 3] = (confidence if i == b else 0.0, np.sin(res), np.cos(res))
    return out


def decode_rotation(code, centers: Sequence[float] = BIN_CENTERS) -> float:
    code = np.asarray(code, dtype=np.float64).reshape(len(centers), 4)
    b = int(np.argmax(code[:, 0]))
    return wrap_angle(centers[b] + np.arctan2(code[b, 1], code[b, 2]))


def local_maxima(heat: np.ndarray) -> np.ndarray:
    """Mask of cells strictly greater than all 8 neighbours, per channel."""
    padded = np.pad(heat, ((1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    rows, cols = heat.shape[:2]
    mask = np.ones(heat.shape, dtype=bool)
    for di in range(3):
        for dj in range(3):
            if di == 1 and dj == 1:
                continue
            mask &= heat > padded[di : di + rows, dj : dj + cols]
    return mask


def decode_detections(
    heat: BevGrid,
    reg_grids: Mapping[str, BevGrid] | None = None,
    score_thresh: float = 0.1,
    max_det: int = 100,
    classes: Sequence[str] = CLASSES,
    attributes: Sequence[str] = (),
    bin_centers: Sequence[float] = BIN_CENTERS,
) -> list[Box3D]:
    """Peaks of the class heatmap turned into boxes, highest score first.

    ``reg_grids`` may hold ``offset`` (3), ``dims`` (3, log meters),
    ``vel`` (2), ``rot`` (8) and ``attr`` (len(attributes)) channel grids;
    missing ones decode as zeros.
    """
    spec = heat.spec
    if spec.channels != len(classes):
        raise ShapeMismatch(f"{spec.channels} heatmap channels for {len(classes)} classes")
    reg_grids = dict(reg_grids or {})
    widths = {"offset": 3, "dims": 3, "vel": 2, "rot": 8, "attr": len(attributes)}
    reg = {}
    for key, width in widths.items():
        g = reg_grids.get(key)
        if g is None:
            reg[key] = np.zeros((spec.rows, spec.cols, width))
            continue
        if not g.spec.same_layout(spec) or g.spec.channels != width:
            raise ShapeMismatch(f"regression grid {key!r} does not match the heatmap layout")
        reg[key] = g.data
    peaks = local_maxima(heat.data) & (heat.data > score_thresh)
    ii, jj, cc = np.nonzero(peaks)
    scores = heat.data[ii, jj, cc]
    order = np.lexsort((jj, ii, cc, -scores))[:max_det]
    out = []
    for idx in order:
        i, j, c = int(ii[idx]), int(jj[idx]), int(cc[idx])
        x0, y0 = cell_to_world(spec, i, j)
        off = reg["offset"][i, j]
        vel = reg["vel"][i, j]
        attr = attributes[int(np.argmax(reg["attr"][i, j]))] if len(attributes) else ""
        out.append(
            Box3D(
                center=(x0 + off[0] * spec.cell_size, y0 + off[1] * spec.cell_size, off[2]),
                size=tuple(np.exp(reg["dims"][i, j])),
                yaw=decode_rotation(reg["rot"][i, j], bin_centers),
                velocity=(vel[0], vel[1]),
                class_name=classes[c],
                attribute=attr,
                score=float(min(max(scores[idx], 0.0), 1.0)),
            )
        )
    return out


def circle_nms(boxes: Sequence[Box3D], radius: float | Mapping[str, float]) -> list[Box3D]:
    """Drop boxes whose center lies within ``radius`` of a higher-scored box of the same class."""
    kept: list[Box3D] = []
    for b in sorted(boxes, key=lambda b: -b.score):
        r = radius[b.class_name] if isinstance(radius, Mapping) else radius
        if all(
            k.class_name != b.class_name or np.hypot(k.center[0] - b.center[0], k.center[1] - b.center[1]) >= r
            for k in kept
        ):
            kept.append(b)
    return kept


def rasterize_detections(boxes: Sequence[Box3D], spec: GridSpec, classes: Sequence[str] = CLASSES) -> BevGrid:
    """Single-cell impulses of height ``score`` at each box's cell (max-combined)."""
    out = np.zeros(spec.with_channels(len(classes)).shape)
    index = {c: i for i, c in enumerate(classes)}
    for b in boxes:
        rows, cols, inside = cells_of(spec, [b.center[0]], [b.center[1]])
        if inside[0]:
            ch = index[b.class_name]
            out[rows[0], cols[0], ch] = max(out[rows[0], cols[0], ch], b.score)
    return BevGrid(spec.with_channels(len(classes)), out)
