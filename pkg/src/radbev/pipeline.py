"""End-to-end detection on a scene with fixed, hand-set kernels.

Stages: radar preprocessing, radar heatmap, lift-splat of the camera
stand-in, point fusion, heatmap prediction, ROI fusion, decoding and
evaluation. The regression head is replaced by direct estimates: box size
and heading from the fused image payload channels, center and velocity
from the keyframe radar points that fall in the object's camera frustum
slice (frustum association).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from . import points as P
from .bev import BevGrid, GridSpec, RadarHeatmapConfig, cell_to_world, cells_of, gt_heatmap, radar_heatmap
from .boxes import Box3D, transform_box
from .errors import ValidationError
from .geometry import CameraModel, invert, transform_points
from .fusion import ConvKernel, point_fusion, predict_heatmap, roi_fusion
from .head import (
    BIN_CENTERS,
    EPS,
    LossWeights,
    RegressionTargets,
    circle_nms,
    decode_detections,
    encode_rotation,
    focal_loss,
    local_maxima,
    offset_target,
    reg_losses,
    total_loss,
)
from .metrics import EvalConfig, evaluate
from .radar import COUNT_CHANNEL, FilterConfig, accumulate_sweeps, temporal_merge, voxelize_sweeps
from .scene import Scene
from .synth import ATTRIBUTES, CLASS_SIZES, SceneConfig, attribute_for, generate_scene, render_camera_features
from .view_transform import default_depth_bins, lift_splat


@dataclass(frozen=True)
class GridConfig:
    x_min: float = 0.0
    x_max: float = 48.0
    y_min: float = -24.0
    y_max: float = 24.0
    cell_size: float = 0.5

    def head(self) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size)

    def image(self) -> GridSpec:
        return self.head().with_cell_size(self.cell_size / 2)

    def radar(self) -> GridSpec:
        return self.head().with_cell_size(self.cell_size * 2)


@dataclass(frozen=True)
class RadarConfig:
    min_rcs: float = -10.0
    allowed_valid_states: tuple[int, ...] = (0,)
    allowed_doppler_states: tuple[int, ...] = (3,)
    max_false_alarm: int = 2
    window: int = 10
    decay: float = 0.5
    tau: float = 4.0

    def filter(self) -> FilterConfig:
        return FilterConfig(self.min_rcs, frozenset(self.allowed_valid_states),
                            frozenset(self.allowed_doppler_states), self.max_false_alarm)


@dataclass(frozen=True)
class CameraConfig:
    depth_min: float = 1.0
    depth_max: float = 60.0
    depth_bins: int = 59
    depth_sigma: float = 0.5
    supersample: int = 4

    def bins(self) -> np.ndarray:
        return default_depth_bins(self.depth_min, self.depth_max, self.depth_bins)


@dataclass(frozen=True)
class FusionConfig:
    heat_gain: float = 400.0
    heat_bias: float = -4.0
    blur_scale: float = 0.25  # blur sigma as a fraction of the class's longest side
    min_blur: float = 0.5  # meters
    max_blur_radius: int = 8  # cells


@dataclass(frozen=True)
class DecodeConfig:
    score_thresh: float = 0.05
    max_det: int = 100
    nms_radius: float = 1.0
    payload_window: int = 2  # half-width in cells of the size/heading window
    image_pad: float = 2.0  # meters added to the object's diameter when gathering its image cells
    azimuth_split: float = 0.052  # radians (3 degrees); wider azimuth jumps separate objects
    depth_margin: float = 1.0  # meters beyond the half diagonal, in camera depth
    azimuth_pad: float = 0.026  # radians (1.5 degrees): half a feature pixel plus half a cell at range


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.25
    lambda_off: float = 1.0
    lambda_dim: float = 1.0
    lambda_vel: float = 1.0
    lambda_rot: float = 1.0
    lambda_att: float = 1.0
    alpha: float = 2.0
    gamma: float = 4.0
    focal_variant: str = "paper"
    eps: float = EPS  # prediction clamp inside both logs
    rotation_bins: tuple[float, ...] = BIN_CENTERS
    attribute_weights: tuple[float, ...] = ()  # empty: 1/N_A each
    gt_min_sigma: float = 1.0  # cells

    def __post_init__(self):
        # the 8-scalar rotation code holds exactly two bins
        if len(self.rotation_bins) != 2:
            raise ValidationError("rotation_bins must name exactly two bin centers")

    def weights(self) -> LossWeights:
        return LossWeights(self.beta, self.lambda_off, self.lambda_dim, self.lambda_vel,
                           self.lambda_rot, self.lambda_att, self.alpha, self.gamma,
                           self.attribute_weights or None)


@dataclass(frozen=True)
class EvalSection:
    dist_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    tp_threshold: float = 2.0

    def config(self, classes) -> EvalConfig:
        return EvalConfig(self.dist_thresholds, classes, self.tp_threshold)


@dataclass(frozen=True)
class PipelineConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    radar: RadarConfig = field(default_factory=RadarConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> "PipelineConfig":
        return _build(cls, d or {}, "")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(self.scene.classes)


def _build(kind, d: Mapping[str, Any], where: str):
    known = {f.name: f for f in fields(kind)}
    unknown = set(d) - set(known)
    if unknown:
        raise ValidationError(f"unknown config keys under {where or '/'}: {sorted(unknown)}")
    kwargs = {}
    defaults = kind()
    for name, value in d.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ValidationError(f"config section {where}/{name} must be a table")
            kwargs[name] = _build(type(current), value, f"{where}/{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(current, bool):
            kwargs[name] = bool(value)
        elif isinstance(current, (int, float)) and not isinstance(value, (int, float)):
            raise ValidationError(f"config value {where}/{name} must be a number")
        else:
            kwargs[name] = value
    try:
        return kind(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad config under {where or '/'}: {exc}") from exc


# Stages


def preprocess(scene: Scene, cfg: PipelineConfig) -> np.ndarray:
    """Filtered radar points of every radar, moved into the reference frame."""
    ref = (scene.keyframe.ego_pose, scene.ref_from_ego())
    parts = [
        accumulate_sweeps(scene.sweeps(name), ref, cfg.radar.filter(), cfg.radar.window)
        for name in scene.radar_names()
    ]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, P.NUM_FIELDS + 1))


def radar_features(points: np.ndarray, cfg: PipelineConfig) -> BevGrid:
    grids = voxelize_sweeps(points, cfg.grid.radar())
    return temporal_merge(grids, cfg.radar.decay, occupancy_channel=COUNT_CHANNEL)


def radar_heat(points: np.ndarray, cfg: PipelineConfig) -> BevGrid:
    return radar_heatmap(points, cfg.grid.head(), RadarHeatmapConfig(cfg.radar.tau))


def image_bev(scene: Scene, cfg: PipelineConfig) -> BevGrid:
    bins = cfg.camera.bins()
    cams = scene.camera_models()
    fms = [
        render_camera_features(scene, bins, cfg.classes, camera_index=i,
                               supersample=cfg.camera.supersample, depth_sigma=cfg.camera.depth_sigma)
        for i in range(len(cams))
    ]
    return lift_splat(cams, fms, bins, cfg.grid.image())


def image_channels(n_classes: int) -> int:
    return n_classes + 5


def build_kernels(cfg: PipelineConfig) -> dict[str, ConvKernel]:
    """Hand-set kernels for the three fusion convolutions.

    ``pf``: 1x1, passes the image channels and the radar count through
    (output = image channels, then count). ``heat``: per-class Gaussian blur
    of the class channel, scaled by the gain, plus the bias. ``roi``: averages
    the four position/velocity radar channels, each normalized to peak 1.
    """
    n = len(cfg.classes)
    n_img = image_channels(n)
    n_radar = 6
    pf = np.zeros((n_radar + n_img, n_img + 1))
    pf[n_radar:, :n_img] = np.eye(n_img)
    pf[COUNT_CHANNEL, n_img] = 1.0

    cell = cfg.grid.cell_size
    sigmas = [max(cfg.fusion.blur_scale * max(CLASS_SIZES.get(c, (1.0, 1.0))[:2]), cfg.fusion.min_blur) / cell
              for c in cfg.classes]
    r = min(int(math.ceil(2.0 * max(sigmas))), cfg.fusion.max_blur_radius)
    off = np.arange(-r, r + 1)
    heat = np.zeros((2 * r + 1, 2 * r + 1, n_img + 1, n))
    for c, s in enumerate(sigmas):
        heat[:, :, c, c] = cfg.fusion.heat_gain * np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2 * s * s))

    roi = np.zeros((n * n_radar, n))
    for c in range(n):
        roi[c * n_radar : c * n_radar + 4, c] = 2.0 * math.pi * cfg.radar.tau / 4.0
    return {
        "pf": ConvKernel.pointwise(pf),
        "heat": ConvKernel(heat, np.full(n, cfg.fusion.heat_bias)),
        "roi": ConvKernel.pointwise(roi),
    }


@dataclass
class FusionOutput:
    fused: BevGrid
    pf_heat: BevGrid
    heat: BevGrid


def fuse(img: BevGrid, radar: BevGrid, rheat: BevGrid, kernels: Mapping[str, ConvKernel]) -> FusionOutput:
    fused = point_fusion(img, radar, kernels["pf"])
    pf_heat = predict_heatmap(fused, kernels["heat"])
    return FusionOutput(fused, pf_heat, roi_fusion(pf_heat, rheat, kernels["roi"]))


def _payload_estimate(fused: BevGrid, i: int, j: int, n_cls: int, half: int):
    """Class, (w, l, h) and yaw from payload/mass ratios in a window; None without mass."""
    d = fused.data
    win = d[max(i - half, 0) : i + half + 1, max(j - half, 0) : j + half + 1]
    masses = win[..., :n_cls].sum(axis=(0, 1))
    mass = masses.sum()
    if mass <= 0:
        return None
    pay = win[..., n_cls : n_cls + 5].sum(axis=(0, 1)) / mass
    return int(np.argmax(masses)), np.exp(pay[:3]), math.atan2(pay[3], pay[4])


def _object_cells(fused: BevGrid, channel: int, i: int, j: int, radius: float, eye: np.ndarray,
                  half: int, split: float, floor: float = 1e-3):
    """Image-mass cells of the object whose peak is near cell (i, j).

    Takes the class's cells within ``radius`` meters whose mass exceeds
    ``floor`` times the largest mass within ``half`` cells of (i, j), orders
    them by azimuth from ``eye`` and cuts the sequence at jumps wider than
    ``split`` radians. Returns (rows, cols, azimuths) of the run holding that
    largest mass; empty arrays when there is none.
    """
    m = fused.data[:, :, channel]
    i0, j0 = max(i - half, 0), max(j - half, 0)
    win = m[i0 : i + half + 1, j0 : j + half + 1]
    empty = np.zeros(0, dtype=np.int64)
    if not (win > 0).any():
        return empty, empty, np.zeros(0)
    wi, wj = np.unravel_index(np.argmax(win), win.shape)
    si, sj = i0 + wi, j0 + wj
    xs, ys = fused.spec.centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    near = (np.hypot(gx - xs[si], gy - ys[sj]) <= radius) & (m > floor * m[si, sj])
    ii, jj = np.nonzero(near)
    az = np.arctan2(ys[jj] - eye[1], xs[ii] - eye[0])
    order = np.argsort(az, kind="stable")
    ii, jj, az = ii[order], jj[order], az[order]
    run = np.concatenate([[0], np.cumsum(np.diff(az) > split)])
    seed = run[np.nonzero((ii == si) & (jj == sj))[0][0]]
    keep = run == seed
    return ii[keep], jj[keep], az[keep]


def _frustum_points(fused: BevGrid, rows, cols, az, cam: CameraModel, points: np.ndarray,
                    depth_window: float, pad: float) -> np.ndarray:
    """Mask of radar points inside the camera frustum slice of one object.

    The slice spans the azimuths ``az`` of the object's cells, widened by
    ``pad`` radians, and camera depths within ``depth_window`` of the cells'
    mass-weighted mean depth.
    """
    xs, ys = fused.spec.centers()
    mass = fused.data[rows, cols, :].sum(axis=1)
    depth = transform_points(cam.extrinsics, np.column_stack([xs[rows], ys[cols], np.zeros(len(rows))]))[:, 2]
    eye = invert(cam.extrinsics).translation
    pts = np.column_stack([points[:, P.X], points[:, P.Y], np.zeros(len(points))])
    p_depth = transform_points(cam.extrinsics, pts)[:, 2]
    p_az = np.arctan2(pts[:, 1] - eye[1], pts[:, 0] - eye[0])
    return (
        (p_az >= az.min() - pad)
        & (p_az <= az.max() + pad)
        & (np.abs(p_depth - float(np.average(depth, weights=mass))) <= depth_window)
    )


def _facing_camera(cams: Sequence[CameraModel], x: float, y: float) -> CameraModel | None:
    for cam in cams:
        p = transform_points(cam.extrinsics, np.array([x, y, 0.0]))
        if p[2] > 0:
            u = cam.intrinsics[0, 0] * p[0] / p[2] + cam.intrinsics[0, 2]
            if 0 <= u < cam.image_size[0]:
                return cam
    return None


def regress_at(cells, fused: BevGrid, points: np.ndarray, ground_z: float, cfg: PipelineConfig,
               cams: Sequence[CameraModel] = ()) -> dict:
    """Regression estimates at the given (row, col) cells.

    Size and heading are payload/mass ratios of the fused image channels
    around the cell. The center and velocity are the mean of the keyframe
    radar points associated with the object through its camera frustum;
    without a camera or points they fall back to the image centroid and zero.

    Returns a dict of head-layout grids (``offset``, ``dims``, ``vel``,
    ``rot``, ``attr``) that are zero except at those cells.
    """
    spec = fused.spec
    n_cls = len(cfg.classes)
    out = {
        "offset": np.zeros((spec.rows, spec.cols, 3)),
        "dims": np.zeros((spec.rows, spec.cols, 3)),
        "vel": np.zeros((spec.rows, spec.cols, 2)),
        "rot": np.zeros((spec.rows, spec.cols, 8)),
        "attr": np.zeros((spec.rows, spec.cols, len(ATTRIBUTES))),
    }
    key = points[points[:, P.SWEEP] == 0] if len(points) else points
    dc = cfg.decode
    for i, j in cells:
        x0, y0 = cell_to_world(spec, i, j)
        est = _payload_estimate(fused, i, j, n_cls, dc.payload_window)
        x, y, vel = x0, y0, np.zeros(2)
        if est is None:
            size, yaw = np.ones(3), 0.0
        else:
            cls, size, yaw = est
            reach = 0.5 * math.hypot(size[0], size[1])
            cam = _facing_camera(cams, x0, y0)
            if cam is not None:
                eye = invert(cam.extrinsics).translation
                rows, cols, az = _object_cells(fused, cls, i, j, 2 * reach + dc.image_pad, eye,
                                               dc.payload_window, dc.azimuth_split)
                if len(rows):
                    xs, ys = spec.centers()
                    x, y = float(xs[rows].mean()), float(ys[cols].mean())
                    if len(key):
                        sel = _frustum_points(fused, rows, cols, az, cam, key, reach + dc.depth_margin,
                                              dc.azimuth_pad)
                        if sel.any():
                            x, y = float(key[sel, P.X].mean()), float(key[sel, P.Y].mean())
                            vel = key[sel][:, [P.VX, P.VY]].mean(axis=0)
        moving = attribute_for(vel) == "moving"
        out["offset"][i, j] = ((x - x0) / spec.cell_size, (y - y0) / spec.cell_size, ground_z + size[2] / 2)
        out["dims"][i, j] = np.log(size)
        out["vel"][i, j] = vel
        out["rot"][i, j] = encode_rotation(yaw, cfg.loss.rotation_bins)
        out["attr"][i, j] = (1.0, 0.0) if moving else (0.0, 1.0)
    return {k: BevGrid.from_array(spec, v) for k, v in out.items()}


def candidate_cells(heat: BevGrid, score_thresh: float) -> list[tuple[int, int]]:
    peaks = local_maxima(heat.data) & (heat.data > score_thresh)
    return sorted({(int(i), int(j)) for i, j in zip(*np.nonzero(peaks.any(axis=2)))})


def detect(fo: FusionOutput, points: np.ndarray, ground_z: float, cfg: PipelineConfig,
           cams: Sequence[CameraModel] = ()) -> list[Box3D]:
    """Decode peaks of the ROI-fused heatmap into reference-frame boxes.

    A box is dropped when the image evidence around its refined center
    names a different class.
    """
    reg = regress_at(candidate_cells(fo.heat, cfg.decode.score_thresh), fo.fused, points, ground_z, cfg, cams)
    boxes = decode_detections(fo.heat, reg, cfg.decode.score_thresh, cfg.decode.max_det, cfg.classes, ATTRIBUTES,
                              cfg.loss.rotation_bins)
    spec, n_cls = fo.fused.spec, len(cfg.classes)
    kept = []
    for b in boxes:
        rows, cols, inside = cells_of(spec, [b.center[0]], [b.center[1]])
        est = _payload_estimate(fo.fused, int(rows[0]), int(cols[0]), n_cls, cfg.decode.payload_window)
        if inside[0] and est is not None and cfg.classes[est[0]] == b.class_name:
            kept.append(b)
    return circle_nms(kept, cfg.decode.nms_radius)


def compute_losses(scene: Scene, fo: FusionOutput, points: np.ndarray, cfg: PipelineConfig) -> dict:
    """Focal loss of the fused heatmap and regression losses at GT centers."""
    spec = fo.heat.spec
    gts = [b for b in scene.gt_boxes_ref() if b.class_name in cfg.classes]
    target = gt_heatmap(gts, spec, cfg.classes, cfg.loss.gt_min_sigma)
    cls_loss, _ = focal_loss(fo.heat, target, cfg.loss.alpha, cfg.loss.gamma, cfg.loss.focal_variant, cfg.loss.eps)
    rows, cols, inside = cells_of(spec, [b.center[0] for b in gts], [b.center[1] for b in gts])
    gts = [b for b, ok in zip(gts, inside) if ok]
    cells = [(int(r), int(c)) for r, c, ok in zip(rows, cols, inside) if ok]
    out = {"cls": cls_loss, "reg": None, "total": None, "components": None}
    if not cells:
        return out
    reg = regress_at(cells, fo.fused, points, scene.ground_z_ref(), cfg, scene.camera_models())
    at = lambda name: np.array([reg[name].data[i, j] for i, j in cells])  # noqa: E731
    rot = at("rot").reshape(len(cells), 2, 4)
    preds = RegressionTargets(
        offset=at("offset"),
        dims=np.exp(at("dims")),
        velocity=at("vel"),
        bin_logits=rot[:, :, 0],
        bin_residuals=np.arctan2(rot[:, :, 1], rot[:, :, 2]),
        attributes=at("attr"),
    )
    truth = RegressionTargets(
        offset=np.array([(*offset_target(spec, b.center[0], b.center[1]), b.center[2]) for b in gts]),
        dims=np.array([b.size for b in gts]),
        velocity=np.array([b.velocity for b in gts]),
        yaw=np.array([b.yaw for b in gts]),
        attributes=np.array([[a == b.attribute for a in ATTRIBUTES] for b in gts], dtype=float),
    )
    rl = reg_losses(preds, truth, cfg.loss.weights(), cfg.loss.rotation_bins, cfg.loss.eps)
    out.update(reg=rl.total, total=total_loss(cls_loss, rl.total, cfg.loss.beta), components=rl.components)
    return out


@dataclass
class PipelineResult:
    scene: Scene
    points: np.ndarray
    fusion: FusionOutput
    detections: list[Box3D]  # reference frame
    report: dict


def sample_id(scene_cfg: SceneConfig) -> str:
    return f"seed-{scene_cfg.seed}"


def run_scene(scene: Scene, cfg: PipelineConfig, sample: str = "sample-0") -> PipelineResult:
    points = preprocess(scene, cfg)
    fo = fuse(image_bev(scene, cfg), radar_features(points, cfg), radar_heat(points, cfg), build_kernels(cfg))
    dets = detect(fo, points, scene.ground_z_ref(), cfg, scene.camera_models())
    to_global = scene.ref_to_global()
    preds = {sample: [transform_box(to_global, b) for b in dets]}
    gts = {sample: list(scene.keyframe.annotations)}
    report = evaluate(preds, gts, cfg.eval.config(cfg.classes))
    report["losses"] = compute_losses(scene, fo, points, cfg)
    report["num_detections"] = len(dets)
    return PipelineResult(scene, points, fo, dets, report)


def run_pipeline(cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    return run_scene(generate_scene(cfg.scene), cfg, sample_id(cfg.scene))
