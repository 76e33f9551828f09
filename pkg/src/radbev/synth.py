"""Seeded synthetic scenes and a ray-cast stand-in for the image network.

All randomness comes from :class:`SplitMix64`, so a seed reproduces a scene
bit for bit on any platform with IEEE doubles::

    state = state + 0x9E3779B97F4A7C15            (mod 2**64)
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

``uniform()`` is ``(out >> 11) * 2**-53``; normals use Box-Muller on two
uniforms, one normal per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import points as P
from .boxes import CLASSES, Box3D, transform_box
from .geometry import RigidTransform, compose, invert, rot_z, transform_points
from .scene import CameraInfo, Frame, RadarSweep, Scene
from .view_transform import FEATURE_STRIDE, ImageFeatureMap

MASK64 = (1 << 64) - 1

# Mean (w, l, h) in meters and mean RCS in dB per class.
CLASS_SIZES = {
    "car": (1.95, 4.6, 1.7),
    "truck": (2.5, 6.9, 2.8),
    "bus": (2.9, 11.0, 3.5),
    "trailer": (2.9, 12.0, 3.9),
    "construction_vehicle": (2.8, 6.4, 3.2),
    "pedestrian": (0.67, 0.73, 1.77),
    "motorcycle": (0.77, 2.1, 1.47),
    "bicycle": (0.6, 1.7, 1.3),
    "traffic_cone": (0.41, 0.41, 1.07),
    "barrier": (2.5, 0.5, 0.98),
}
CLASS_RCS = {
    "car": 10.0,
    "truck": 18.0,
    "bus": 20.0,
    "trailer": 16.0,
    "construction_vehicle": 15.0,
    "pedestrian": -2.0,
    "motorcycle": 4.0,
    "bicycle": 0.0,
    "traffic_cone": -5.0,
    "barrier": 5.0,
}
MAX_SPEED = {
    "car": 10.0,
    "truck": 8.0,
    "bus": 8.0,
    "trailer": 6.0,
    "construction_vehicle": 3.0,
    "pedestrian": 1.5,
    "motorcycle": 8.0,
    "bicycle": 4.0,
    "traffic_cone": 0.0,
    "barrier": 0.0,
}
ATTRIBUTES = ("moving", "stationary")
MOVING_SPEED = 0.5


def attribute_for(velocity) -> str:
    return "moving" if math.hypot(velocity[0], velocity[1]) > MOVING_SPEED else "stationary"


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * (1.0 / (1 << 53)))

    def normal(self, sigma: float = 1.0) -> float:
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.uniform() * n) % n

    def poisson(self, lam: float) -> int:
        if lam <= 0:
            return 0
        limit, k, prod = math.exp(-lam), 0, self.uniform()
        while prod > limit:
            k += 1
            prod *= self.uniform()
        return k


@dataclass
class SceneConfig:
    seed: int = 0
    num_frames: int = 3
    sweep_dt: float = 0.075
    start_time: float = 10.0
    ego_speed: float = 5.0
    ego_yaw_rate: float = 0.0
    num_objects: int = 5
    classes: tuple[str, ...] = CLASSES
    size_jitter: float = 0.1
    moving: bool = True
    points_per_object: int = 8
    pos_noise: float = 0.0
    vel_noise: float = 0.0
    rcs_noise: float = 0.0
    clutter_rate: float = 0.0
    x_range: tuple[float, float] = (8.0, 40.0)
    lateral_ratio: float = 0.45
    extent: tuple[float, float, float, float] = (0.0, 48.0, -24.0, 24.0)
    min_gap: float = 2.0
    max_azimuth: float = math.radians(50.0)
    min_azimuth_gap: float = math.radians(6.0)

    def __post_init__(self):
        if self.clutter_rate < 0 or self.num_frames < 1 or self.num_objects < 0:
            raise ValueError("rates and counts must be nonnegative (num_frames >= 1)")
        if self.points_per_object % 2:
            raise ValueError("points_per_object must be even")
        self.classes = tuple(self.classes)


RADAR_CALIB = RigidTransform.from_translation((3.6, 0.0, 0.5))
# Camera axes (x right, y down, z forward) expressed in ego axes.
CAMERA_CALIB = RigidTransform(np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]), (1.7, 0.0, 1.5))
CAMERA_INTRINSICS = np.array([[480.0, 0.0, 704.0], [0.0, 480.0, 256.0], [0.0, 0.0, 1.0]])
CAMERA_SIZE = (1408, 512)


def ego_pose_at(x0: float, y0: float, yaw0: float, speed: float, yaw_rate: float, dt: float) -> RigidTransform:
    """Ego-to-global pose after ``dt`` seconds of constant speed and turn rate."""
    yaw = yaw0 + yaw_rate * dt
    if abs(yaw_rate) < 1e-12:
        x, y = x0 + speed * dt * math.cos(yaw0), y0 + speed * dt * math.sin(yaw0)
    else:
        r = speed / yaw_rate
        x = x0 + r * (math.sin(yaw) - math.sin(yaw0))
        y = y0 - r * (math.cos(yaw) - math.cos(yaw0))
    return RigidTransform(rot_z(yaw), (x, y, 0.0))


def perimeter_points(box: Box3D, count: int, phase: float) -> np.ndarray:
    """``count`` evenly spaced points on the footprint outline, (count, 2).

    With even ``count`` the points come in pairs mirrored through the center.
    """
    w, l, _ = box.size
    per = 2.0 * (w + l)
    out = np.empty((count, 2))
    for i in range(count):
        s = ((phase + i / count) % 1.0) * per
        if s < l:
            local = (-l / 2 + s, -w / 2)
        elif s < l + w:
            local = (l / 2, -w / 2 + (s - l))
        elif s < 2 * l + w:
            local = (l / 2 - (s - l - w), w / 2)
        else:
            local = (-l / 2, w / 2 - (s - 2 * l - w))
        out[i] = local
    c, s_ = math.cos(box.yaw), math.sin(box.yaw)
    return out @ np.array([[c, -s_], [s_, c]]).T + np.array(box.center[:2])


def _azimuth_span(box: Box3D, eye: np.ndarray) -> tuple[float, float]:
    rel = box.corners_bev() - eye[:2]
    az = np.arctan2(rel[:, 1], rel[:, 0])
    return float(az.min()), float(az.max())


def _place_objects(cfg: SceneConfig, rng: SplitMix64, ground_z: float, eye: np.ndarray) -> list[Box3D]:
    """Rejection-sample boxes inside the extent and the camera's view.

    Boxes keep ``min_gap`` meters of clearance and disjoint azimuth intervals
    as seen from ``eye``, so no object hides another from the camera. A
    layout that runs out of room is discarded and drawn again.
    """
    for _round in range(100):
        boxes = _try_place(cfg, rng, ground_z, eye)
        if boxes is not None:
            return boxes
    raise RuntimeError("could not place all objects; lower num_objects or the gaps")


def _try_place(cfg: SceneConfig, rng: SplitMix64, ground_z: float, eye: np.ndarray) -> list[Box3D] | None:
    boxes: list[Box3D] = []
    spans: list[tuple[float, float]] = []
    for _ in range(cfg.num_objects):
        for _attempt in range(500):
            cls = cfg.classes[rng.randint(len(cfg.classes))]
            w, l, h = (s * (1.0 + rng.uniform(-cfg.size_jitter, cfg.size_jitter)) for s in CLASS_SIZES[cls])
            x = rng.uniform(*cfg.x_range)
            y = rng.uniform(-cfg.lateral_ratio * x, cfg.lateral_ratio * x)
            yaw = rng.uniform(-math.pi, math.pi)
            speed = rng.uniform(0.0, MAX_SPEED[cls]) if cfg.moving else 0.0
            vel = (speed * math.cos(yaw), speed * math.sin(yaw))
            cand = Box3D((x, y, ground_z + h / 2), (w, l, h), yaw, vel, cls, attribute_for(vel))
            reach = 0.5 * math.hypot(w, l)
            x0, x1, y0, y1 = cfg.extent
            if not (x0 + reach < x < x1 - reach and y0 + reach < y < y1 - reach):
                continue
            if any(
                math.hypot(x - b.center[0], y - b.center[1]) <= reach + 0.5 * math.hypot(b.size[0], b.size[1]) + cfg.min_gap
                for b in boxes
            ):
                continue
            lo, hi = _azimuth_span(cand, eye)
            if max(abs(lo), abs(hi)) > cfg.max_azimuth:
                continue
            g = cfg.min_azimuth_gap
            if any(lo < b_hi + g and b_lo < hi + g for b_lo, b_hi in spans):
                continue
            boxes.append(cand)
            spans.append((lo, hi))
            break
        else:
            return None
    return boxes


def _moved(box: Box3D, dt: float) -> Box3D:
    c = box.center
    return Box3D((c[0] + box.velocity[0] * dt, c[1] + box.velocity[1] * dt, c[2]), box.size, box.yaw,
                 box.velocity, box.class_name, box.attribute, box.score)


def generate_scene(cfg: SceneConfig) -> Scene:
    """Build a physically consistent scene.

    Objects are placed in the keyframe's reference (front radar) frame in
    front of the ego vehicle, then carried to global coordinates. Each sweep
    has ``points_per_object`` returns per object on its footprint outline,
    carrying the object's velocity; clutter returns get false-alarm codes 3-7.
    """
    rng = SplitMix64(cfg.seed)
    x0, y0 = rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0)
    yaw0 = rng.uniform(-math.pi, math.pi)
    key_pose = ego_pose_at(x0, y0, yaw0, cfg.ego_speed, cfg.ego_yaw_rate, 0.0)
    ref_to_global = compose(key_pose, RADAR_CALIB)
    ground_z = float(transform_points(invert(RADAR_CALIB), np.zeros(3))[2])
    eye = transform_points(invert(RADAR_CALIB), CAMERA_CALIB.translation)
    boxes_ref = _place_objects(cfg, rng, ground_z, eye)
    boxes_global = [transform_box(ref_to_global, b) for b in boxes_ref]
    camera = CameraInfo("CAM_FRONT", CAMERA_INTRINSICS.copy(), CAMERA_CALIB, *CAMERA_SIZE)

    frames = []
    for k in range(cfg.num_frames):
        dt = -k * cfg.sweep_dt
        pose = ego_pose_at(x0, y0, yaw0, cfg.ego_speed, cfg.ego_yaw_rate, dt)
        radar_from_global = invert(compose(pose, RADAR_CALIB))
        rows = []
        annotations = [_moved(b, dt) for b in boxes_global]
        for box in annotations:
            outline = perimeter_points(box, cfg.points_per_object, rng.uniform())
            pts = np.column_stack([outline, np.full(len(outline), box.center[2])])
            local = transform_points(radar_from_global, pts)
            v = radar_from_global.rotation @ np.array([box.velocity[0], box.velocity[1], 0.0])
            for p in local:
                rows.append([
                    p[0] + rng.normal(cfg.pos_noise), p[1] + rng.normal(cfg.pos_noise),
                    v[0] + rng.normal(cfg.vel_noise), v[1] + rng.normal(cfg.vel_noise),
                    CLASS_RCS[box.class_name] + rng.normal(cfg.rcs_noise),
                    0, 3, 1,
                    cfg.pos_noise, cfg.pos_noise, cfg.vel_noise, cfg.vel_noise,
                ])
        ex0, ex1, ey0, ey1 = cfg.extent
        for _ in range(rng.poisson(cfg.clutter_rate)):
            rows.append([
                rng.uniform(ex0, ex1), rng.uniform(ey0, ey1),
                rng.normal(2.0), rng.normal(2.0), rng.uniform(-15.0, 15.0),
                rng.randint(3) if rng.uniform() < 0.5 else 0, rng.randint(4), 3 + rng.randint(5),
                0.5, 0.5, 0.5, 0.5,
            ])
        pts = np.array(rows, dtype=np.float64).reshape(-1, P.NUM_FIELDS)
        frames.append(Frame(
            timestamp=cfg.start_time + dt,
            ego_pose=pose,
            radars=[RadarSweep("RADAR_FRONT", RADAR_CALIB, pts)],
            cameras=[camera],
            annotations=annotations,
        ))
    return Scene(frames)


def _ray_box_hits(origin: np.ndarray, dirs: np.ndarray, box: Box3D) -> np.ndarray:
    """Entry distance along each ray (inf on a miss); ``dirs`` is (N, 3)."""
    c, s = math.cos(-box.yaw), math.sin(-box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - np.array(box.center))
    d = dirs @ rot.T
    half = np.array([box.size[1], box.size[0], box.size[2]]) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = tmax >= np.maximum(tmin, 0.0)
    return np.where(hit, np.maximum(tmin, 0.0), np.inf)


def render_camera_features(
    scene: Scene,
    depth_bins,
    classes=CLASSES,
    camera_index: int = 0,
    stride: int = FEATURE_STRIDE,
    supersample: int = 4,
    depth_sigma: float = 0.5,
) -> ImageFeatureMap:
    """Stand-in for the image backbone and depth network.

    Casts ``supersample**2`` rays per feature pixel at the keyframe boxes.
    A pixel's features are its covered fraction times
    ``[one-hot class, log w, log l, log h, sin yaw, cos yaw]`` of the object
    most of its rays hit first; its depth logits peak at that object's
    center depth.
    """
    cam = scene.camera_models()[camera_index]
    boxes = scene.gt_boxes_ref()
    bins = np.asarray(depth_bins, dtype=np.float64)
    width, height = cam.image_size
    hf, wf = height // stride, width // stride
    n_cls = len(classes)
    feats = np.zeros((hf, wf, n_cls + 5))
    logits = np.zeros((hf, wf, len(bins)))
    index = {c: i for i, c in enumerate(classes)}
    boxes = [b for b in boxes if b.class_name in index]
    if not boxes:
        return ImageFeatureMap(feats, logits)
    ref_from_cam = invert(cam.extrinsics)
    sub = (np.arange(supersample) + 0.5) / supersample
    u = ((np.arange(wf)[:, None] + sub[None, :]) * stride).ravel()
    v = ((np.arange(hf)[:, None] + sub[None, :]) * stride).ravel()
    uu, vv = np.meshgrid(u, v)  # (hf*ss, wf*ss)
    pix = np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)
    dirs = (pix @ np.linalg.inv(cam.intrinsics).T) @ ref_from_cam.rotation.T
    dist = np.stack([_ray_box_hits(ref_from_cam.translation, dirs, b) for b in boxes], axis=1)
    nearest = np.argmin(dist, axis=1)
    hit = np.isfinite(dist.min(axis=1))
    # counts[h, w, k]: rays of feature pixel (h, w) that first hit box k
    label = np.where(hit, nearest, len(boxes)).reshape(hf, supersample, wf, supersample)
    counts = np.stack([(label == k).sum(axis=(1, 3)) for k in range(len(boxes))], axis=-1)
    dominant = np.argmax(counts, axis=-1)
    cover = np.take_along_axis(counts, dominant[..., None], axis=-1)[..., 0] / supersample**2
    payload = np.zeros((len(boxes), n_cls + 5))
    for k, b in enumerate(boxes):
        payload[k, index[b.class_name]] = 1.0
        payload[k, n_cls:] = [*np.log(b.size), math.sin(b.yaw), math.cos(b.yaw)]
    depth = transform_points(cam.extrinsics, np.array([b.center for b in boxes]))[:, 2]
    feats = cover[..., None] * payload[dominant]
    logits = -((bins[None, None, :] - depth[dominant][..., None]) ** 2) / (2.0 * depth_sigma**2)
    logits = np.where(cover[..., None] > 0, logits, 0.0)
    return ImageFeatureMap(feats, logits)


__all__ = [
    "ATTRIBUTES",
    "CLASS_SIZES",
    "SceneConfig",
    "SplitMix64",
    "attribute_for",
    "generate_scene",
    "perimeter_points",
    "render_camera_features",
]
