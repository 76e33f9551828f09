"""Lift image features into a depth frustum and splat them onto the BEV grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .bev import BevGrid, GridSpec, cells_of
from .errors import NonPositiveDepth, ShapeMismatch, ValidationError
from .geometry import CameraModel, RigidTransform, invert

FEATURE_STRIDE = 16


def default_depth_bins(d_min: float = 1.0, d_max: float = 60.0, num: int = 59) -> np.ndarray:
    """Centers of ``num`` uniform bins spanning [d_min, d_max]."""
    edges = np.linspace(d_min, d_max, num + 1)
    return 0.5 * (edges[:-1] + edges[1:])


@dataclass(frozen=True, eq=False)
class ImageFeatureMap:
    features: np.ndarray  # (H', W', C)
    depth_logits: np.ndarray  # (H', W', D)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        d = np.asarray(self.depth_logits, dtype=np.float64)
        if f.ndim != 3 or d.ndim != 3 or f.shape[:2] != d.shape[:2]:
            raise ShapeMismatch(f"features {f.shape} and depth logits {d.shape} disagree on the pixel grid")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "depth_logits", d)


@dataclass(frozen=True, eq=False)
class Frustum:
    depth_bins: np.ndarray  # (D,)
    features: np.ndarray  # (H', W', D, C)
    ray_points: np.ndarray  # (H', W', D, 3)

    def __post_init__(self):
        bins = np.asarray(self.depth_bins, dtype=np.float64)
        if bins.ndim != 1 or np.any(bins <= 0) or np.any(np.diff(bins) <= 0):
            raise ValidationError("depth bins must be positive and strictly increasing")
        f = np.asarray(self.features, dtype=np.float64)
        r = np.asarray(self.ray_points, dtype=np.float64)
        if f.shape[:3] != r.shape[:3] or r.shape[3:] != (3,) or f.shape[2] != len(bins):
            raise ShapeMismatch(f"frustum features {f.shape} / rays {r.shape} / bins {bins.shape}")
        if not np.all(np.isfinite(r)):
            raise ValidationError("ray points must be finite")
        object.__setattr__(self, "depth_bins", bins)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "ray_points", r)

    @property
    def pixel_grid(self) -> tuple[int, int]:
        return self.features.shape[:2]


def softmax_depth(logits) -> np.ndarray:
    """Per-pixel depth distribution over the last axis."""
    return softmax(np.asarray(logits, dtype=np.float64), axis=-1)


def lift(fm: ImageFeatureMap) -> np.ndarray:
    """Outer product of each pixel's feature vector with its depth distribution.

    Returns an (H', W', D, C) array.
    """
    depth = softmax_depth(fm.depth_logits)
    return depth[..., :, None] * fm.features[..., None, :]


def build_rays(
    cam: CameraModel,
    pixel_grid: tuple[int, int],
    depth_bins,
    ref_from_camera: RigidTransform | None = None,
    stride: int = FEATURE_STRIDE,
) -> np.ndarray:
    """Reference-frame 3D point of every (feature pixel, depth bin).

    Feature pixel (h, w) sits at image pixel ((w + 0.5) * stride,
    (h + 0.5) * stride) as (u, v).
    """
    bins = np.asarray(depth_bins, dtype=np.float64)
    if np.any(bins <= 0):
        raise NonPositiveDepth("depth bins must be positive")
    if ref_from_camera is None:
        ref_from_camera = invert(cam.extrinsics)
    h, w = pixel_grid
    v = (np.arange(h) + 0.5) * stride
    u = (np.arange(w) + 0.5) * stride
    uu, vv = np.meshgrid(u, v)  # (H', W')
    pix = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    rays = pix @ np.linalg.inv(cam.intrinsics).T
    rays = rays / rays[..., 2:3]
    cam_pts = rays[:, :, None, :] * bins[None, None, :, None]
    return cam_pts @ ref_from_camera.rotation.T + ref_from_camera.translation


def make_frustum(
    cam: CameraModel,
    fm: ImageFeatureMap,
    depth_bins,
    ref_from_camera: RigidTransform | None = None,
    stride: int = FEATURE_STRIDE,
) -> Frustum:
    if fm.depth_logits.shape[2] != len(depth_bins):
        raise ShapeMismatch(f"{fm.depth_logits.shape[2]} depth logits for {len(depth_bins)} bins")
    rays = build_rays(cam, fm.features.shape[:2], depth_bins, ref_from_camera, stride)
    return Frustum(np.asarray(depth_bins, dtype=np.float64), lift(fm), rays)


def splat_to_bev(fr: Frustum, spec: GridSpec) -> BevGrid:
    """Sum every frustum element's features into the BEV cell under its ray point."""
    c = fr.features.shape[-1]
    spec = spec.with_channels(c)
    feats = fr.features.reshape(-1, c)
    pts = fr.ray_points.reshape(-1, 3)
    rows, cols, inside = cells_of(spec, pts[:, 0], pts[:, 1])
    flat = rows[inside] * spec.cols + cols[inside]
    n = spec.rows * spec.cols
    out = np.empty((n, c))
    for ch in range(c):
        out[:, ch] = np.bincount(flat, weights=feats[inside, ch], minlength=n)
    return BevGrid(spec, out.reshape(spec.shape))


def lift_splat(cams, feature_maps, depth_bins, spec: GridSpec, stride: int = FEATURE_STRIDE) -> BevGrid:
    """Lift-splat every camera and sum the resulting grids."""
    total = None
    for cam, fm in zip(cams, feature_maps):
        g = splat_to_bev(make_frustum(cam, fm, depth_bins, stride=stride), spec)
        total = g.data if total is None else total + g.data
    if total is None:
        raise ValidationError("no cameras given")
    return BevGrid.from_array(spec, total)
