"""Rigid transforms, sweep frame chains and the pinhole camera.

Conventions:
    ``RigidTransform(R, t)`` named ``a_from_b`` (or ``b_to_a``) maps a point
    expressed in frame b to frame a: ``p_a = R @ p_b + t``.
    Quaternions are (w, x, y, z), used only at the file boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BehindCamera, InvalidTransform, NonPositiveDepth

ORTHO_TOL = 1e-9
DRIFT_TOL = 1e-12
_EYE3 = np.eye(3)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _det3(r: np.ndarray) -> float:
    (a, b, c), (d, e, f), (g, h, i) = r.tolist()
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar factor via SVD)."""
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if _det3(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidTransform(f"expected 3x3 rotation and 3-vector, got {r.shape} and {t.shape}")
        if not math.isfinite(r.sum() + t.sum()):
            raise InvalidTransform("non-finite transform entries")
        if abs(r.T @ r - _EYE3).max() > ORTHO_TOL or abs(_det3(r) - 1.0) > ORTHO_TOL:
            raise InvalidTransform("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def _trusted(cls, r: np.ndarray, t: np.ndarray) -> "RigidTransform":
        # Skips validation; callers guarantee a proper rotation.
        obj = object.__new__(cls)
        object.__setattr__(obj, "rotation", _frozen(r))
        object.__setattr__(obj, "translation", _frozen(t))
        return obj

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls._trusted(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> "RigidTransform":
        return cls(np.eye(3), t)

    @classmethod
    def from_yaw(cls, yaw: float, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rot_z(yaw), translation)

    @classmethod
    def from_quaternion(cls, q: Sequence[float], translation: Sequence[float]) -> "RigidTransform":
        out = cls(quaternion_to_matrix(q), translation)
        # Kept so that quaternion() hands back exactly what was read.
        object.__setattr__(out, "_source_quaternion", _frozen(np.asarray(q, dtype=np.float64)))
        return out

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4) or np.max(np.abs(m[3] - [0, 0, 0, 1])) > ORTHO_TOL:
            raise InvalidTransform("expected a homogeneous 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def quaternion(self) -> np.ndarray:
        """(w, x, y, z); the source quaternion when built from one."""
        q = getattr(self, "_source_quaternion", None)
        return q.copy() if q is not None else matrix_to_quaternion(self.rotation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(r: np.ndarray) -> float:
    """Heading of the rotated x axis projected on the ground plane."""
    return float(np.arctan2(r[1, 0], r[0, 0]))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def quaternion_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = (float(v) for v in q)
    n = w * w + x * x + y * y + z * z
    if abs(n - 1.0) > 2e-6:
        raise InvalidTransform(f"quaternion not unit norm (|q|^2={n})")
    s = 2.0 / n
    return np.array(
        [
            [1 - s * (y * y + z * z), s * (x * y - z * w), s * (x * z + y * w)],
            [s * (x * y + z * w), 1 - s * (x * x + z * z), s * (y * z - x * w)],
            [s * (x * z - y * w), s * (y * z + x * w), 1 - s * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    r = np.asarray(r, dtype=np.float64)
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if abs(r.T @ r - _EYE3).max() > DRIFT_TOL:
        r = orthonormalize(r)
    return RigidTransform._trusted(r, t)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform._trusted(rt, -rt @ t.translation)


def transform_points(t: RigidTransform, pts) -> np.ndarray:
    """Apply ``t`` to an (N, 3) array (or a single 3-vector)."""
    p = np.asarray(pts, dtype=np.float64)
    return p @ t.rotation.T + t.translation


def chain_sweep_transform(
    calib_radar_to_ego: RigidTransform,
    ego_to_global_at_src: RigidTransform,
    ego_to_global_at_ref: RigidTransform,
    ref_from_ego: RigidTransform,
) -> RigidTransform:
    """Map points of a past radar sweep into the reference frame at the keyframe.

    Product, left to right: ref<-ego(t), ego(t)<-global, global<-ego(t-k),
    ego(t-k)<-radar.
    """
    out = compose(ref_from_ego, invert(ego_to_global_at_ref))
    out = compose(out, ego_to_global_at_src)
    return compose(out, calib_radar_to_ego)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera.

    ``extrinsics`` is camera-from-reference. Camera axes: x right, y down,
    z along the optical axis.
    """

    intrinsics: np.ndarray
    extrinsics: RigidTransform
    image_size: tuple[int, int]

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3):
            raise InvalidTransform(f"intrinsics must be 3x3, got {k.shape}")
        if not (k[0, 0] > 0 and k[1, 1] > 0) or k[2, 0] != 0 or k[2, 1] != 0 or k[2, 2] == 0:
            raise InvalidTransform("intrinsics need positive focal entries and a [0, 0, k22] last row")
        object.__setattr__(self, "intrinsics", _frozen(k))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @classmethod
    def from_params(cls, fx, fy, cx, cy, extrinsics: RigidTransform, image_size) -> "CameraModel":
        k = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(k, extrinsics, image_size)


def project_to_image(cam: CameraModel, p_ref) -> tuple[float, float, float]:
    """Return (u, v, depth) of a reference-frame point."""
    pc = transform_points(cam.extrinsics, p_ref)
    depth = float(pc[2])
    if not depth > 0:
        raise BehindCamera(f"point has camera depth {depth}")
    uvw = cam.intrinsics @ pc
    return float(uvw[0] / uvw[2]), float(uvw[1] / uvw[2]), depth


def unproject_pixel(cam: CameraModel, u: float, v: float, depth: float) -> np.ndarray:
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    ray = np.linalg.solve(cam.intrinsics, np.array([u, v, 1.0]))
    pc = ray * (depth / ray[2])
    return transform_points(invert(cam.extrinsics), pc)
