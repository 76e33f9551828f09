"""Oriented 3D boxes and the detection class table."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import RigidTransform, wrap_angle, yaw_of

CLASSES = (
    "car",
    "truck",
    "bus",
    "trailer",
    "construction_vehicle",
    "pedestrian",
    "motorcycle",
    "bicycle",
    "traffic_cone",
    "barrier",
)


@dataclass(frozen=True)
class Box3D:
    """Box with center (x, y, z), size (w, l, h), yaw about +z and planar velocity.

    ``score`` is only meaningful for predictions.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    class_name: str = "car"
    attribute: str = ""
    score: float = 1.0

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        vel = tuple(float(v) for v in self.velocity)
        if len(center) != 3 or len(size) != 3 or len(vel) != 2:
            raise ValueError("center/size need 3 entries, velocity 2")
        if not all(s > 0 for s in size):
            raise ValueError(f"box size must be strictly positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "velocity", vel)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "score", float(self.score))

    def corners_bev(self) -> np.ndarray:
        """Footprint corners (4, 2), counter-clockwise."""
        w, l, _ = self.size
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        local = np.array([[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.center[:2])


def transform_box(t: RigidTransform, box: Box3D) -> Box3D:
    """Express ``box`` in another frame (yaw and velocity follow the z-rotation)."""
    center = t.rotation @ np.array(box.center) + t.translation
    vel = t.rotation @ np.array([box.velocity[0], box.velocity[1], 0.0])
    return replace(box, center=tuple(center), yaw=box.yaw + yaw_of(t.rotation), velocity=(vel[0], vel[1]))
