"""In-memory scene: timed ego poses, radar sweeps, cameras and annotations.

Frames are ordered newest first; ``frames[0]`` is the keyframe. The
reference frame is the first radar's frame at the keyframe. Annotations are
stored in global coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box3D, transform_box
from .geometry import CameraModel, RigidTransform, compose, invert, transform_points
from .radar import SweepFrame


@dataclass(frozen=True, eq=False)
class RadarSweep:
    name: str
    calib: RigidTransform  # radar -> ego
    points: np.ndarray  # (M, 12) or (M, 13)


@dataclass(frozen=True, eq=False)
class CameraInfo:
    name: str
    intrinsics: np.ndarray
    calib: RigidTransform  # camera -> ego
    width: int
    height: int


@dataclass(eq=False)
class Frame:
    timestamp: float
    ego_pose: RigidTransform  # ego -> global
    radars: list[RadarSweep] = field(default_factory=list)
    cameras: list[CameraInfo] = field(default_factory=list)
    annotations: list[Box3D] = field(default_factory=list)


@dataclass(eq=False)
class Scene:
    frames: list[Frame]
    version: str = "1.0"

    @property
    def keyframe(self) -> Frame:
        return self.frames[0]

    @property
    def reference_radar(self) -> RadarSweep:
        return self.keyframe.radars[0]

    def ref_from_ego(self) -> RigidTransform:
        return invert(self.reference_radar.calib)

    def ref_to_global(self) -> RigidTransform:
        return compose(self.keyframe.ego_pose, self.reference_radar.calib)

    def radar_names(self) -> list[str]:
        return [r.name for r in self.keyframe.radars]

    def sweeps(self, radar_name: str) -> list[SweepFrame]:
        """SweepFrames of one radar, newest first."""
        out = []
        for f in self.frames:
            for r in f.radars:
                if r.name == radar_name:
                    pts = np.asarray(r.points, dtype=np.float64).reshape(len(r.points), -1)
                    if pts.shape[1] == 12:
                        pts = np.hstack([pts, np.zeros((len(pts), 1))])
                    out.append(SweepFrame(f.timestamp, pts, r.calib, f.ego_pose, name=r.name))
        return out

    def camera_models(self) -> list[CameraModel]:
        """Keyframe cameras with extrinsics expressed as camera-from-reference."""
        ego_from_ref = self.reference_radar.calib
        return [
            CameraModel(c.intrinsics, compose(invert(c.calib), ego_from_ref), (c.width, c.height))
            for c in self.keyframe.cameras
        ]

    def gt_boxes_ref(self) -> list[Box3D]:
        to_ref = invert(self.ref_to_global())
        return [transform_box(to_ref, b) for b in self.keyframe.annotations]

    def ground_z_ref(self) -> float:
        """Height of the ego ground plane (ego z = 0) in the reference frame."""
        return float(transform_points(self.ref_from_ego(), np.zeros(3))[2])
