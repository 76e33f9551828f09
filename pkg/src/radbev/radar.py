"""Radar preprocessing: clutter filter, sweep accumulation, voxel features.

The learned voxel encoder and recurrent temporal encoder are replaced by
fixed aggregations (per-cell means and an exponentially weighted merge).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import points as P
from .bev import BevGrid, GridSpec, cells_of
from .errors import EmptyWindow, MismatchedGrids, ValidationError
from .geometry import RigidTransform, chain_sweep_transform, invert

VOXEL_CHANNELS = ("x_r", "y_r", "v_x", "v_y", "rcs", "count")
COUNT_CHANNEL = 5
DEFAULT_WINDOW = 10


@dataclass(frozen=True)
class FilterConfig:
    min_rcs: float = -10.0
    allowed_valid_states: frozenset = frozenset({0})
    allowed_doppler_states: frozenset = frozenset({3})
    max_false_alarm: int = 2

    def __post_init__(self):
        object.__setattr__(self, "allowed_valid_states", frozenset(int(v) for v in self.allowed_valid_states))
        object.__setattr__(self, "allowed_doppler_states", frozenset(int(v) for v in self.allowed_doppler_states))
        if not self.allowed_valid_states or not self.allowed_doppler_states:
            raise ValidationError("allowed state sets must be non-empty")


@dataclass(frozen=True, eq=False)
class SweepFrame:
    timestamp: float
    points: np.ndarray
    radar_to_ego: RigidTransform
    ego_to_global: RigidTransform
    name: str = field(default="RADAR_FRONT")

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, P.NUM_FIELDS + 1)
        object.__setattr__(self, "points", pts)


def clutter_filter(points: np.ndarray, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    """Keep points passing all four confidence predicates, in input order.

    Rows with NaN in any measured field are dropped first.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, P.NUM_FIELDS + 1)
    if len(pts) == 0:
        return pts.copy()
    keep = np.all(np.isfinite(pts[:, : P.NUM_FIELDS]), axis=1)
    keep &= pts[:, P.RCS] >= cfg.min_rcs
    keep &= np.isin(pts[:, P.VALID], list(cfg.allowed_valid_states))
    keep &= np.isin(pts[:, P.DOPPLER], list(cfg.allowed_doppler_states))
    keep &= pts[:, P.FALSE_ALARM] <= cfg.max_false_alarm
    return pts[keep]


def move_points(points: np.ndarray, t: RigidTransform) -> np.ndarray:
    """Transform positions (z = 0 plane) and rotate velocities into another frame."""
    out = np.array(points, dtype=np.float64)
    if len(out) == 0:
        return out
    r = t.rotation
    xy = out[:, [P.X, P.Y]]
    out[:, P.X] = r[0, 0] * xy[:, 0] + r[0, 1] * xy[:, 1] + t.translation[0]
    out[:, P.Y] = r[1, 0] * xy[:, 0] + r[1, 1] * xy[:, 1] + t.translation[1]
    v = out[:, [P.VX, P.VY]]
    out[:, P.VX] = r[0, 0] * v[:, 0] + r[0, 1] * v[:, 1]
    out[:, P.VY] = r[1, 0] * v[:, 0] + r[1, 1] * v[:, 1]
    return out


def accumulate_sweeps(
    frames: Sequence[SweepFrame],
    ref_pose: tuple[RigidTransform, RigidTransform] | None = None,
    cfg: FilterConfig = FilterConfig(),
    window: int = DEFAULT_WINDOW,
) -> np.ndarray:
    """Filter each sweep, then move it into the reference frame.

    Args:
        frames: sweeps of one radar ordered newest first; ``frames[0]`` is the keyframe.
        ref_pose: ``(ego_to_global at the keyframe, ref_from_ego)``. Defaults to
            the keyframe's ego pose and its own radar frame as reference.
        cfg: clutter filter thresholds.
        window: at most ``window + 1`` sweeps (k = 0..window) are used.

    Returns:
        Concatenated point array with ``sweep_index`` set to k.
    """
    if not frames:
        raise EmptyWindow("no sweeps to accumulate")
    stamps = [f.timestamp for f in frames[: window + 1]]
    if any(b >= a for a, b in zip(stamps, stamps[1:])):
        raise ValidationError("sweep timestamps must be strictly decreasing (newest first)")
    if ref_pose is None:
        ref_pose = (frames[0].ego_to_global, invert(frames[0].radar_to_ego))
    ego_to_global_ref, ref_from_ego = ref_pose
    out = []
    for k, frame in enumerate(frames[: window + 1]):
        kept = clutter_filter(frame.points, cfg)
        chain = chain_sweep_transform(frame.radar_to_ego, frame.ego_to_global, ego_to_global_ref, ref_from_ego)
        moved = move_points(kept, chain)
        moved[:, P.SWEEP] = k
        out.append(moved)
    return np.concatenate(out, axis=0)


def voxelize(points: np.ndarray, spec: GridSpec) -> BevGrid:
    """Per-cell mean of (x, y, v_x, v_y, rcs) plus point count; z is collapsed."""
    spec = spec.with_channels(6)
    out = np.zeros(spec.shape)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, P.NUM_FIELDS + 1)
    if len(pts):
        rows, cols, inside = cells_of(spec, pts[:, P.X], pts[:, P.Y])
        flat = rows[inside] * spec.cols + cols[inside]
        n = spec.rows * spec.cols
        counts = np.bincount(flat, minlength=n).astype(np.float64)
        occupied = counts > 0
        for ch, col in enumerate((P.X, P.Y, P.VX, P.VY, P.RCS)):
            sums = np.bincount(flat, weights=pts[inside, col], minlength=n)
            mean = np.zeros(n)
            mean[occupied] = sums[occupied] / counts[occupied]
            out[:, :, ch] = mean.reshape(spec.rows, spec.cols)
        out[:, :, COUNT_CHANNEL] = counts.reshape(spec.rows, spec.cols)
    return BevGrid(spec, out)


def voxelize_sweeps(points: np.ndarray, spec: GridSpec) -> dict[int, BevGrid]:
    """One voxel grid per sweep index present in ``points``."""
    pts = np.asarray(points).reshape(-1, P.NUM_FIELDS + 1)
    ks = sorted({int(k) for k in pts[:, P.SWEEP]}) or [0]
    return {k: voxelize(pts[pts[:, P.SWEEP] == k], spec) for k in ks}


def temporal_merge(
    grids: Mapping[int, BevGrid],
    decay: float = 0.5,
    occupancy_channel: int | None = None,
) -> BevGrid:
    """Exponentially weighted mean over sweeps: sum_k decay^k G_k / sum_k decay^k.

    With ``occupancy_channel`` set, a sweep only takes part in a cell's mean
    where that channel is positive; cells empty in every sweep stay zero.
    Without it every cell of every sweep takes part.
    """
    if not grids:
        raise EmptyWindow("no grids to merge")
    if not 0 < decay <= 1:
        raise ValidationError("decay must lie in (0, 1]")
    items = sorted(grids.items())
    spec = items[0][1].spec
    if any(g.spec != spec for _, g in items):
        raise MismatchedGrids("all grids must share one GridSpec")
    num = np.zeros(spec.shape)
    den = np.zeros(spec.shape[:2])
    for k, g in items:
        w = decay**k
        if occupancy_channel is None:
            mask = np.ones(spec.shape[:2])
        else:
            mask = (g.data[:, :, occupancy_channel] > 0).astype(np.float64)
        num += (w * mask)[:, :, None] * g.data
        den += w * mask
    out = np.zeros(spec.shape)
    nz = den > 0
    out[nz] = num[nz] / den[nz][:, None]
    return BevGrid(spec, out)
