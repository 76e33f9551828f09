"""Radar point-cloud layout.

A point cloud is a float64 array of shape (M, 13): the twelve measured
fields in file order followed by the sweep index (0 = current sweep).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

RADAR_FIELDS = (
    "x_r",
    "y_r",
    "v_x",
    "v_y",
    "rcs",
    "valid_state",
    "doppler_state",
    "false_alarm_prob",
    "x_rms",
    "y_rms",
    "vx_rms",
    "vy_rms",
)
NUM_FIELDS = len(RADAR_FIELDS)
X, Y, VX, VY, RCS, VALID, DOPPLER, FALSE_ALARM, X_RMS, Y_RMS, VX_RMS, VY_RMS, SWEEP = range(13)


class RadarPoint(NamedTuple):
    x_r: float
    y_r: float
    v_x: float = 0.0
    v_y: float = 0.0
    rcs: float = 0.0
    valid_state: int = 0
    doppler_state: int = 3
    false_alarm_prob: int = 1
    x_rms: float = 0.0
    y_rms: float = 0.0
    vx_rms: float = 0.0
    vy_rms: float = 0.0
    sweep_index: int = 0


def empty_points() -> np.ndarray:
    return np.zeros((0, NUM_FIELDS + 1))


def as_points(rows) -> np.ndarray:
    """Build a point array from RadarPoints or 12/13-wide rows."""
    rows = list(rows)
    if not rows:
        return empty_points()
    arr = np.array([tuple(r) for r in rows], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in (NUM_FIELDS, NUM_FIELDS + 1):
        raise ValueError(f"rows must have {NUM_FIELDS} or {NUM_FIELDS + 1} fields, got shape {arr.shape}")
    if arr.shape[1] == NUM_FIELDS:
        arr = np.hstack([arr, np.zeros((len(arr), 1))])
    return arr


def to_records(points: np.ndarray) -> list[RadarPoint]:
    return [
        RadarPoint(*row[:5], *(int(v) for v in row[5:8]), *row[8:12], int(row[12]))
        for row in np.asarray(points).tolist()
    ]
