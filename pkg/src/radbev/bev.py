"""Top-down grids, Gaussian heatmaps and resampling.

Layout: ``data[row, col, channel]`` with rows along +x (forward) and columns
along +y (left). Cell ``(i, j)`` covers the half-open box
``[x_min + i*c, x_min + (i+1)*c) x [y_min + j*c, y_min + (j+1)*c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import points as P
from .boxes import CLASSES, Box3D
from .errors import IndivisibleShape, OutOfBounds, ValidationError

# Heatmap channel order and the column each channel takes its spread from.
RADAR_HEATMAP_CHANNELS = ("x_r", "y_r", "v_x", "v_y", "rcs", "false_alarm_prob")
_SPREAD_COLUMNS = (P.X_RMS, P.Y_RMS, P.VX_RMS, P.VY_RMS, P.RCS, P.FALSE_ALARM)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell_size: float
    channels: int = 1
    rows: int = field(init=False, repr=False, compare=False)
    cols: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError("grid extent must have x_max > x_min and y_max > y_min")
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be positive")
        if int(self.channels) < 1:
            raise ValidationError("channels must be >= 1")
        object.__setattr__(self, "channels", int(self.channels))
        for name, extent in (("rows", self.x_max - self.x_min), ("cols", self.y_max - self.y_min)):
            n = extent / self.cell_size
            if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
                raise ValidationError(f"extent {extent} is not an integer multiple of cell_size {self.cell_size}")
            object.__setattr__(self, name, int(round(n)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.rows, self.cols, self.channels)

    def with_channels(self, channels: int) -> "GridSpec":
        return replace(self, channels=channels)

    def with_cell_size(self, cell_size: float) -> "GridSpec":
        return replace(self, cell_size=cell_size)

    def same_layout(self, other: "GridSpec") -> bool:
        """Same extent and resolution (channel counts may differ)."""
        return (self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size) == (
            other.x_min,
            other.x_max,
            other.y_min,
            other.y_max,
            other.cell_size,
        )

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along rows (x) and columns (y)."""
        xs = self.x_min + (np.arange(self.rows) + 0.5) * self.cell_size
        ys = self.y_min + (np.arange(self.cols) + 0.5) * self.cell_size
        return xs, ys

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "cell_size": self.cell_size,
            "channels": self.channels,
        }


@dataclass(frozen=True, eq=False)
class BevGrid:
    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.spec.shape:
            raise ValidationError(f"grid data shape {data.shape} does not match spec {self.spec.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("grid contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "BevGrid":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_array(cls, spec: GridSpec, data) -> "BevGrid":
        """Wrap ``data``; the spec's channel count follows the array."""
        data = np.asarray(data, dtype=np.float64)
        return cls(spec.with_channels(data.shape[2]), data)


def world_to_cell(spec: GridSpec, x: float, y: float) -> tuple[int, int]:
    rows, cols, inside = cells_of(spec, np.array([x], dtype=float), np.array([y], dtype=float))
    if not inside[0]:
        raise OutOfBounds(f"({x}, {y}) is outside the grid extent")
    return int(rows[0]), int(cols[0])


def cells_of(spec: GridSpec, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized binning: (rows, cols, inside mask); indices are only valid where inside."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = (xs >= spec.x_min) & (xs < spec.x_max) & (ys >= spec.y_min) & (ys < spec.y_max)
    with np.errstate(invalid="ignore"):
        rows = np.floor((xs - spec.x_min) / spec.cell_size)
        cols = np.floor((ys - spec.y_min) / spec.cell_size)
    rows = np.clip(np.nan_to_num(rows), 0, spec.rows - 1).astype(np.int64)
    cols = np.clip(np.nan_to_num(cols), 0, spec.cols - 1).astype(np.int64)
    return rows, cols, inside


def cell_to_world(spec: GridSpec, row: int, col: int) -> tuple[float, float]:
    return spec.x_min + (row + 0.5) * spec.cell_size, spec.y_min + (col + 0.5) * spec.cell_size


@dataclass(frozen=True)
class RadarHeatmapConfig:
    tau: float = 1.0
    channel_order: tuple[str, ...] = RADAR_HEATMAP_CHANNELS

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if tuple(self.channel_order) != RADAR_HEATMAP_CHANNELS:
            raise ValidationError(f"channel_order is fixed to {RADAR_HEATMAP_CHANNELS}")


def radar_spread(points: np.ndarray, tau: float) -> np.ndarray:
    """Per-point, per-channel kernel variance, shape (M, 6)."""
    return np.maximum(np.asarray(points)[:, _SPREAD_COLUMNS], tau)


def radar_heatmap(points: np.ndarray, spec: GridSpec, cfg: RadarHeatmapConfig = RadarHeatmapConfig()) -> BevGrid:
    """Six-channel truncated Gaussian heatmap of radar returns.

    Each point adds ``exp(-r^2 / (2*S)) / (2*pi*S)`` around its position,
    with ``S = max(spread, tau)`` per channel, inside the window
    ``|dx| <= 3S, |dy| <= 3S`` and zero outside. Overlaps keep the maximum.
    """
    spec = spec.with_channels(6)
    out = np.zeros(spec.shape)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, P.NUM_FIELDS + 1)
    if len(pts) == 0:
        return BevGrid(spec, out)
    ok = np.all(np.isfinite(pts[:, [P.X, P.Y, *_SPREAD_COLUMNS]]), axis=1)
    pts = pts[ok]
    xs, ys = spec.centers()
    c = spec.cell_size
    spread = radar_spread(pts, cfg.tau)
    for p, sig in zip(pts, spread):
        px, py = p[P.X], p[P.Y]
        for ch in range(6):
            s = sig[ch]
            r = 3.0 * s
            # Index range padded by one cell; the exact window test follows.
            i0 = max(int(np.floor((px - r - spec.x_min) / c)) - 1, 0)
            i1 = min(int(np.ceil((px + r - spec.x_min) / c)) + 1, spec.rows)
            j0 = max(int(np.floor((py - r - spec.y_min) / c)) - 1, 0)
            j1 = min(int(np.ceil((py + r - spec.y_min) / c)) + 1, spec.cols)
            if i0 >= i1 or j0 >= j1:
                continue
            dx = xs[i0:i1] - px
            dy = ys[j0:j1] - py
            val = np.exp(-(dx[:, None] ** 2 + dy[None, :] ** 2) / (2.0 * s)) / (2.0 * np.pi * s)
            val *= (np.abs(dx) <= r)[:, None] & (np.abs(dy) <= r)[None, :]
            block = out[i0:i1, j0:j1, ch]
            np.maximum(block, val, out=block)
    return BevGrid(spec, out)


def gt_sigma_cells(box: Box3D, cell_size: float, min_cells: float = 1.0) -> float:
    """Kernel width in cells: footprint-adaptive, never below ``min_cells``."""
    w, l, _ = box.size
    return max(min(w, l) / 6.0 / cell_size, min_cells)


def gt_heatmap(
    boxes: Sequence[Box3D],
    spec: GridSpec,
    classes: Sequence[str] = CLASSES,
    min_sigma_cells: float = 1.0,
) -> BevGrid:
    """Class-channel target heatmap with value 1 at each box's center cell.

    The Gaussian is centered on the integer center cell (the sub-cell
    remainder is the offset regression target); boxes outside the grid or of
    unknown class are skipped.
    """
    spec = spec.with_channels(len(classes))
    out = np.zeros(spec.shape)
    index = {name: i for i, name in enumerate(classes)}
    ii = np.arange(spec.rows)[:, None]
    jj = np.arange(spec.cols)[None, :]
    for box in boxes:
        ch = index.get(box.class_name)
        if ch is None:
            continue
        rows, cols, inside = cells_of(spec, [box.center[0]], [box.center[1]])
        if not inside[0]:
            continue
        sig = gt_sigma_cells(box, spec.cell_size, min_sigma_cells)
        k = np.exp(-((ii - rows[0]) ** 2 + (jj - cols[0]) ** 2) / (2.0 * sig * sig))
        np.maximum(out[:, :, ch], k, out=out[:, :, ch])
    return BevGrid(spec, out)


def resample(grid: BevGrid, factor) -> BevGrid:
    """Change resolution by ``factor`` in {1/2, 2}.

    1/2 averages 2x2 blocks (cell size doubles); 2 repeats each cell 2x2
    (cell size halves).
    """
    f = Fraction(factor).limit_denominator(16)
    spec = grid.spec
    if f == 1:
        return grid
    if f == Fraction(1, 2):
        if spec.rows % 2 or spec.cols % 2:
            raise IndivisibleShape(f"cannot halve a {spec.rows}x{spec.cols} grid")
        d = grid.data.reshape(spec.rows // 2, 2, spec.cols // 2, 2, spec.channels).mean(axis=(1, 3))
        return BevGrid(spec.with_cell_size(spec.cell_size * 2), d)
    if f == 2:
        d = np.repeat(np.repeat(grid.data, 2, axis=0), 2, axis=1)
        return BevGrid(spec.with_cell_size(spec.cell_size / 2), d)
    raise IndivisibleShape(f"unsupported resample factor {factor}")
