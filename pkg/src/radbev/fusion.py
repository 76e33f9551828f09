"""Point-fusion of radar and image BEV features and heatmap-level ROI fusion.

Kernels are always supplied by the caller; nothing here is trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .bev import BevGrid, resample
from .errors import ChannelMismatch, SpecMismatch, ValidationError


@dataclass(frozen=True, eq=False)
class ConvKernel:
    """Stride-1, zero-padded 2D cross-correlation kernel.

    ``weights`` has shape (k_h, k_w, C_in, C_out) with odd k_h, k_w.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 4:
            raise ValidationError(f"kernel weights must be 4-D, got shape {w.shape}")
        if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise ValidationError("kernel height and width must be odd")
        if b.shape != (w.shape[3],):
            raise ValidationError(f"bias shape {b.shape} does not match C_out={w.shape[3]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("kernel has non-finite entries")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def c_in(self) -> int:
        return self.weights.shape[2]

    @property
    def c_out(self) -> int:
        return self.weights.shape[3]

    @classmethod
    def pointwise(cls, matrix, bias=None) -> "ConvKernel":
        """1x1 kernel from a (C_in, C_out) matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[None, None], np.zeros(m.shape[1]) if bias is None else bias)

    @classmethod
    def random(cls, rng: np.random.Generator, k: int, c_in: int, c_out: int, scale: float = 1.0) -> "ConvKernel":
        return cls(rng.normal(0.0, scale, (k, k, c_in, c_out)), rng.normal(0.0, scale, c_out))


def conv2d(grid: BevGrid, k: ConvKernel) -> BevGrid:
    if grid.spec.channels != k.c_in:
        raise ChannelMismatch(f"grid has {grid.spec.channels} channels, kernel expects {k.c_in}")
    kh, kw = k.weights.shape[:2]
    ph, pw = kh // 2, kw // 2
    rows, cols = grid.spec.rows, grid.spec.cols
    padded = np.pad(grid.data, ((ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((rows, cols, k.c_out))
    for di in range(kh):
        for dj in range(kw):
            out += padded[di : di + rows, dj : dj + cols, :] @ k.weights[di, dj]
    out += k.bias
    return BevGrid.from_array(grid.spec, out)


def concat_channels(*grids: BevGrid) -> BevGrid:
    spec = grids[0].spec
    for g in grids[1:]:
        if not g.spec.same_layout(spec):
            raise SpecMismatch("grids do not share extent and resolution")
    return BevGrid.from_array(spec, np.concatenate([g.data for g in grids], axis=2))


def point_fusion(img: BevGrid, radar: BevGrid, k: ConvKernel, align: bool = True) -> BevGrid:
    """Conv(Concat(Up(radar), Down(image))) with radar channels first.

    With ``align`` the image grid is halved and the radar grid doubled in
    resolution before concatenation; both must then share a layout.
    """
    if align:
        img = resample(img, 0.5)
        radar = resample(radar, 2)
    if not img.spec.same_layout(radar.spec):
        raise SpecMismatch(f"aligned grids differ: radar {radar.spec} vs image {img.spec}")
    return conv2d(concat_channels(radar, img), k)


def predict_heatmap(fused: BevGrid, k: ConvKernel) -> BevGrid:
    """Convolution followed by the logistic squash, one channel per class."""
    z = conv2d(fused, k)
    return BevGrid(z.spec, expit(z.data))


def roi_fusion(pf_heat: BevGrid, radar_heat: BevGrid, k1x1: ConvKernel) -> BevGrid:
    """Per-cell outer product of class and radar heatmaps, contracted by a 1x1 kernel.

    The product tensor has ``C * 6`` channels laid out class-major
    (channel ``c * 6 + a``).
    """
    if not pf_heat.spec.same_layout(radar_heat.spec):
        raise SpecMismatch("class and radar heatmaps must share extent and resolution")
    if k1x1.weights.shape[:2] != (1, 1):
        raise ValidationError("roi_fusion needs a 1x1 kernel")
    c, a = pf_heat.spec.channels, radar_heat.spec.channels
    prod = pf_heat.data[:, :, :, None] * radar_heat.data[:, :, None, :]
    prod = prod.reshape(pf_heat.spec.rows, pf_heat.spec.cols, c * a)
    return conv2d(BevGrid.from_array(pf_heat.spec, prod), k1x1)
