"""PNG renderings of BEV grids and boxes (display only)."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bev import BevGrid  # noqa: E402
from .boxes import Box3D  # noqa: E402
from .io import atomic_write  # noqa: E402


def plot_bev(path, grid: BevGrid, detections: Sequence[Box3D] = (), ground_truth: Sequence[Box3D] = (),
             title: str = "") -> None:
    """Channel-max of ``grid`` with x up and y to the left, as seen from above."""
    s = grid.spec
    img = grid.data.max(axis=2)
    fig, ax = plt.subplots(figsize=(6, 6), dpi=100)
    # rows run along x and columns along y; flip so +x is up and +y is left
    ax.imshow(img[::-1, ::-1], extent=(s.y_max, s.y_min, s.x_min, s.x_max), cmap="viridis",
              interpolation="nearest", aspect="equal")
    for boxes, color in ((ground_truth, "white"), (detections, "red")):
        for b in boxes:
            pts = b.corners_bev()
            pts = np.vstack([pts, pts[:1]])
            ax.plot(pts[:, 1], pts[:, 0], color=color, lw=1.0)
    ax.set_xlim(s.y_max, s.y_min)
    ax.set_ylim(s.x_min, s.x_max)
    ax.set_xlabel("y [m]")
    ax.set_ylabel("x [m]")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())
