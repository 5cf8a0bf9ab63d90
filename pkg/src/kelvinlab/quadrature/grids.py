"""Uniform box grids with cell-midpoint samples, and norms over balls."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("box bounds have different dimensions")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box needs lower < upper on every axis, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, n, half_width, center=None):
        c = np.zeros(n) if center is None else np.asarray(center, float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def n(self):
        return len(self.lower)

    def contains(self, x):
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


class GridFunction:
    """Samples at the cell midpoints of a uniform grid on a box (n <= 3).

    ``values`` has shape ``resolution`` (C order, axis 0 first); the array is
    stored read-only.
    """

    def __init__(self, box: Box, resolution, values):
        res = tuple(int(r) for r in np.atleast_1d(resolution))
        if len(res) == 1 and box.n > 1:
            res = res * box.n
        if len(res) != box.n or min(res) < 1:
            raise ValueError(f"resolution {resolution} does not match a {box.n}-d box")
        if box.n > 3:
            raise ValueError("direct grids are limited to n <= 3")
        vals = np.array(values, dtype=float).reshape(res)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals.setflags(write=False)
        self.box = box
        self.resolution = res
        self.values = vals

    @classmethod
    def from_function(cls, box, resolution, func):
        """Sample ``func`` (taking an (m, n) array) at every cell midpoint."""
        empty = cls(box, resolution, np.zeros(np.prod(np.broadcast_to(resolution, (box.n,)))))
        vals = np.asarray(func(empty.midpoints()), float)
        return cls(box, empty.resolution, vals)

    def with_values(self, values):
        return GridFunction(self.box, self.resolution, values)

    @property
    def n(self):
        return self.box.n

    @property
    def spacing(self):
        return (np.asarray(self.box.upper) - np.asarray(self.box.lower)) / np.asarray(self.resolution)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        h = self.spacing
        return [self.box.lower[i] + h[i] * (np.arange(self.resolution[i]) + 0.5) for i in range(self.n)]

    def midpoints(self):
        """All cell midpoints as an (N, n) array in the order of ``values.ravel()``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat(self):
        return self.values.ravel()

    def cell_index(self, x):
        """Multi-index of the cell containing ``x`` (upper faces belong to the last cell)."""
        x = np.asarray(x, float)
        h = self.spacing
        idx = np.floor((x - np.asarray(self.box.lower)) / h).astype(int)
        return tuple(int(np.clip(i, 0, r - 1)) for i, r in zip(idx, self.resolution))

    def is_midpoint(self, x, rtol=1e-9):
        idx = self.cell_index(x)
        h = self.spacing
        mid = np.asarray(self.box.lower) + h * (np.asarray(idx) + 0.5)
        return bool(np.all(np.abs(np.asarray(x, float) - mid) <= rtol * h)), idx

    def interpolate(self, x):
        """Multilinear interpolation of the midpoint samples (clamped at the edges)."""
        from scipy.interpolate import RegularGridInterpolator

        pts = np.atleast_2d(np.asarray(x, float))
        axes = self.axes()
        clipped = np.stack([np.clip(pts[:, i], axes[i][0], axes[i][-1]) for i in range(self.n)], axis=1)
        if any(r == 1 for r in self.resolution):
            return np.full(len(pts), self.values.ravel()[0])
        interp = RegularGridInterpolator(axes, self.values, method="linear")
        return interp(clipped)

    def mask_ball(self, center, radius):
        mids = self.midpoints()
        return np.linalg.norm(mids - np.asarray(center, float), axis=1) < radius

    # --- CSV layout -------------------------------------------------------
    def to_csv(self, path=None):
        """Header rows ``kind,grid`` / ``n`` / ``lower`` / ``upper`` / ``resolution``,
        then a ``value`` row and one value per line in C order."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "grid"])
        w.writerow(["n", self.n])
        w.writerow(["lower", *[repr(v) for v in self.box.lower]])
        w.writerow(["upper", *[repr(v) for v in self.box.upper]])
        w.writerow(["resolution", *self.resolution])
        w.writerow(["value"])
        for v in self.values.ravel():
            w.writerow([repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path):
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        head = {r[0]: r[1:] for r in rows[:5]}
        if head.get("kind") != ["grid"] or rows[5] != ["value"]:
            raise ValueError("not a grid CSV")
        box = Box(tuple(map(float, head["lower"])), tuple(map(float, head["upper"])))
        res = tuple(map(int, head["resolution"]))
        vals = np.array([float(r[0]) for r in rows[6:]])
        return cls(box, res, vals)

    def __repr__(self):
        return f"GridFunction(n={self.n}, box={self.box.lower}..{self.box.upper}, resolution={self.resolution})"


def lp_norm_ball(f: GridFunction, exponent, center, radius):
    """(int_{B(center, radius)} |f|^exponent)^(1/exponent) by the midpoint rule over
    cells whose midpoints lie in the ball."""
    if exponent < 1:
        raise ValueError(f"exponent must be >= 1, got {exponent}")
    mask = f.mask_ball(center, radius)
    if not mask.any():
        if not f.box.contains(center) and np.all(
            np.abs(np.clip(center, f.box.lower, f.box.upper) - center) >= radius
        ):
            raise ValueError("ball does not intersect the box")
        return 0.0
    vals = np.abs(f.flat()[mask])
    return float((np.sum(vals**exponent) * f.cell_volume) ** (1.0 / exponent))
