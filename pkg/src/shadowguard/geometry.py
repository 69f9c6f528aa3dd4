"""Polygons, pixel-centre rasterization and sign masks.

Vertices are ``(x, y)`` pairs: ``x`` runs along columns, ``y`` along rows.
Pixel ``(row, col)`` has its centre at ``(col + 0.5, row + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

#: Vertices may sit up to this fraction of the image size outside it.
VERTEX_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class Polygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise ValueError(f"a polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def translated(self, dx: float, dy: float) -> Polygon:
        return Polygon(self.vertices + np.array([dx, dy]))

    def within_margin(self, width: int, height: int) -> bool:
        lo, hi = vertex_bounds(width, height)
        return bool(np.all(self.vertices >= lo) and np.all(self.vertices <= hi))

    def to_list(self) -> list[list[float]]:
        return self.vertices.tolist()


def vertex_bounds(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate ``(lo, hi)`` of the image box extended by the margin."""
    lo = np.array([-VERTEX_MARGIN * width, -VERTEX_MARGIN * height])
    hi = np.array([(1 + VERTEX_MARGIN) * width, (1 + VERTEX_MARGIN) * height])
    return lo, hi


def rasterize(poly, width: int, height: int) -> np.ndarray:
    """Boolean mask of pixels whose centres lie inside ``poly`` (even-odd rule)."""
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    return kernels.rasterize_evenodd(poly.vertices, int(width), int(height))


def intersect(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a & b


def full_mask(height: int, width: int) -> np.ndarray:
    return np.ones((height, width), dtype=bool)


def check_mask(mask, shape) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape[:2]):
        raise ValueError(f"mask shape {mask.shape} does not match image {tuple(shape[:2])}")
    return mask
