"""Ellipse and polygon shapes with scanline rasterization.

Pixel ``(row, col)`` has its center at ``(x=col, y=row)`` and belongs to a
shape iff that center lies inside the shape or on its boundary. The
scanline fills below are written so that the pixel set is identical to the
per-pixel membership test (``contains``), bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegment

# slack on the ellipse quadratic form so points exactly on the boundary stay inside
# whatever order the rounding happens in
BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class EllipseSpec:
    cx: float
    cy: float
    a: float
    b: float
    alpha: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"ellipse axes must be positive, got a={self.a}, b={self.b}")
        if not 0 <= self.alpha < math.pi:
            raise ValueError(f"alpha must lie in [0, pi), got {self.alpha}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def contains(self, x, y):
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        dx = x - self.cx
        dy = y - self.cy
        u = dx * c + dy * s
        v = dy * c - dx * s
        return u * u / (self.a * self.a) + v * v / (self.b * self.b) <= 1.0 + BOUNDARY_EPS

    def translated(self, dx: float, dy: float) -> EllipseSpec:
        return EllipseSpec(self.cx + dx, self.cy + dy, self.a, self.b, self.alpha)


@dataclass(frozen=True)
class PolygonSpec:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if self.area() == 0:
            raise DegenerateSegment("polygon has zero area")

    def area(self) -> float:
        s = 0.0
        n = len(self.vertices)
        for k in range(n):
            x1, y1 = self.vertices[k]
            x2, y2 = self.vertices[(k + 1) % n]
            s += x1 * y2 - x2 * y1
        return abs(s) / 2

    def edges(self):
        n = len(self.vertices)
        return [(self.vertices[k], self.vertices[(k + 1) % n]) for k in range(n)]

    def contains(self, x: float, y: float) -> bool:
        inside = False
        for (x1, y1), (x2, y2) in self.edges():
            if _on_segment(x, y, x1, y1, x2, y2):
                return True
            if (y1 > y) != (y2 > y):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < xc:
                    inside = not inside
        return inside

    def translated(self, dx: float, dy: float) -> PolygonSpec:
        return PolygonSpec(tuple((x + dx, y + dy) for x, y in self.vertices))


def _on_segment(x, y, x1, y1, x2, y2):
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    return (cross == 0) & (min(x1, x2) <= x) & (x <= max(x1, x2)) & (min(y1, y2) <= y) & (y <= max(y1, y2))


def rasterize_ellipse(e: EllipseSpec, height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    c, s = math.cos(e.alpha), math.sin(e.alpha)
    ia2, ib2 = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    # row-wise quadratic in dx: A dx^2 + B dx + C <= 0
    qa = c * c * ia2 + s * s * ib2
    half_h = math.sqrt(e.a * e.a * s * s + e.b * e.b * c * c)
    r0 = max(0, math.ceil(e.cy - half_h) - 1)
    r1 = min(height - 1, math.floor(e.cy + half_h) + 1)
    for row in range(r0, r1 + 1):
        dy = row - e.cy
        qb = 2 * dy * c * s * (ia2 - ib2)
        qc = dy * dy * (s * s * ia2 + c * c * ib2) - 1.0
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            root = math.sqrt(disc)
            lo = math.ceil(e.cx + (-qb - root) / (2 * qa))
            hi = math.floor(e.cx + (-qb + root) / (2 * qa))
        else:
            lo = hi = round(e.cx - qb / (2 * qa))
        # the analytic span can be off by one at the boundary; settle it with the exact test
        while e.contains(lo - 1, row):
            lo -= 1
        while e.contains(hi + 1, row):
            hi += 1
        while lo <= hi and not e.contains(lo, row):
            lo += 1
        while hi >= lo and not e.contains(hi, row):
            hi -= 1
        lo, hi = max(lo, 0), min(hi, width - 1)
        if lo <= hi:
            mask[row, lo:hi + 1] = True
    return mask


def rasterize_polygon(p: PolygonSpec, height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    verts = np.array(p.vertices)
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    r0 = max(0, math.ceil(verts[:, 1].min()))
    r1 = min(height - 1, math.floor(verts[:, 1].max()))
    for row in range(r0, r1 + 1):
        y = float(row)
        xs = []
        for k in range(len(verts)):
            if (y1[k] > y) != (y2[k] > y):
                xs.append(x1[k] + (y - y1[k]) * (x2[k] - x1[k]) / (y2[k] - y1[k]))
        xs.sort()
        # even-odd: inside iff xs[2k] <= x < xs[2k+1]
        for k in range(0, len(xs) - 1, 2):
            lo = max(math.ceil(xs[k]), 0)
            hi = min(math.ceil(xs[k + 1]) - 1, width - 1)
            if lo <= hi:
                mask[row, lo:hi + 1] = True
    # pixels whose centers sit exactly on an edge
    for (ax, ay), (bx, by) in p.edges():
        c0 = max(0, math.ceil(min(ax, bx)))
        c1 = min(width - 1, math.floor(max(ax, bx)))
        rr0 = max(0, math.ceil(min(ay, by)))
        rr1 = min(height - 1, math.floor(max(ay, by)))
        if c0 > c1 or rr0 > rr1:
            continue
        ys, xs_ = np.mgrid[rr0:rr1 + 1, c0:c1 + 1].astype(float)
        on = _on_segment(xs_, ys, ax, ay, bx, by)
        mask[rr0:rr1 + 1, c0:c1 + 1] |= on
    return mask


def rasterize(shape, height: int, width: int) -> np.ndarray:
    if isinstance(shape, EllipseSpec):
        return rasterize_ellipse(shape, height, width)
    if isinstance(shape, PolygonSpec):
        return rasterize_polygon(shape, height, width)
    raise TypeError(f"cannot rasterize {type(shape).__name__}")
