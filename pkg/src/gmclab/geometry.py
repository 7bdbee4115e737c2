"""Rectangles, measure regions and geometric scale ladders."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        # coordinates taken as the decimals they print as, so [0.2, 0.8]^2 has area 0.36 exactly
        q = lambda v: Fraction(repr(float(v)))
        return float((q(self.x1) - q(self.x0)) * (q(self.y1) - q(self.y0)))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, pts, margin: float = 0.0) -> np.ndarray | bool:
        """True where ``pts`` lies inside the rectangle shrunk by ``margin``."""
        p = np.asarray(pts, dtype=float)
        inside = ((p[..., 0] >= self.x0 + margin) & (p[..., 0] <= self.x1 - margin)
                  & (p[..., 1] >= self.y0 + margin) & (p[..., 1] <= self.y1 - margin))
        return bool(inside) if inside.ndim == 0 else inside

    def margin_inside(self, outer: "Rect") -> float:
        """Distance from this rectangle to the boundary of ``outer`` (negative if it sticks out)."""
        return min(self.x0 - outer.x0, outer.x1 - self.x1,
                   self.y0 - outer.y0, outer.y1 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x0, self.x1, self.y0, self.y1]


UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ScaleLadder:
    """Geometric scales ``eps0 * ratio**j`` for ``j = 0 .. count-1`` (coarse to fine)."""

    eps0: float = 2.0 ** -3
    ratio: float = 0.5
    count: int = 5

    def __post_init__(self):
        if not 0.0 < self.eps0 <= 1.0:
            raise ValueError(f"eps0 must lie in (0, 1], got {self.eps0}")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.count < 1:
            raise ValueError("a ladder needs at least one scale")

    @property
    def scales(self) -> np.ndarray:
        return self.eps0 * self.ratio ** np.arange(self.count)

    @property
    def eps_min(self) -> float:
        return float(self.scales[-1])

    def index(self, eps: float) -> int:
        """Position of ``eps`` on the ladder (relative tolerance 1e-9)."""
        s = self.scales
        hit = np.flatnonzero(np.abs(s - eps) <= 1e-9 * eps)
        if hit.size == 0:
            raise KeyError(f"scale {eps!r} is not on the ladder {s.tolist()}")
        return int(hit[0])


@dataclass(frozen=True)
class Region:
    """Integration region S with an equal-area midpoint grid of ``grid_n`` cells per axis."""

    rect: Rect = field(default_factory=lambda: Rect(0.2, 0.8, 0.2, 0.8))
    grid_n: int = 128

    def __post_init__(self):
        if self.grid_n < 1:
            raise ValueError("grid_n must be positive")

    @property
    def area(self) -> float:
        return self.rect.area

    @property
    def cell_area(self) -> float:
        return self.rect.area / self.grid_n ** 2

    @property
    def spacing(self) -> float:
        return max(self.rect.width, self.rect.height) / self.grid_n

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid_n
        mid = (np.arange(n) + 0.5) / n
        return (self.rect.x0 + self.rect.width * mid,
                self.rect.y0 + self.rect.height * mid)

    def points(self) -> np.ndarray:
        """Cell midpoints as an ``(n*n, 2)`` array, x-major (``ij`` indexing)."""
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def with_grid(self, grid_n: int) -> "Region":
        return Region(self.rect, grid_n)
