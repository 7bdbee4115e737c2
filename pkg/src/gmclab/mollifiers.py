"""Mollifier families, their quadrature rules and sine-mode transfer factors.

Every family is normalised at scale ``eps`` to unit mass.  The default
``base_radius`` of each family is its *unit log-capacity* radius: the radius at
which ``E log(1/|U - V|) = log(1/eps)`` for independent ``U, V ~ theta_eps``.
With that choice the mollified GFF variance is ``log(1/eps) + g(x, x)`` up to
series truncation, whichever family is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

FAMILIES = ("box", "bump", "truncated_gaussian", "circle")
RADIAL_SHAPES = {
    "bump": lambda r: np.where(r < 1.0, np.exp(-1.0 / np.clip(1.0 - r * r, 1e-300, None)), 0.0),
    "truncated_gaussian": lambda r: np.where(r < 1.0, np.exp(-2.0 * r * r), 0.0),
}

# level-0 node counts of the spatial rules; each refinement level doubles them
_BOX_NODES = 8
_CIRCLE_NODES = 64
_RADIAL_NODES = 8
_ANGULAR_NODES = 32


@lru_cache(maxsize=None)
def _radial_gauss(n: int, family: str) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] for the radial marginal ``r * shape(r)``, mass 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * (x + 1.0)
    p = 0.5 * w * r * RADIAL_SHAPES[family](r)
    return r, p / p.sum()


@lru_cache(maxsize=None)
def radial_profile(family: str, n: int = 20001) -> tuple[np.ndarray, ...]:
    """Radius law of a radial family at support radius 1 on a fine uniform grid.

    Returns ``(s, pdf, cdf, tail)`` with ``tail(s) = int_s^1 log(u) pdf(u) du``.
    """
    s = np.linspace(0.0, 1.0, n)
    pdf = s * RADIAL_SHAPES[family](s)
    pdf /= integrate.trapezoid(pdf, s)
    cdf = integrate.cumulative_trapezoid(pdf, s, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(s > 0, np.log(s) * pdf, 0.0)
    head = integrate.cumulative_trapezoid(lp, s, initial=0.0)
    return s, pdf, cdf, head[-1] - head


@lru_cache(maxsize=None)
def unit_self_energy(family: str) -> float:
    """``E log(1/|U - V|)`` for U, V i.i.d. from the family at support radius 1."""
    if family == "circle":
        return 0.0
    if family == "box":
        # square [-1, 1]^2: coordinate differences have triangular law on [-2, 2]
        f = lambda a, b: (1 - a) * (1 - b) * np.log(a * a + b * b)
        val, _ = integrate.dblquad(f, 0.0, 1.0, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        return -(np.log(2.0) + 2.0 * val)
    # radial law: angular average of log|r e^{it} - s| is log max(r, s),
    # so E log max(R, R') = 2 int log(s) pdf(s) cdf(s) ds
    s, pdf, cdf, _ = radial_profile(family)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(s > 0, np.log(s) * pdf * cdf, 0.0)
    return float(-2.0 * integrate.trapezoid(f, s))


def capacity_radius(family: str) -> float:
    return float(np.exp(unit_self_energy(family)))


@dataclass(frozen=True)
class MollifierSpec:
    """Unit-mass mollifier ``theta``; ``base_radius`` is its support radius at ``eps = 1``.

    For ``box`` the radius is the half side of the square support.
    """

    family: str
    base_radius: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mollifier family {self.family!r}; expected one of {FAMILIES}")
        if self.base_radius is None:
            object.__setattr__(self, "base_radius", capacity_radius(self.family))
        if not self.base_radius > 0:
            raise ValueError("base_radius must be positive")

    def radius(self, eps: float) -> float:
        return self.base_radius * eps

    def reach(self, eps: float) -> float:
        """Largest distance from the centre to a point of the support."""
        return self.radius(eps) * (np.sqrt(2.0) if self.family == "box" else 1.0)

    @property
    def self_energy_offset(self) -> float:
        """``E log(1/|U-V|) - log(1/eps)``; zero at the default radius."""
        return unit_self_energy(self.family) - np.log(self.base_radius)

    @property
    def is_radial(self) -> bool:
        return self.family != "box"

    # -- spatial rule -----------------------------------------------------
    def rule(self, eps: float, level: int = 0, staggered: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Offsets ``(n, 2)`` and weights ``(n,)`` of the midpoint rule at refinement ``level``.

        Level 0 is the base node count and each level doubles it per axis; negative
        levels give the coarse rules used for smooth integrands.

        The staggered variant never shares a node with the plain one at the same centre:
        box and radial rules use one extra (odd) node count, angular nodes are shifted by
        half a step.  Both variants are symmetric under reflection in either axis.
        """
        rad = self.radius(eps)
        scale = 2.0 ** level
        if self.family == "box":
            n = max(1, int(_BOX_NODES * scale)) + (1 if staggered else 0)
            u = rad * (-1.0 + (2.0 * np.arange(n) + 1.0) / n)
            U, V = np.meshgrid(u, u, indexing="ij")
            return np.column_stack([U.ravel(), V.ravel()]), np.full(n * n, 1.0 / (n * n))
        if self.family == "circle":
            n = max(4, int(_CIRCLE_NODES * scale))
            t = 2.0 * np.pi * (np.arange(n) + (0.0 if staggered else 0.5)) / n
            return rad * np.column_stack([np.cos(t), np.sin(t)]), np.full(n, 1.0 / n)
        nr = max(1, int(_RADIAL_NODES * scale)) + (1 if staggered else 0)
        nt = max(4, int(_ANGULAR_NODES * scale))
        r = (np.arange(nr) + 0.5) / nr
        t = 2.0 * np.pi * (np.arange(nt) + (0.0 if staggered else 0.5)) / nt
        wr = RADIAL_SHAPES[self.family](r) * r
        R, T = np.meshgrid(r, t, indexing="ij")
        w = np.repeat(wr, nt)
        pts = rad * np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        return pts, w / w.sum()

    # -- spectral transfer ------------------------------------------------
    def transfer(self, eps: float, j, k) -> np.ndarray:
        """``int theta_eps(u) cos(j pi u1) cos(k pi u2) du`` for integer mode indices.

        For the reflection-symmetric families this is the exact factor with
        ``(phi_jk * theta_eps)(x) = transfer * phi_jk(x)`` for every sine mode.
        """
        j = np.asarray(j, dtype=float)
        k = np.asarray(k, dtype=float)
        rad = self.radius(eps)
        if self.family == "box":
            return np.sinc(j * rad) * np.sinc(k * rad)
        freq = np.pi * rad * np.sqrt(j * j + k * k)
        if self.family == "circle":
            return special.j0(freq)
        return radial_transform(self.family, freq)


def radial_transform(family: str, t) -> np.ndarray:
    """Hankel transform ``sum_q p_q J0(t r_q)`` of a unit-radius radial family at ``t``."""
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    uniq, inverse = np.unique(flat, return_inverse=True)
    n = 64 + 3 * int(np.ceil(uniq.max(initial=0.0)))
    r, p = _radial_gauss(n, family)
    out = np.empty_like(uniq)
    step = max(1, 4_000_000 // n)
    for s in range(0, uniq.size, step):
        out[s:s + step] = special.j0(np.outer(uniq[s:s + step], r)) @ p
    return out[inverse].reshape(t.shape)
