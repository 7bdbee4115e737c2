"""Covariance kernels of the form K(x, y) = log(1/|x - y|) + g(x, y).

Three kernel objects are provided:

* :class:`GffSquare` -- Dirichlet Gaussian free field on the unit square,
  ``K = amplitude * sum_{j,k <= cutoff} phi_jk(x) phi_jk(y) / lambda_jk`` with
  ``phi_jk = 2 sin(j pi x1) sin(k pi x2)`` and ``lambda_jk = pi^2 (j^2 + k^2)``.
  With ``amplitude = 2 pi`` the cutoff -> infinity limit is exactly
  ``log(1/|x-y|) + g(x, y)`` where ``g = log`` of the conformal-radius type
  harmonic correction; :func:`gff_smooth_part` evaluates that ``g`` in closed
  form (sine series summed analytically along x1, method of images along x2).
* :class:`ExplicitMatrix` -- a covariance given only on a finite point set.
* :class:`PureLog` -- ``g == 0``.  A deterministic test double; never sampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import UNIT_SQUARE, Rect

TWO_PI = 2.0 * np.pi


class CoincidentPointsError(ValueError):
    """Raised when a log-singular kernel is evaluated on its diagonal."""


# ---------------------------------------------------------------------------
# closed form for the Dirichlet Green's function of the unit square

def _log_abs_one_minus(w):
    # log|1 - w| without cancellation for small |w|
    return 0.5 * np.log1p(-2.0 * w.real + (w.real ** 2 + w.imag ** 2))


def gff_smooth_part(x, y, n_images: int = 6) -> np.ndarray:
    """Smooth remainder g(x, y) of the 2*pi-normalised Dirichlet GFF on the unit square.

    ``2 pi G(x, y) = log(1/|x - y|) + g(x, y)``.  The value is continuous across the
    diagonal, so ``g(x, x)`` is returned for coincident arguments.  Image terms decay
    like ``exp(-2 pi m)``; six of them reach double precision in the interior.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    y1, y2 = y[..., 0], y[..., 1]
    lo = np.minimum(x2, y2)
    hi = np.maximum(x2, y2)
    dm = x1 - y1
    dp = x1 + y1
    offsets = (hi - lo, hi + lo, 2.0 - hi - lo, 2.0 - (hi - lo))
    signs = (1.0, -1.0, -1.0, 1.0)
    rot_m = np.exp(1j * np.pi * dm)
    rot_p = np.exp(1j * np.pi * dp)
    total = np.zeros(np.broadcast(x1, y1).shape)
    for m in range(n_images):
        for t, (c, s) in enumerate(zip(offsets, signs)):
            decay = np.exp(-np.pi * (c + 2.0 * m))
            if m == 0 and t == 0:
                # singular term with log(1/|x-y|) removed: -log pi - log|(1 - e^{-z})/z|
                z = np.pi * (c - 1j * dm)
                small = np.abs(z) < 1e-12
                zs = np.where(small, 1.0, z)
                ratio = np.where(small, 1.0, -np.expm1(-zs) / zs)
                minus = -np.log(np.pi) - np.log(np.abs(ratio))
            else:
                minus = -_log_abs_one_minus(decay * rot_m)
            plus = -_log_abs_one_minus(decay * rot_p)
            total = total + s * (minus - plus)
    return total


def gff_green(x, y, n_images: int = 6) -> np.ndarray:
    """``2 pi`` times the Dirichlet Green's function of the unit square (untruncated)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x[..., 0] - y[..., 0], x[..., 1] - y[..., 1])
    if np.any(r == 0.0):
        raise CoincidentPointsError("Green's function is infinite on the diagonal")
    return -np.log(r) + gff_smooth_part(x, y, n_images)


# ---------------------------------------------------------------------------
# kernel objects

@dataclass(frozen=True)
class PureLog:
    """``K(x, y) = log(1/|x - y|)``; exact closed forms for quadrature tests."""

    domain: Rect = field(default_factory=lambda: Rect(-10.0, 10.0, -10.0, 10.0))

    def continuum(self, w, z) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        z = np.asarray(z, dtype=float)
        return -np.log(np.hypot(w[..., 0] - z[..., 0], w[..., 1] - z[..., 1]))

    def smooth(self, w, z) -> np.ndarray:
        return np.zeros(np.broadcast(np.asarray(w)[..., 0], np.asarray(z)[..., 0]).shape)


@dataclass(frozen=True)
class GffSquare:
    """Truncated sine-series kernel of the Dirichlet GFF on the unit square."""

    mode_cutoff: int = 512
    amplitude: float = TWO_PI
    domain: Rect = UNIT_SQUARE

    def __post_init__(self):
        if self.mode_cutoff < 1:
            raise ValueError("mode_cutoff must be >= 1")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def normalised(self) -> bool:
        return abs(self.amplitude - TWO_PI) < 1e-12

    @cached_property
    def _inv_norm2(self) -> np.ndarray:
        j = np.arange(1, self.mode_cutoff + 1, dtype=float)
        return 1.0 / (j[:, None] ** 2 + j[None, :] ** 2)

    def eigenvalue_grid(self) -> np.ndarray:
        """Operator eigenvalues ``amplitude / lambda_jk`` laid out as ``[j-1, k-1]``."""
        return self.amplitude / np.pi ** 2 * self._inv_norm2

    @cached_property
    def kl_modes(self) -> np.ndarray:
        """``(cutoff**2, 2)`` array of ``(j, k)`` sorted by decreasing eigenvalue, ties by ``(j, k)``."""
        n = self.mode_cutoff
        j, k = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        j, k = j.ravel(), k.ravel()
        order = np.lexsort((k, j, j * j + k * k))
        return np.column_stack([j[order], k[order]])

    def series(self, x, y) -> np.ndarray:
        """Truncated double series at arrays of points, by separable summation."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        x, y = np.broadcast_arrays(x, y)
        j = np.arange(1, self.mode_cutoff + 1) * np.pi
        a = np.sin(np.outer(x[:, 0], j)) * np.sin(np.outer(y[:, 0], j))
        b = np.sin(np.outer(x[:, 1], j)) * np.sin(np.outer(y[:, 1], j))
        return 4.0 * self.amplitude / np.pi ** 2 * np.einsum("pj,jk,pk->p", a, self._inv_norm2, b)

    def continuum(self, w, z) -> np.ndarray:
        """Untruncated (cutoff -> infinity) kernel, used by spatial quadrature."""
        return self.amplitude / TWO_PI * gff_green(w, z)

    def smooth(self, w, z) -> np.ndarray:
        if not self.normalised:
            raise ValueError("g is only smooth for amplitude = 2 pi")
        return gff_smooth_part(w, z)


@dataclass(frozen=True, eq=False)
class ExplicitMatrix:
    """Covariance known only on ``points``; ``matrix[i, j] = K(points[i], points[j])``."""

    points: np.ndarray
    matrix: np.ndarray
    domain: Rect = UNIT_SQUARE

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        mat = np.asarray(self.matrix, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (n, 2) array")
        if mat.shape != (len(pts), len(pts)):
            raise ValueError("matrix shape does not match the point set")
        if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
            raise ValueError("matrix is not symmetric")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "matrix", mat)

    def index_of(self, x) -> int:
        d = np.hypot(*(self.points - np.asarray(x, dtype=float)).T)
        i = int(np.argmin(d))
        if d[i] > 1e-12:
            raise KeyError(f"{tuple(np.asarray(x))} is not one of the kernel's points")
        return i


KernelSpec = GffSquare | ExplicitMatrix | PureLog


def _check_in_domain(K, *pts):
    for p in pts:
        if not K.domain.contains(p):
            raise ValueError(f"point {tuple(np.asarray(p))} lies outside the kernel domain")


def kernel_eval(K: KernelSpec, x, y) -> float:
    """K(x, y) for ``x != y``; the truncated series for :class:`GffSquare`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_in_domain(K, x, y)
    if np.array_equal(x, y):
        raise CoincidentPointsError("K diverges on the diagonal")
    if isinstance(K, GffSquare):
        return float(K.series(x, y)[0])
    if isinstance(K, ExplicitMatrix):
        return float(K.matrix[K.index_of(x), K.index_of(y)])
    return float(K.continuum(x, y))


def g_eval(K: KernelSpec, x, y, n_neighbours: int = 6) -> float:
    """Smooth part ``g(x, y) = K(x, y) - log(1/|x - y|)``, with its diagonal limit at ``x == y``.

    For :class:`GffSquare` this is the cutoff -> infinity limit, summed in closed form.
    For :class:`ExplicitMatrix` the diagonal is a linear fit of ``g(x, p)`` against
    ``|x - p|`` over the nearest tabulated points, extrapolated to zero offset.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_in_domain(K, x, y)
    if isinstance(K, PureLog):
        return 0.0
    if isinstance(K, GffSquare):
        return float(K.smooth(x, y))
    i = K.index_of(x)
    if not np.array_equal(x, y):
        j = K.index_of(y)
        return float(K.matrix[i, j] + np.log(np.hypot(*(x - y))))
    d = np.hypot(*(K.points - x).T)
    others = np.argsort(d)[1:n_neighbours + 1]
    if others.size < 2:
        raise ValueError("need at least two neighbouring points to extrapolate the diagonal")
    g = K.matrix[i, others] + np.log(d[others])
    slope, intercept = np.polyfit(d[others], g, 1)
    return float(intercept)
