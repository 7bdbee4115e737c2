"""Mollified two-point covariances.

``mollified_cov`` integrates ``theta^a_{eps_a}(x - w) theta^b_{eps_b}(y - z) K(w, z)``.
The kernel is split into its log part, which depends on ``x - y`` only, and its
smooth part ``g``.  For the log part, a radial mollifier is averaged over angle
in closed form and the remaining integral goes through a midpoint rule whose
node counts double until the relative change drops below ``rel_tol``; two box
mollifiers use a split Gauss rule on the law of their difference.  The smooth
part uses staggered midpoint rules and converges at the first refinement.

For :class:`~gmclab.kernels.GffSquare` a second, spectral route sums the
truncated sine series with exact mollifier transfer factors.  The two routes
differ by the series truncation tail only.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .geometry import ScaleLadder
from .kernels import ExplicitMatrix, GffSquare, KernelSpec, PureLog
from .mollifiers import MollifierSpec, radial_profile

JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
_PAIR_BLOCK = 4_000_000


class QuadratureError(RuntimeError):
    """Successive refinements did not agree within tolerance."""


def _pair_sum(f, pa, wa, pb, wb) -> float:
    """``sum_ij wa_i wb_j f(pa_i, pb_j)`` in memory-bounded blocks."""
    step = max(1, _PAIR_BLOCK // len(pb))
    total = 0.0
    for s in range(0, len(pa), step):
        vals = f(pa[s:s + step, None, :], pb[None, :, :])
        total += float(wa[s:s + step] @ vals @ wb)
    return total


def radial_log_potential(m: MollifierSpec, eps: float, t) -> np.ndarray:
    """``E log|U + w|`` for ``U ~ theta_eps`` radial and ``|w| = t``.

    The angular mean of ``log|s e^{i phi} + w|`` is ``log max(s, |w|)``, so only
    the radius law enters: ``log t * P(R <= t) + E[log R; R > t]``.
    """
    rho = m.radius(eps)
    t = np.asarray(t, dtype=float)
    if m.family == "circle":
        return np.log(np.maximum(t, rho))
    s, _, cdf, tail = radial_profile(m.family)
    u = np.minimum(t / rho, 1.0)
    inside = t < rho
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(inside,
                       np.log(np.where(inside, t, 1.0)) * np.interp(u, s, cdf)
                       + np.log(rho) * (1.0 - np.interp(u, s, cdf)) + np.interp(u, s, tail),
                       np.log(np.maximum(t, rho)))
    # t = 0: log t * cdf(0) = 0 * -inf
    return np.where(t == 0.0, np.log(rho) + tail[0], val)


def _graded_gauss(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # smoothstep grading clusters nodes at both ends, where log singularities sit
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    s = t * t * (3.0 - 2.0 * t)
    ds = 6.0 * t * (1.0 - t)
    return a + (b - a) * s, 0.5 * w * (b - a) * ds


def _trapezoid_density(ra: float, rb: float, d):
    """Density of ``U - V`` for ``U ~ Unif[-ra, ra]``, ``V ~ Unif[-rb, rb]``."""
    lo, hi = abs(ra - rb), ra + rb
    a = np.abs(d)
    return np.clip((hi - a) / (hi - lo), 0.0, 1.0) * np.where(a <= hi, 1.0, 0.0) / (2.0 * max(ra, rb))


@lru_cache(maxsize=65536)
def _box_box_log_part(ra: float, rb: float, dx: float, dy: float, n: int = 24) -> float:
    """``E log(1/|delta + U - V|)`` for two squares of half sides ``ra``, ``rb``.

    Integrates over the product trapezoid law of ``U - V`` with the domain split at
    the density kinks and at the singular point, graded Gauss-Legendre on each piece.
    """
    hi, lo = ra + rb, abs(ra - rb)
    axes = []
    for c in (dx, dy):
        cuts = {-hi, -lo, lo, hi}
        if -hi < -c < hi:
            cuts.add(-c)
        cuts = sorted(cuts)
        nodes, weights = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 1e-15 * hi:
                continue
            x, w = _graded_gauss(a, b, n)
            nodes.append(x)
            weights.append(w * _trapezoid_density(ra, rb, x))
        axes.append((np.concatenate(nodes), np.concatenate(weights)))
    (x1, w1), (x2, w2) = axes
    r = np.hypot(dx + x1[:, None], dy + x2[None, :])
    return float(-(w1 @ np.log(r) @ w2))


@lru_cache(maxsize=65536)
def _log_part_cached(a, eps_a, b, eps_b, dx, dy, rel_tol, max_refine):
    if not a.is_radial and not b.is_radial:
        return _box_box_log_part(a.radius(eps_a), b.radius(eps_b), dx, dy)
    if not a.is_radial:
        # E log|d + U - V| = E log|-d + V - U|
        a, eps_a, b, eps_b, dx, dy = b, eps_b, a, eps_a, -dx, -dy
    delta = np.array([dx, dy])
    prev = None
    for level in range(max_refine):
        pb, wb = b.rule(eps_b, level)
        t = np.hypot(*(delta - pb).T)
        val = -float(wb @ radial_log_potential(a, eps_a, t))
        if prev is not None and abs(val - prev) <= rel_tol * max(abs(val), 1.0):
            return val
        change = np.inf if prev is None else abs(val - prev)
        prev = val
    raise QuadratureError(f"log part did not converge in {max_refine} levels (last change {change:.3g})")


def log_part(a: MollifierSpec, eps_a: float, b: MollifierSpec, eps_b: float, delta,
             rel_tol: float = 1e-3, max_refine: int = 5) -> float:
    """``E log(1/|delta + U - V|)`` with ``U ~ theta^a_{eps_a}``, ``V ~ theta^b_{eps_b}``.

    A radial side is averaged exactly over angle (``log max``); the other side goes
    through its midpoint rule, doubled until successive values agree to ``rel_tol``.
    Two squares use a split Gauss rule on the law of ``U - V``.
    """
    dx, dy = (float(v) for v in delta)
    return _log_part_cached(a, float(eps_a), b, float(eps_b), dx, dy, rel_tol, max_refine)


def smooth_part(K: KernelSpec, a, eps_a, b, eps_b, x, y, tol: float = 1e-5) -> float:
    """Mollified ``g`` on coarse rules; the smooth integrand converges by the base level."""
    if isinstance(K, PureLog):
        return 0.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = []
    for level in (-1, 0):
        pa, wa = a.rule(eps_a, level)
        pb, wb = b.rule(eps_b, level, staggered=True)
        vals.append(_pair_sum(K.smooth, pa + x, wa, pb + y, wb))
    if abs(vals[1] - vals[0]) > tol * max(1.0, abs(vals[1])):
        raise QuadratureError("smooth part of the kernel is not resolved by the mollifier rule")
    return vals[1]


@lru_cache(maxsize=64)
def transfer_grid(m: MollifierSpec | None, eps: float, cutoff: int) -> np.ndarray:
    """Transfer factors ``M[j-1, k-1]``; ``m=None`` means no mollification."""
    if m is None:
        return np.ones((cutoff, cutoff))
    j = np.arange(1, cutoff + 1)
    out = m.transfer(eps, j[:, None], j[None, :])
    out.setflags(write=False)
    return out


def spectral_cov(K: GffSquare, a, eps_a, b, eps_b, x, y) -> float:
    """Truncated-series covariance of two mollified point evaluations."""
    N = K.mode_cutoff
    w = K.eigenvalue_grid() * transfer_grid(a, eps_a, N) * transfer_grid(b, eps_b, N)
    j = np.arange(1, N + 1) * np.pi
    sx = np.sqrt(2.0) * np.sin(np.outer(np.asarray(x, dtype=float), j))
    sy = np.sqrt(2.0) * np.sin(np.outer(np.asarray(y, dtype=float), j))
    return float((sx[0] * sy[0]) @ w @ (sx[1] * sy[1]))


def _check_support(K, m, eps, x):
    if not K.domain.contains(x, margin=m.reach(eps)):
        raise ValueError(f"mollifier support at {tuple(np.asarray(x))}, eps={eps} leaves the domain")


def mollified_cov(K: KernelSpec, a: MollifierSpec, eps_a: float, b: MollifierSpec, eps_b: float,
                  x, y, method: str = "quadrature", rel_tol: float = 1e-3,
                  max_refine: int = 5) -> float:
    """``Cov(h^a_{eps_a}(x), h^b_{eps_b}(y))``.

    ``method="quadrature"`` integrates the untruncated kernel; ``"spectral"`` sums the
    truncated series of a :class:`GffSquare`.  The result is symmetric under swapping
    ``(a, eps_a, x)`` with ``(b, eps_b, y)`` exactly: the arguments are put in a
    canonical order before integrating.
    """
    if isinstance(K, ExplicitMatrix):
        raise TypeError("ExplicitMatrix kernels have no pointwise evaluator to mollify")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_support(K, a, eps_a, x)
    _check_support(K, b, eps_b, y)
    key_a = (a.family, a.base_radius, eps_a, *x)
    key_b = (b.family, b.base_radius, eps_b, *y)
    if key_b < key_a:
        a, eps_a, x, b, eps_b, y = b, eps_b, y, a, eps_a, x
    if method == "spectral":
        if not isinstance(K, GffSquare):
            raise TypeError("the spectral route needs a GffSquare kernel")
        return spectral_cov(K, a, eps_a, b, eps_b, x, y)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    if isinstance(K, GffSquare) and not K.normalised:
        raise ValueError("the quadrature route needs amplitude = 2 pi (log + smooth split)")
    return (log_part(a, eps_a, b, eps_b, x - y, rel_tol, max_refine)
            + smooth_part(K, a, eps_a, b, eps_b, x, y))


def variance_profile(K: KernelSpec, m: MollifierSpec, ladder: ScaleLadder, x, **kw) -> np.ndarray:
    """``Var h_eps(x)`` at every ladder scale."""
    return np.array([mollified_cov(K, m, e, m, e, x, x, **kw) for e in ladder.scales])


@dataclass(frozen=True)
class PsdCheck:
    ok: bool
    jitter: float | None
    factor: np.ndarray | None = None


def psd_check(matrix) -> PsdCheck:
    """Cholesky with diagonal jitter escalating from 0 to 1e-8; smallest success wins."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("psd_check needs a square matrix")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("psd_check needs a symmetric matrix")
    eye = np.eye(len(A))
    for jit in JITTERS:
        try:
            L = np.linalg.cholesky(A + jit * eye)
        except np.linalg.LinAlgError:
            continue
        return PsdCheck(True, jit, L)
    return PsdCheck(False, None, None)


# ---------------------------------------------------------------------------
# interpolated log parts for dense pair sums

class LogPartTable:
    """``delta -> E log(1/|delta + U - V|)`` tabulated near the origin.

    Radial pairs are tabulated on ``|delta|`` and are exact (mean-value property)
    once the supports are disjoint.  Box pairs are tabulated on ``(|d1|, |d2|)``
    out to three times the joint reach; beyond that the far-field error is
    ``O((reach/|delta|)^4)`` because squares have isotropic second moments.
    """

    def __init__(self, a: MollifierSpec, eps_a: float, b: MollifierSpec, eps_b: float,
                 n: int = 129, rel_tol: float = 1e-4):
        self.reach = a.reach(eps_a) + b.reach(eps_b)
        self.radial = a.is_radial and b.is_radial
        if self.radial:
            self.far = self.reach
            r = np.linspace(0.0, self.far, n)
            vals = [log_part(a, eps_a, b, eps_b, (ri, 0.0), rel_tol) for ri in r]
            self._spline = CubicSpline(r, vals)
        else:
            self.far = 3.0 * self.reach
            m = max(33, n // 2)
            s = np.linspace(0.0, self.far, m)
            grid = np.empty((m, m))
            for i in range(m):
                for k in range(i, m):
                    grid[i, k] = grid[k, i] = log_part(a, eps_a, b, eps_b, (s[i], s[k]), rel_tol)
            self._interp = RegularGridInterpolator((s, s), grid, method="cubic")

    def __call__(self, delta) -> np.ndarray:
        d = np.abs(np.asarray(delta, dtype=float))
        r = np.hypot(d[..., 0], d[..., 1])
        out = np.empty(r.shape)
        far = r >= self.far
        with np.errstate(divide="ignore"):
            out[far] = -np.log(r[far])
        near = ~far
        if self.radial:
            out[near] = self._spline(r[near])
        else:
            pts = np.minimum(d[near], self.far)
            out[near] = self._interp(pts)
        return out


def gram_matrix(K: KernelSpec, atoms, method: str = "quadrature") -> np.ndarray:
    """Covariance matrix of mollified point evaluations ``atoms = [(m, eps, x), ...]``."""
    n = len(atoms)
    C = np.empty((n, n))
    for i, (ma, ea, xa) in enumerate(atoms):
        for k in range(i, n):
            mb, eb, xb = atoms[k]
            C[i, k] = C[k, i] = mollified_cov(K, ma, ea, mb, eb, xa, xb, method=method)
    return C

