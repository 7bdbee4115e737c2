"""Chaos masses from field samples.

``I_eps``  normalised exponential mass of the mollified field over the region.
``J_eps``  the same mass restricted to points whose ladder values stay below
           ``alpha log(1/eps')`` (the good event); ``I = J + bad``.
``mu_n``   the mass of the n-mode KL truncation, normalised by its own variance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import Region, ScaleLadder
from .mollifiers import MollifierSpec

EXP_CLAMP = 700.0
NO_TRUNCATION = math.inf   # alpha sentinel: the good event always holds


class ClampWarning(RuntimeWarning):
    """Exponents were clamped to avoid overflow."""


@dataclass
class ClampCounter:
    """Running count of clamped exponents; one instance per replicate task."""

    count: int = 0

    def add(self, n: int):
        self.count += int(n)


@dataclass(frozen=True)
class GmcConfig:
    gamma: float
    alpha: float = NO_TRUNCATION
    ladder: ScaleLadder = field(default_factory=ScaleLadder)
    region: Region = field(default_factory=Region)
    mollifier: MollifierSpec = field(default_factory=lambda: MollifierSpec("circle"))
    dim: int = 2

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if self.gamma >= math.sqrt(2 * self.dim):
            raise ValueError(f"gamma = {self.gamma} violates the subcritical condition gamma < sqrt(2d)"
                             f" = {math.sqrt(2 * self.dim):.4f}")
        if self.alpha != NO_TRUNCATION and not self.alpha > self.gamma:
            raise ValueError(f"truncation needs alpha > gamma (alpha = {self.alpha}, gamma = {self.gamma})")


@dataclass(frozen=True)
class MeasureSample:
    """Masses of one replicate.  ``i_eps = j_eps + bad_mass`` holds exactly."""

    i_eps: np.ndarray
    j_eps: np.ndarray
    bad_mass: np.ndarray
    mu_n: np.ndarray
    clamped: int = 0


def _weights(h, var, gamma, counter: ClampCounter | None):
    expo = gamma * np.asarray(h, dtype=float) - 0.5 * gamma * gamma * np.asarray(var, dtype=float)
    over = expo > EXP_CLAMP
    n_over = int(np.count_nonzero(over))
    if n_over:
        expo = np.minimum(expo, EXP_CLAMP)
        if counter is not None:
            counter.add(n_over)
        warnings.warn(f"{n_over} exponents clamped at {EXP_CLAMP}", ClampWarning, stacklevel=3)
    return np.exp(expo)


def total_mass(h, var, gamma: float, cell_area: float, counter: ClampCounter | None = None) -> float:
    """Riemann sum of ``exp(gamma h - gamma^2 var / 2)`` over grid cells of area ``cell_area``."""
    if gamma == 0.0:
        return float(np.size(h) * cell_area)
    return float(_weights(h, var, gamma, counter).sum() * cell_area)


def good_event(ladder_values, alpha: float, scales) -> np.ndarray | bool:
    """True where ``h_{eps_j}(x) <= alpha log(1/eps_j)`` at every listed scale.

    ``ladder_values`` has the scale axis first; ``scales`` are the ladder scales in
    ``[eps, eps0]`` to be checked, matching that axis.
    """
    if alpha == NO_TRUNCATION:
        shape = np.shape(ladder_values)[1:]
        return True if shape == () else np.ones(shape, dtype=bool)
    vals = np.asarray(ladder_values, dtype=float)
    thresh = alpha * np.log(1.0 / np.asarray(scales, dtype=float))
    thresh = thresh.reshape((-1,) + (1,) * (vals.ndim - 1))
    ok = np.all(vals <= thresh, axis=0)
    return bool(ok) if ok.ndim == 0 else ok


def truncated_mass(ladder_values, var, gamma: float, alpha: float, scales, cell_area: float,
                   counter: ClampCounter | None = None) -> float:
    """``J_eps``: mass at the finest listed scale restricted to the good event.

    ``ladder_values`` rows run over ``scales`` (coarse to fine, ending at ``eps``);
    ``var`` is the variance at ``eps``.
    """
    vals = np.asarray(ladder_values, dtype=float)
    good = good_event(vals, alpha, scales)
    if gamma == 0.0:
        return float(np.count_nonzero(good) * cell_area)
    w = _weights(vals[-1], var, gamma, counter)
    return float(w[good].sum() * cell_area)


def kl_partial_mass(basis, sample, n: int, gamma: float, region: Region | None = None,
                    counter: ClampCounter | None = None) -> float:
    """``mu^n(S)`` of the unmollified n-mode field, normalised by its truncated variance."""
    from .field import evaluate_field
    region = basis.region if region is None else region
    if region != basis.region:
        raise ValueError("the basis grid tables were built for a different region")
    if n == 0 or gamma == 0.0:
        return float(region.area)
    h = evaluate_field(basis, sample, None, None, "grid", n)
    var = _variance_cache(basis, n)
    return total_mass(h, var, gamma, region.cell_area, counter)


@lru_cache(maxsize=32)
def _variance_cache(basis, n: int) -> np.ndarray:
    from .field import truncated_variance_field
    v = truncated_variance_field(basis, n, None, None, "grid")
    v.setflags(write=False)
    return v


def measure_sample(ladder_values, variances, mu_values, gamma: float, alpha: float,
                   scales, cell_area: float) -> MeasureSample:
    """``I``, ``J`` at every ladder scale and ``mu_n`` at every level from precomputed arrays.

    ``ladder_values[s]`` and ``variances[s]`` are grid arrays at scale ``s``;
    ``mu_values`` a list of ``(h^n, var^n)`` grid pairs.
    """
    counter = ClampCounter()
    scales = np.asarray(scales, dtype=float)
    vals = np.asarray(ladder_values, dtype=float)
    j_eps = np.empty(len(scales))
    bad = np.empty(len(scales))
    good = np.ones(vals.shape[1:], dtype=bool)
    for s in range(len(scales)):
        if alpha != NO_TRUNCATION:
            good &= vals[s] <= alpha * np.log(1.0 / scales[s])
        if gamma == 0.0:
            w = np.ones(vals.shape[1:])
        else:
            w = _weights(vals[s], variances[s], gamma, counter)
        j_eps[s] = w[good].sum() * cell_area
        bad[s] = w[~good].sum() * cell_area
    mu = np.array([total_mass(h, v, gamma, cell_area, counter) for h, v in mu_values])
    # I is defined as J + J' so the decomposition is exact in floating point
    return MeasureSample(j_eps + bad, j_eps, bad, mu, counter.count)
