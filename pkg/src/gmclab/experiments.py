"""Experiment suites: moment checks, truncation and Cauchy scans, universality,
thick points, Girsanov, KL martingale and kernel validation.

Every function returns :class:`~gmclab.report.Table` objects whose rows carry
a value, its jackknife standard error and the replicate count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .covariance import LogPartTable, gram_matrix, mollified_cov, spectral_cov
from .ensemble import EnsembleResult
from .field import (PURPOSE_COEFFICIENTS, PURPOSE_TILTED, Atom, JointGaussianSpec, build_kl_basis,
                    cholesky_joint_samples, sample_coefficients, tilt_shift)
from .geometry import Region, ScaleLadder
from .kernels import GffSquare, KernelSpec, PureLog, gff_smooth_part, g_eval
from .measure import NO_TRUNCATION
from .mollifiers import MollifierSpec
from .report import Table
from .stats import ess, jackknife, jackknife_cov, jackknife_ratio, loglog_slope_se

DIM = 2
ESS_MIN = 100.0


class LowEssWarning(RuntimeWarning):
    """Importance weights leave fewer than ``ESS_MIN`` effective samples."""


def exponent_margin(gamma: float, alpha: float, dim: int = DIM) -> float:
    """``(2 gamma - alpha)^2 / 2 - gamma^2 + d``; positive means the truncated second moment stays bounded."""
    return (2.0 * gamma - alpha) ** 2 / 2.0 - gamma ** 2 + dim


def check_truncation_exponents(gamma: float, alpha: float, dim: int = DIM):
    if not alpha > gamma:
        raise ValueError(f"truncation needs alpha > gamma (alpha = {alpha}, gamma = {gamma})")
    if not exponent_margin(gamma, alpha, dim) > 0:
        raise ValueError(f"exponent condition (2 gamma - alpha)^2/2 - gamma^2 > -d fails for "
                         f"gamma = {gamma}, alpha = {alpha}")


# ---------------------------------------------------------------------------
# moments

@dataclass(frozen=True)
class Moments:
    mean: float
    mean_se: float
    second: float
    second_se: float
    variance: float
    variance_se: float
    n: int


def moment_estimates(values) -> Moments:
    """Mean, second moment and unbiased variance with leave-one-out SEs."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    m1 = jackknife(x)
    m2 = jackknife(x * x)
    if n < 3 or np.all(x == x[0]):
        var = float(np.var(x, ddof=1)) if not np.all(x == x[0]) else 0.0
        return Moments(m1.value, m1.se, m2.value, m2.se, var, 0.0, n)
    s1, s2 = x.sum(), (x * x).sum()
    loo = ((s2 - x * x) - (s1 - x) ** 2 / (n - 1)) / (n - 2)
    var_se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return Moments(m1.value, m1.se, m2.value, m2.se, float(np.var(x, ddof=1)), var_se, n)


MOMENT_COLUMNS = ("gamma", "mollifier", "eps", "replicates", "mean", "mean_se",
                  "second_moment", "second_moment_se", "variance", "variance_se")


def moments_table(res: EnsembleResult, gammas=None, mollifiers=None) -> Table:
    spec = res.spec
    gammas = spec.gammas if gammas is None else gammas
    mollifiers = spec.mollifiers if mollifiers is None else mollifiers
    rows = []
    for gamma in gammas:
        g = res.gamma_index(gamma)
        for m in mollifiers:
            a = res.mollifier_index(m)
            for s, eps in enumerate(spec.ladder.scales):
                mo = moment_estimates(res.i_eps[:, g, a, s])
                rows.append((float(gamma), m.family, float(eps), mo.n, mo.mean, mo.mean_se,
                             mo.second, mo.second_se, mo.variance, mo.variance_se))
    return Table("moments", MOMENT_COLUMNS, rows)


# ---------------------------------------------------------------------------
# analytic second moment

@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite reference measure ``sum_i masses_i delta_{points_i}``."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        if len(self.points) != len(self.masses):
            raise ValueError("one mass per point")

    @property
    def total(self) -> float:
        return float(self.masses.sum())


@lru_cache(maxsize=4)
def _smooth_pairs(K, region: Region) -> np.ndarray:
    """``g`` between all pairs of cell centres, shape ``(n, n, n, n)``."""
    n = region.grid_n
    if isinstance(K, PureLog):
        return np.zeros((n, n, n, n))
    pts = region.points()
    out = np.empty((n * n, n * n))
    for i in range(0, n * n, n):
        out[i:i + n] = gff_smooth_part(pts[i:i + n, None, :], pts[None, :, :], n_images=3)
    out = out.reshape(n, n, n, n)
    out.setflags(write=False)
    return out


def second_moment_analytic(K: KernelSpec, m: MollifierSpec, eps: float, gamma: float, region,
                           outer_n: int = 64, refine: int = 4, near: float = 4.0) -> float:
    """``E I_eps^2 = int int exp(gamma^2 Cov(h_eps(x), h_eps(y))) dx dy`` for the untruncated field.

    ``region`` a :class:`Region`: double midpoint sum on an ``outer_n`` grid.  The
    covariance is split as ``L(x - y) + g(x, y)`` with ``L`` the tabulated log
    part; pairs closer than ``near * eps`` average ``exp(gamma^2 L)`` over a
    ``refine x refine`` sub-grid of both cells.
    ``region`` a :class:`PointMeasure`: exact enumeration over the atoms.
    """
    g2 = gamma * gamma
    if isinstance(region, PointMeasure):
        if gamma == 0.0:
            return region.total ** 2
        C = gram_matrix(K, [(m, eps, p) for p in region.points])
        return float(region.masses @ np.exp(g2 * C) @ region.masses)
    if gamma == 0.0:
        return region.area ** 2
    if isinstance(K, GffSquare) and not K.normalised:
        raise ValueError("the log + smooth split needs amplitude = 2 pi")
    outer = region.with_grid(outer_n)
    n = outer_n
    hx, hy = region.rect.width / n, region.rect.height / n
    table = LogPartTable(m, eps, m, eps)
    lag = np.arange(-(n - 1), n)
    DX, DY = np.meshgrid(lag * hx, lag * hy, indexing="ij")
    with np.errstate(over="ignore"):
        E = np.exp(g2 * table(np.stack([DX, DY], axis=-1)))
    close = np.hypot(DX, DY) <= near * eps
    if refine > 1 and np.any(close):
        d = np.arange(-(refine - 1), refine)
        wd = (refine - np.abs(d)) / refine ** 2
        sub = np.zeros(int(close.sum()))
        base = np.stack([DX[close], DY[close]], axis=-1)
        for d1, w1 in zip(d, wd):
            for d2, w2 in zip(d, wd):
                shift = np.array([d1 * hx / refine, d2 * hy / refine])
                sub += w1 * w2 * np.exp(g2 * table(base + shift))
        E[close] = sub
    G = _smooth_pairs(K, outer)
    i = np.arange(n)
    idx = i[:, None] - i[None, :] + n - 1                  # lag index of (i, l)
    total = 0.0
    for i1 in range(n):
        # pairs (i1, i2) x (l1, l2): E[i1 - l1, i2 - l2] * exp(g2 * G[i1, i2, l1, l2])
        Ei = E[idx[i1]][:, idx]                            # (l1, i2, l2)
        total += float(np.sum(np.exp(g2 * G[i1]) * Ei.transpose(1, 0, 2)))
    return total * (hx * hy) ** 2


def second_moment_table(K, m, scales, gammas, region, **kw) -> Table:
    rows = [(float(g), m.family, float(e), second_moment_analytic(K, m, e, g, region, **kw))
            for g in gammas for e in scales]
    return Table("second_moment_analytic", ("gamma", "mollifier", "eps", "second_moment"), rows)


def second_moment_comparison(res: EnsembleResult, K, m, scales, gamma, region, **kw) -> Table:
    """MC vs analytic ``E I^2``; ``ok`` means within ``max(5%, 4 SE)``."""
    g = res.gamma_index(gamma)
    a = res.mollifier_index(m)
    rows = []
    for eps in scales:
        s = res.spec.ladder.index(eps)
        mc = jackknife(res.i_eps[:, g, a, s] ** 2)
        an = second_moment_analytic(K, m, eps, gamma, region, **kw)
        tol = max(0.05 * an, 4.0 * mc.se)
        rows.append((float(gamma), m.family, float(eps), mc.n, mc.value, mc.se, an,
                     (mc.value - an) / an, abs(mc.value - an) <= tol))
    return Table("second_moment_check",
                 ("gamma", "mollifier", "eps", "replicates", "mc", "mc_se", "analytic", "rel_diff", "ok"), rows)


# ---------------------------------------------------------------------------
# truncation and Cauchy scans

def _j_columns(res: EnsembleResult, gamma: float, alpha: float, m=None):
    g = res.gamma_index(gamma)
    a = res.mollifier_index(res.spec.mollifiers[0] if m is None else m)
    I = res.i_eps[:, g, a, :]
    if alpha == NO_TRUNCATION:
        return I, I
    return I, res.j_eps[:, g, res.alpha_index(alpha), a, :]


def truncated_second_moment_scan(res: EnsembleResult, gamma: float, alpha: float):
    """``E J^2`` and ``E I^2`` per ladder scale, plus fitted log-log slopes vs ``eps``.

    Returns ``(scan, slopes)``.
    """
    if alpha != NO_TRUNCATION:
        check_truncation_exponents(gamma, alpha)
    I, J = _j_columns(res, gamma, alpha)
    scales = res.spec.ladder.scales
    rows = []
    for s, eps in enumerate(scales):
        ei, ej = jackknife(I[:, s] ** 2), jackknife(J[:, s] ** 2)
        rows.append((float(gamma), float(alpha), float(eps), ei.n, ei.value, ei.se, ej.value, ej.se))
    scan = Table("truncation_scan", ("gamma", "alpha", "eps", "replicates", "second_moment_I",
                                     "second_moment_I_se", "second_moment_J", "second_moment_J_se"), rows)
    si = loglog_slope_se(scales, I ** 2)
    sj = loglog_slope_se(scales, J ** 2)
    margin = exponent_margin(gamma, alpha) if alpha != NO_TRUNCATION else float("nan")
    slopes = Table("truncation_slopes", ("gamma", "alpha", "slope_I", "slope_I_se", "slope_J", "slope_J_se",
                                         "theory_slope_I", "exponent_margin"),
                   [(float(gamma), float(alpha), si.value, si.se, sj.value, sj.se,
                     -(gamma ** 2 - DIM), margin)])
    return scan, slopes


def cauchy_l2_scan(res: EnsembleResult, gamma: float, alpha: float, pairs=None) -> Table:
    """``E (J_eps - J_delta)^2`` on coupled samples, direct and by the three-term expansion."""
    if alpha != NO_TRUNCATION:
        check_truncation_exponents(gamma, alpha)
    _, J = _j_columns(res, gamma, alpha)
    scales = res.spec.ladder.scales
    if pairs is None:
        pairs = list(zip(scales[:-1], scales[1:]))
    rows = []
    for eps, delta in pairs:
        a, b = J[:, res.spec.ladder.index(eps)], J[:, res.spec.ladder.index(delta)]
        direct = jackknife((a - b) ** 2)
        three = np.mean(a * a) + np.mean(b * b) - 2.0 * np.mean(a * b)
        rows.append((float(gamma), float(alpha), float(eps), float(delta), direct.n,
                     direct.value, direct.se, float(three), float(abs(direct.value - three))))
    return Table("cauchy_scan", ("gamma", "alpha", "eps", "delta", "replicates", "direct", "direct_se",
                                 "three_term", "identity_gap"), rows)


def truncation_loss(res: EnsembleResult, gamma: float, alpha: float, eps: float) -> Table:
    """``E[I - J]`` against ``E I`` at one scale."""
    g = res.gamma_index(gamma)
    s = res.spec.ladder.index(eps)
    bad = jackknife(res.bad[:, g, res.alpha_index(alpha), 0, s])
    tot = jackknife(res.i_eps[:, g, 0, s])
    return Table("truncation_loss", ("gamma", "alpha", "eps", "replicates", "bad_mass", "bad_mass_se",
                                     "mass", "mass_se", "ratio"),
                 [(float(gamma), float(alpha), float(eps), bad.n, bad.value, bad.se, tot.value, tot.se,
                   bad.value / tot.value)])


# ---------------------------------------------------------------------------
# universality

def universality_gap(res: EnsembleResult, gamma: float, a, b) -> Table:
    """Coupled mass gaps ``E|I^a - I^b|`` and ``E (I^a - I^b)^2`` per ladder scale."""
    g = res.gamma_index(gamma)
    ia, ib = res.mollifier_index(a), res.mollifier_index(b)
    rows = []
    for s, eps in enumerate(res.spec.ladder.scales):
        d = res.i_eps[:, g, ia, s] - res.i_eps[:, g, ib, s]
        e1, e2 = jackknife(np.abs(d)), jackknife(d * d)
        rows.append((float(gamma), res.spec.mollifiers[ia].family, res.spec.mollifiers[ib].family,
                     float(eps), e1.n, e1.value, e1.se, e2.value, e2.se))
    return Table("universality", ("gamma", "mollifier_a", "mollifier_b", "eps", "replicates",
                                  "mean_abs_gap", "mean_abs_gap_se", "mean_sq_gap", "mean_sq_gap_se"), rows)


# ---------------------------------------------------------------------------
# thick points

def thick_point_profile(K: KernelSpec, gamma: float, x0, scales, m: MollifierSpec,
                        replicates: int, seed: int, modes=("tilted", "size_biased")) -> Table:
    """Law of ``h_eps(x0) / log(1/eps)`` under the Cameron-Martin tilt by the same atom.

    ``tilted``: exact joint-Gaussian samples shifted by ``gamma * Var``.
    ``size_biased``: independent plain samples reweighted by ``exp(gamma h - gamma^2 Var / 2)``.
    """
    atoms = [Atom(m, e, x0) for e in scales]
    spec = JointGaussianSpec.build(K, atoms)
    plain = cholesky_joint_samples(spec, seed, range(replicates))
    fresh = cholesky_joint_samples(spec, seed, range(replicates), purpose=PURPOSE_TILTED)
    gxx = g_eval(K, x0, x0) if not isinstance(K, PureLog) else 0.0
    rows = []
    for s, eps in enumerate(scales):
        L = math.log(1.0 / eps)
        var = spec.cov[s, s]
        analytic = gamma * var / L
        pred = gamma * (L + gxx) / L
        for mode in modes:
            if mode == "tilted":
                h = fresh[:, s] + tilt_shift(spec, atoms[s], gamma)[s]
                est = jackknife(h / L)
                sd = float(np.std(h / L, ddof=1))
                n_eff = float(replicates)
            elif mode == "size_biased":
                h = plain[:, s]
                w = np.exp(gamma * h - 0.5 * gamma * gamma * var)
                est = jackknife_ratio(w * h / L, w)
                n_eff = ess(w)
                mean = est.value
                sd = float(np.sqrt(max(np.sum(w * (h / L - mean) ** 2) / w.sum(), 0.0)))
                if n_eff < ESS_MIN:
                    warnings.warn(f"size-biased profile at eps={eps}: ESS {n_eff:.0f} < {ESS_MIN:.0f}",
                                  LowEssWarning, stacklevel=2)
            else:
                raise ValueError(f"unknown mode {mode!r}")
            rows.append((mode, float(gamma), float(eps), replicates, est.value, est.se, sd,
                         analytic, pred, n_eff))
    return Table("thick_points", ("mode", "gamma", "eps", "replicates", "normalised_mean",
                                  "normalised_mean_se", "normalised_sd", "analytic_mean",
                                  "log_plus_g_mean", "ess"), rows)


def typical_thickness_check(res: EnsembleResult) -> Table:
    """Fraction of grid points where the ladder event from ``eps0`` down to ``eps_min`` fails."""
    spec = res.spec
    rows = []
    for ia, alpha in enumerate(spec.thickness_alphas):
        for ie, e0 in enumerate(spec.thickness_eps0):
            est = jackknife(res.fail[:, ia, ie])
            rows.append((float(alpha), float(e0), float(spec.ladder.eps_min), est.n, est.value, est.se))
    return Table("typical_thickness", ("alpha", "eps0", "eps", "replicates", "p_fail", "p_fail_se"), rows)


# ---------------------------------------------------------------------------
# Girsanov / backend cross-checks on the KL probe tables

def atom_mode_matrix(basis, atoms) -> np.ndarray:
    """Rows ``sqrt(lam_k) (f_k * theta_eps)(x)`` so that ``atom values = matrix @ xi``."""
    return np.stack([tilt_shift(basis, a, 1.0) for a in atoms])


def kl_atom_samples(K: GffSquare, atoms, replicates: int, seed: int, shift=None,
                    purpose: int = PURPOSE_COEFFICIENTS, basis=None, chunk: int = 64) -> np.ndarray:
    """KL-backend values of ``atoms`` for replicates ``0..R-1``; ``shift`` is added to the coefficients.

    Streams match the ensemble, so replicate ``r`` sees the same field as ensemble replicate ``r``.
    """
    if basis is None:
        basis = build_kl_basis(K, unmollified=False, grid_tables=False)
    V = atom_mode_matrix(basis, atoms)
    out = np.empty((replicates, len(atoms)))
    for s in range(0, replicates, chunk):
        rs = range(s, min(s + chunk, replicates))
        Xi = np.stack([sample_coefficients(basis.size, seed, r, purpose).xi for r in rs])
        if shift is not None:
            Xi = Xi + shift
        out[s:s + len(rs)] = Xi @ V.T
    return out


def _cov_se(X):
    n, k = X.shape
    cov = np.empty((k, k))
    se = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            c, s = jackknife_cov(X[:, i], X[:, j])
            cov[i, j] = cov[j, i] = c
            se[i, j] = se[j, i] = s
    return cov, se


def girsanov_check(K: GffSquare, gamma: float, tilt_atom: Atom, targets, replicates: int, seed: int):
    """Target means three ways (analytic ``gamma * Cov``, exact tilt, importance weights)
    and tilted vs plain covariances.  Returns ``(means, covariances)``."""
    atoms = list(targets)
    if tilt_atom not in atoms:
        atoms.append(tilt_atom)
    t = atoms.index(tilt_atom)
    basis = build_kl_basis(K, unmollified=False, grid_tables=False)
    shift = tilt_shift(basis, tilt_atom, gamma)
    plain = kl_atom_samples(K, atoms, replicates, seed, basis=basis)
    tilted = kl_atom_samples(K, atoms, replicates, seed, shift=shift, purpose=PURPOSE_TILTED, basis=basis)
    var_t = float(np.sum(atom_mode_matrix(basis, [tilt_atom]) ** 2))
    w = np.exp(gamma * plain[:, t] - 0.5 * gamma * gamma * var_t)
    n_eff = ess(w)
    if n_eff < ESS_MIN:
        warnings.warn(f"Girsanov importance weights: ESS {n_eff:.0f} < {ESS_MIN:.0f}", LowEssWarning, stacklevel=2)
    rows = []
    for i, a in enumerate(atoms):
        analytic = gamma * mollified_cov(K, a.mollifier, a.eps, tilt_atom.mollifier, tilt_atom.eps, a.x, tilt_atom.x)
        trunc = gamma * spectral_cov(K, a.mollifier, a.eps, tilt_atom.mollifier, tilt_atom.eps, a.x, tilt_atom.x)
        te = jackknife(tilted[:, i])
        ie = jackknife_ratio(w * plain[:, i], w)
        pe = jackknife(plain[:, i])
        rows.append((i, a.mollifier.family, a.eps, a.x[0], a.x[1], i == t, replicates, analytic, trunc,
                     te.value, te.se, ie.value, ie.se, pe.value, pe.se, n_eff))
    means = Table("girsanov_means", ("atom", "mollifier", "eps", "x", "y", "is_tilt_atom", "replicates",
                                     "analytic", "analytic_truncated", "tilted_mean", "tilted_mean_se",
                                     "weighted_mean", "weighted_mean_se", "plain_mean", "plain_mean_se",
                                     "ess"), rows)
    cp, sp = _cov_se(plain)
    ct, st = _cov_se(tilted)
    crow = []
    for i in range(len(atoms)):
        for j in range(i, len(atoms)):
            comb = math.hypot(sp[i, j], st[i, j])
            crow.append((i, j, replicates, cp[i, j], sp[i, j], ct[i, j], st[i, j],
                         (ct[i, j] - cp[i, j]) / comb if comb > 0 else 0.0))
    covs = Table("girsanov_covariances", ("atom_i", "atom_j", "replicates", "cov_plain", "cov_plain_se",
                                          "cov_tilted", "cov_tilted_se", "z"), crow)
    return means, covs


def backend_cross_validation(K: GffSquare, atoms, replicates: int, seed: int) -> Table:
    """KL-backend and Cholesky-oracle empirical covariances against the quadrature Gram matrix."""
    atoms = list(atoms)
    spec = JointGaussianSpec.build(K, atoms)
    spectral = gram_matrix(K, [(a.mollifier, a.eps, a.x) for a in atoms], method="spectral")
    kl = kl_atom_samples(K, atoms, replicates, seed)
    chol = cholesky_joint_samples(spec, seed, range(replicates))
    ck, sk = _cov_se(kl)
    cc, sc = _cov_se(chol)
    rows = []
    for i in range(len(atoms)):
        for j in range(i, len(atoms)):
            gram = spec.cov[i, j]
            rows.append((i, j, replicates, float(gram), float(spectral[i, j]), ck[i, j], sk[i, j],
                         cc[i, j], sc[i, j], (ck[i, j] - gram) / sk[i, j], (cc[i, j] - gram) / sc[i, j],
                         (spectral[i, j] - gram) / abs(gram) if gram != 0 else 0.0))
    return Table("backend_covariance", ("atom_i", "atom_j", "replicates", "gram", "gram_truncated",
                                        "kl_cov", "kl_cov_se", "cholesky_cov", "cholesky_cov_se",
                                        "kl_z", "cholesky_z", "truncation_offset"), rows)


# ---------------------------------------------------------------------------
# KL martingale

def kl_martingale_scan(res: EnsembleResult, gamma: float):
    """``E mu^n(S)`` per level, increment variances and the coupled gap to ``I_{eps_min}``.

    Returns ``(levels, gap)``.
    """
    g = res.gamma_index(gamma)
    mu = res.mu[:, g, :]
    levels = res.spec.n_levels
    rows = []
    for k, n in enumerate(levels):
        est = jackknife(mu[:, k])
        if k + 1 < len(levels):
            inc = mu[:, k + 1] - mu[:, k]
            iv = moment_estimates(inc)
            c, cse = jackknife_cov(inc, mu[:, k])
            nxt, ivar, ivse, corr_z = levels[k + 1], iv.variance, iv.variance_se, (c / cse if cse > 0 else 0.0)
        else:
            nxt, ivar, ivse, corr_z = None, None, None, None
        rows.append((float(gamma), int(n), est.n, est.value, est.se, nxt, ivar, ivse, corr_z))
    table = Table("kl_martingale", ("gamma", "n", "replicates", "mean", "mean_se", "next_n",
                                    "increment_variance", "increment_variance_se", "increment_cov_z"), rows)
    I = res.i_eps[:, g, 0, -1]
    gap = jackknife(np.abs(mu[:, -1] - I))
    mean_i = jackknife(I)
    gap_t = Table("kl_gap", ("gamma", "n", "eps", "replicates", "mean_abs_gap", "mean_abs_gap_se",
                             "mean_mass", "ratio"),
                  [(float(gamma), int(levels[-1]), float(res.spec.ladder.eps_min), gap.n, gap.value, gap.se,
                    mean_i.value, gap.value / mean_i.value if mean_i.value else 0.0)])
    return table, gap_t


# ---------------------------------------------------------------------------
# kernel validation

def validate_kernel(K: GffSquare, mollifiers, ladder: ScaleLadder, x=(0.5, 0.5), n_sep: int = 4):
    """Covariance-asymptotics tables: variance profile, two-point law, cross-mollifier bound."""
    x = np.asarray(x, dtype=float)
    gxx = float(g_eval(K, x, x))
    prof, two, cross, radii = [], [], [], []
    for m in mollifiers:
        radii.append((m.family, m.base_radius, m.self_energy_offset))
        for eps in ladder.scales:
            v = mollified_cov(K, m, eps, m, eps, x, x)
            vs = mollified_cov(K, m, eps, m, eps, x, x, method="spectral")
            pred = math.log(1.0 / eps) + gxx
            prof.append((m.family, float(eps), v, vs, pred, v - pred, vs - pred))
        for eps in ladder.scales:
            lo, hi = 3.0 * eps, ladder.eps0
            seps = np.geomspace(lo, hi, n_sep) if lo <= hi else np.array([])
            for r in seps:
                for ang in (0.0, math.pi / 4):
                    y = x + r * np.array([math.cos(ang), math.sin(ang)])
                    c = mollified_cov(K, m, eps, m, eps, x, y)
                    pred = math.log(1.0 / r) + float(g_eval(K, x, y))
                    two.append((m.family, float(eps), float(r), ang, "separated", c, pred, c - pred,
                                abs(c - pred) <= 0.1))
            for r in (0.0, 0.5 * eps, eps):
                y = x + np.array([r, 0.0])
                c = mollified_cov(K, m, eps, m, eps, x, y)
                pred = math.log(1.0 / eps) + gxx
                two.append((m.family, float(eps), float(r), 0.0, "near", c, pred, c - pred, c - pred <= 0.1))
    # cross-mollifier bound with eps' = eps v |x-y|/3
    for mp in mollifiers:
        for m in mollifiers:
            for eps in ladder.scales:
                for r in (0.0, eps, 3.0 * eps, 6.0 * eps):
                    epsp = max(eps, r / 3.0)
                    if epsp > ladder.eps0:
                        continue
                    y = x + np.array([r, 0.0])
                    if not (K.domain.contains(y, margin=m.reach(eps))
                            and K.domain.contains(x, margin=mp.reach(epsp))):
                        continue
                    c = mollified_cov(K, mp, epsp, m, eps, x, y)
                    gb = max(gxx, float(g_eval(K, y, y)), float(g_eval(K, x, y)))
                    bound = math.log(1.0 / epsp) + gb + 0.2
                    cross.append((mp.family, m.family, float(eps), float(r), float(epsp), c, bound, c <= bound))
    tables = [
        Table("mollifier_radii", ("mollifier", "base_radius", "self_energy_offset"), radii),
        Table("variance_profile", ("mollifier", "eps", "variance", "variance_truncated", "log_plus_g",
                                   "deviation", "deviation_truncated"), prof),
        Table("two_point", ("mollifier", "eps", "separation", "angle", "regime", "cov", "prediction",
                            "deviation", "ok"), two),
        Table("cross_mollifier", ("mollifier_coarse", "mollifier_fine", "eps", "separation", "eps_coarse",
                                  "cov", "bound", "ok"), cross),
    ]
    return tables
