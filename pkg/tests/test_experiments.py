import math

import numpy as np
import pytest

from gmclab import gates
from gmclab.covariance import gram_matrix, mollified_cov
from gmclab.ensemble import EnsembleSpec, run_ensemble
from gmclab.experiments import (PointMeasure, cauchy_l2_scan, exponent_margin, girsanov_check,
                                kl_martingale_scan, moment_estimates, moments_table, second_moment_analytic,
                                thick_point_profile, truncated_second_moment_scan, truncation_loss,
                                typical_thickness_check, universality_gap)
from gmclab.field import Atom
from gmclab.geometry import Region, ScaleLadder
from gmclab.kernels import GffSquare
from gmclab.measure import NO_TRUNCATION
from gmclab.mollifiers import MollifierSpec

GFF = GffSquare()
CIRCLE, BOX = MollifierSpec("circle"), MollifierSpec("box")


@pytest.fixture(scope="module")
def small_ensemble():
    spec = EnsembleSpec(kernel=GffSquare(128), ladder=ScaleLadder(2.0 ** -3, 0.5, 3), region=Region(grid_n=32),
                        gammas=(0.0, 0.5, 1.0), alphas=(1.5, NO_TRUNCATION), n_levels=(4, 16, 64),
                        thickness_alphas=(NO_TRUNCATION, 0.1, 2.0), thickness_eps0=(0.125, 0.0625),
                        replicates=40, seed=3)
    return run_ensemble(spec)


# -- moments -------------------------------------------------------------------

def test_constant_ensemble_moments():
    m = moment_estimates([1.7, 1.7])
    assert (m.mean, m.mean_se, m.second_se, m.variance, m.variance_se) == (1.7, 0.0, 0.0, 0.0, 0.0)


def test_variance_jackknife_matches_brute_force():
    from gmclab.stats import jackknife
    x = np.random.default_rng(2).gamma(2.0, size=30)
    m = moment_estimates(x)
    brute = jackknife(x, lambda a: np.var(a, ddof=1))
    assert math.isclose(m.variance_se, brute.se, rel_tol=1e-10)


def test_zero_gamma_moments_exact(small_ensemble):
    for r in moments_table(small_ensemble, gammas=(0.0,)).records():
        assert r["mean"] == 0.36 and r["mean_se"] == 0.0
        assert r["second_moment"] == pytest.approx(0.1296, abs=1e-16) and r["second_moment_se"] == 0.0


def test_second_moment_zero_gamma_is_area_squared():
    assert second_moment_analytic(GFF, CIRCLE, 2.0 ** -5, 0.0, Region()) == pytest.approx(0.1296, abs=1e-16)


def test_second_moment_two_atom_enumeration():
    x, y = (0.4, 0.5), (0.6, 0.55)
    eps, gamma = 2.0 ** -4, 1.0
    C = lambda a, b: mollified_cov(GFF, CIRCLE, eps, CIRCLE, eps, a, b)
    expected = 0.25 * (math.exp(gamma ** 2 * C(x, x)) + 2 * math.exp(gamma ** 2 * C(x, y))
                       + math.exp(gamma ** 2 * C(y, y)))
    got = second_moment_analytic(GFF, CIRCLE, eps, gamma, PointMeasure([x, y], [0.5, 0.5]))
    assert math.isclose(got, expected, rel_tol=1e-12)
    assert second_moment_analytic(GFF, CIRCLE, eps, 0.0, PointMeasure([x, y], [0.5, 0.5])) == 1.0


@pytest.mark.slow
def test_second_moment_plateau_scaling():
    vals = [second_moment_analytic(GFF, CIRCLE, 2.0 ** -j, 1.0, Region()) for j in (4, 5, 6)]
    assert vals[0] < vals[1] < vals[2]
    bound = 2.0 ** (1.0 - 2 + 0.1) * 1.1
    assert (vals[2] - vals[1]) / (vals[1] - vals[0]) <= bound


# -- truncation and Cauchy -------------------------------------------------------

def test_exponent_arithmetic():
    assert math.isclose(exponent_margin(1.6, 1.8) - 2, -1.58)
    with pytest.raises(ValueError):
        truncated_second_moment_scan(None, 1.6, 1.5)


def test_infinite_alpha_columns_coincide(small_ensemble):
    scan, _ = truncated_second_moment_scan(small_ensemble, 1.0, NO_TRUNCATION)
    assert scan.column("second_moment_I") == scan.column("second_moment_J")
    assert scan.column("second_moment_I_se") == scan.column("second_moment_J_se")


def test_cauchy_equal_scales_and_identity(small_ensemble):
    same = cauchy_l2_scan(small_ensemble, 1.0, 1.5, pairs=[(0.0625, 0.0625)])
    assert same.column("direct") == [0.0]
    t = cauchy_l2_scan(small_ensemble, 1.0, 1.5)
    assert len(t.rows) == 2 and max(t.column("identity_gap")) <= 1e-12


def test_truncation_loss_bounds(small_ensemble):
    r = truncation_loss(small_ensemble, 1.0, 1.5, 2.0 ** -5).records()[0]
    assert 0 <= r["bad_mass"] <= r["mass"]
    assert truncation_loss(small_ensemble, 1.0, NO_TRUNCATION, 2.0 ** -5).records()[0]["bad_mass"] == 0.0


# -- universality ----------------------------------------------------------------

def test_universality_trivial_cases(small_ensemble):
    assert set(universality_gap(small_ensemble, 1.0, CIRCLE, CIRCLE).column("mean_abs_gap")) == {0.0}
    t = universality_gap(small_ensemble, 0.0, CIRCLE, BOX)
    assert set(t.column("mean_abs_gap")) == {0.0} and set(t.column("mean_sq_gap")) == {0.0}


# -- thick points ----------------------------------------------------------------

def test_zero_gamma_profile_centred():
    t = thick_point_profile(GFF, 0.0, (0.5, 0.5), [2.0 ** -3, 2.0 ** -5], CIRCLE, 2000, 1)
    for r in t.records():
        assert abs(r["normalised_mean"]) <= 4 * r["normalised_mean_se"]
        assert r["analytic_mean"] == 0.0


def test_tilted_mean_matches_analytic():
    scales = [2.0 ** -3, 2.0 ** -5, 2.0 ** -7]
    t = thick_point_profile(GFF, 1.0, (0.5, 0.5), scales, CIRCLE, 4000, 2, modes=("tilted",))
    for r in t.records():
        assert abs(r["normalised_mean"] - r["analytic_mean"]) <= 4 * r["normalised_mean_se"]
        assert abs(r["analytic_mean"] - r["log_plus_g_mean"]) <= 2e-2 / math.log(1 / r["eps"])


def test_unknown_profile_mode():
    with pytest.raises(ValueError):
        thick_point_profile(GFF, 1.0, (0.5, 0.5), [0.125], CIRCLE, 10, 0, modes=("sideways",))


# -- typical thickness -----------------------------------------------------------

def test_infinite_alpha_never_fails(small_ensemble):
    t = typical_thickness_check(small_ensemble)
    assert all(r["p_fail"] == 0.0 for r in t.where(alpha=NO_TRUNCATION))


def test_thickness_monotone_gate_on_small_ensemble(small_ensemble):
    t = typical_thickness_check(small_ensemble)
    fails = {r["alpha"]: r["p_fail"] for r in t.where(eps0=0.125)}
    assert fails[0.1] > fails[2.0]


# -- Girsanov ------------------------------------------------------------------

@pytest.fixture(scope="module")
def girsanov_atoms():
    tilt = Atom(CIRCLE, 2.0 ** -4, (0.5, 0.5))
    return tilt, [Atom(BOX, 2.0 ** -4, (0.55, 0.5)), Atom(CIRCLE, 2.0 ** -3, (0.4, 0.6))]


def test_zero_gamma_girsanov(girsanov_atoms):
    tilt, targets = girsanov_atoms
    means, covs = girsanov_check(GffSquare(128), 0.0, tilt, targets, 500, 4)
    for r in means.records():
        assert r["analytic"] == 0.0
        assert abs(r["tilted_mean"]) <= 4 * r["tilted_mean_se"]
        assert r["weighted_mean"] == pytest.approx(r["plain_mean"])


def test_girsanov_tilt_atom_mean_is_gamma_variance(girsanov_atoms):
    tilt, targets = girsanov_atoms
    K = GffSquare(128)
    means, covs = girsanov_check(K, 0.8, tilt, targets, 1000, 5)
    own = next(r for r in means.records() if r["is_tilt_atom"])
    assert own["analytic"] == pytest.approx(0.8 * mollified_cov(K, CIRCLE, tilt.eps, CIRCLE, tilt.eps, tilt.x, tilt.x))
    assert gates.girsanov(means, covs).passed


# -- KL martingale ---------------------------------------------------------------

def test_zero_gamma_martingale(small_ensemble):
    levels, gap = kl_martingale_scan(small_ensemble, 0.0)
    assert set(levels.column("mean")) == {0.36}
    assert set(v for v in levels.column("increment_variance") if v is not None) == {0.0}


def test_martingale_increments_orthogonal(small_ensemble):
    levels, _ = kl_martingale_scan(small_ensemble, 1.0)
    assert all(abs(z) <= 4 for z in levels.column("increment_cov_z") if z is not None)


# -- statistical properties on the shared default ensemble -----------------------

@pytest.mark.slow
def test_easy_regime_second_moments_flat(acceptance_ensemble):
    scan, _ = truncated_second_moment_scan(acceptance_ensemble, 1.0, 1.8)
    for col in ("second_moment_I", "second_moment_J"):
        v, se = np.array(scan.column(col)), np.array(scan.column(col + "_se"))
        assert v.max() - v.min() <= 4 * se.max()


@pytest.mark.slow
def test_truncation_loss_regression(acceptance_ensemble):
    t = truncation_loss(acceptance_ensemble.head(2000), 1.0, 1.5, 2.0 ** -6)
    assert gates.truncation_loss(t, 1.0, 1.5).passed


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="relative loss at alpha = 1.5 is about 10%; see decisions ledger")
def test_truncation_loss_nominal_five_percent(acceptance_ensemble):
    r = truncation_loss(acceptance_ensemble.head(2000), 1.0, 1.5, 2.0 ** -6).records()[0]
    assert r["bad_mass"] <= 0.05 * r["mass"]


@pytest.mark.slow
def test_thickness_decreases_with_eps0(acceptance_ensemble):
    t = typical_thickness_check(acceptance_ensemble)
    assert gates.thickness_monotone(t).passed
    a, b = t.where(alpha=2.0, eps0=0.125)[0], t.where(alpha=2.0, eps0=0.03125)[0]
    assert b["p_fail"] <= a["p_fail"] + 2 * math.hypot(a["p_fail_se"], b["p_fail_se"])


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="one-sided ladder event fails at about 64%, not near 1; see ledger")
def test_tiny_alpha_fails_almost_everywhere(acceptance_ensemble):
    t = typical_thickness_check(acceptance_ensemble)
    assert t.where(alpha=0.1, eps0=0.125)[0]["p_fail"] >= 0.9


@pytest.mark.slow
def test_kl_martingale_mean_flat_at_smaller_levels(acceptance_ensemble):
    levels, _ = kl_martingale_scan(acceptance_ensemble.head(2000), 1.0)
    for r in levels.records():
        assert abs(r["mean"] - 0.36) <= 4 * r["mean_se"]
        if r["increment_cov_z"] is not None:
            assert abs(r["increment_cov_z"]) <= 4


@pytest.mark.slow
def test_cauchy_nominal_factor_two_at_gamma_1_6(acceptance_ensemble):
    t = cauchy_l2_scan(acceptance_ensemble, 1.6, 1.8)
    first = t.where(eps=2.0 ** -4)[0]["direct"]
    last = t.where(eps=2.0 ** -6)[0]["direct"]
    assert first > last
    assert first / last >= gates.NOMINAL["cauchy_factor"]
