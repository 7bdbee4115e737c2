import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmclab.covariance import (LogPartTable, gram_matrix, log_part, mollified_cov, psd_check,
                               spectral_cov, variance_profile)
from gmclab.geometry import Rect, Region, ScaleLadder
from gmclab.kernels import (CoincidentPointsError, ExplicitMatrix, GffSquare, PureLog, g_eval,
                            gff_green, kernel_eval)
from gmclab.mollifiers import FAMILIES, MollifierSpec, unit_self_energy

GFF = GffSquare()
CENTRE = (0.5, 0.5)
LADDER = ScaleLadder()


# -- geometry ----------------------------------------------------------------

def test_ladder_scales_and_index():
    assert np.allclose(LADDER.scales, 2.0 ** -np.arange(3, 8))
    assert LADDER.eps_min == 2.0 ** -7
    assert LADDER.index(2.0 ** -5) == 2
    with pytest.raises(KeyError):
        LADDER.index(0.1)


@pytest.mark.parametrize("kw", [dict(eps0=1.5), dict(ratio=1.0), dict(count=0)])
def test_ladder_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        ScaleLadder(**kw)


def test_region_grid_is_equal_area():
    r = Region()
    pts = r.points()
    assert pts.shape == (128 * 128, 2)
    assert math.isclose(r.cell_area * r.grid_n ** 2, r.area)
    assert math.isclose(r.area, 0.36, rel_tol=1e-12)
    assert r.rect.contains(pts).all()


def test_region_margin_fits_default_mollifiers():
    margin = Region().rect.margin_inside(GFF.domain)
    for fam in ("circle", "box", "truncated_gaussian"):
        assert margin >= MollifierSpec(fam).reach(LADDER.eps0)


# -- kernels -----------------------------------------------------------------

def test_pure_log_closed_forms():
    K = PureLog()
    assert kernel_eval(K, (0.0, 0.0), (1.0, 0.0)) == 0.0
    assert math.isclose(kernel_eval(K, (0.0, 0.0), (0.0, math.exp(-2.0))), 2.0, abs_tol=1e-14)
    assert g_eval(K, (0.1, 0.2), (0.3, 0.4)) == 0.0


def test_kernel_eval_rejects_coincident_points():
    with pytest.raises(CoincidentPointsError):
        kernel_eval(GFF, CENTRE, CENTRE)


def test_gff_series_matches_high_cutoff_oracle():
    x, y = np.array(CENTRE), np.array([0.5, 0.5 + math.exp(-3.0)])
    oracle = kernel_eval(GffSquare(2048), x, y)
    value = kernel_eval(GffSquare(256), x, y)
    assert abs(value - oracle) <= 1e-2
    # the oracle itself sits on log(1/r) + g
    assert abs(oracle - (3.0 + g_eval(GFF, x, y))) <= 1e-2


def test_green_closed_form_matches_series_off_diagonal():
    x, y = np.array([0.3, 0.6]), np.array([0.55, 0.45])
    assert abs(kernel_eval(GffSquare(2048), x, y) - gff_green(x, y)) < 2e-3


def test_g_diagonal_matches_offset_extrapolation():
    x = np.array(CENTRE)
    d = np.array([2.0 ** -8, 2.0 ** -9])
    vals = [g_eval(GFF, x, x + [h, 0.0]) for h in d]
    extrap = vals[1] + (vals[1] - vals[0]) * d[1] / (d[0] - d[1])
    diag = g_eval(GFF, x, x)
    assert abs(diag - extrap) <= 5e-3
    assert math.isclose(diag, -0.6173857, abs_tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(0.05, 0.95)] * 4))
def test_g_and_kernel_symmetric(c):
    x, y = np.array(c[:2]), np.array(c[2:])
    assert g_eval(GFF, x, y) == g_eval(GFF, y, x)
    if not np.array_equal(x, y):
        K = GffSquare(32)
        assert math.isclose(kernel_eval(K, x, y), kernel_eval(K, y, x), rel_tol=1e-13, abs_tol=1e-13)


def test_explicit_matrix_diagonal_extrapolation():
    pts = np.array([[0.5, 0.5]] + [[0.5 + h, 0.5] for h in (0.01, 0.02, 0.03, 0.04)])
    C = gff_green(pts[:, None, :], pts[None, :, :] + np.where(np.eye(5)[..., None] > 0, [1e-9, 0], 0))
    np.fill_diagonal(C, 10.0)
    K = ExplicitMatrix(pts, C)
    assert abs(g_eval(K, pts[0], pts[0]) - g_eval(GFF, pts[0], pts[0])) < 5e-3


def test_gff_eigen_ordering():
    modes = GFF.kl_modes[:3]
    assert [tuple(m) for m in modes] == [(1, 1), (1, 2), (2, 1)]
    grid = GFF.eigenvalue_grid()
    assert math.isclose(grid[0, 0], 1.0 / math.pi)


# -- mollifiers --------------------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("level", [-1, 0, 2])
def test_rule_mass_is_exactly_one(family, level):
    for eps in LADDER.scales:
        _, w = MollifierSpec(family).rule(eps, level)
        assert math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-14)
        assert (w >= 0).all()


@pytest.mark.parametrize("family", FAMILIES)
def test_default_radius_has_unit_log_capacity(family):
    m = MollifierSpec(family)
    assert abs(m.self_energy_offset) < 1e-6
    assert math.isclose(unit_self_energy(family), math.log(m.base_radius), abs_tol=1e-6)


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        MollifierSpec("triangle")


# -- covariance --------------------------------------------------------------

def test_circle_variance_matches_log_plus_g():
    g = g_eval(GFF, CENTRE, CENTRE)
    circle = MollifierSpec("circle")
    for eps in LADDER.scales:
        v = mollified_cov(GFF, circle, eps, circle, eps, CENTRE, CENTRE)
        assert abs(v - (math.log(1 / eps) + g)) <= 2e-2


@pytest.mark.parametrize("family", ["circle", "box", "truncated_gaussian", "bump"])
def test_variance_profile_uniform_offset(family):
    m = MollifierSpec(family)
    ladder = LADDER if family != "bump" else ScaleLadder(2.0 ** -4, 0.5, 4)
    prof = variance_profile(GFF, m, ladder, CENTRE)
    dev = prof - np.log(1 / ladder.scales) - g_eval(GFF, CENTRE, CENTRE)
    assert np.abs(dev).max() <= 5e-2
    assert dev.max() - dev.min() <= 3e-2


def test_box_and_bump_profiles_differ_by_constant():
    ladder = ScaleLadder(2.0 ** -4, 0.5, 4)
    diff = (variance_profile(GFF, MollifierSpec("box"), ladder, CENTRE)
            - variance_profile(GFF, MollifierSpec("bump"), ladder, CENTRE))
    assert diff.max() - diff.min() <= 5e-2


def test_variance_profile_single_scale():
    m = MollifierSpec("box")
    one = ScaleLadder(2.0 ** -4, 0.5, 1)
    assert variance_profile(GFF, m, one, CENTRE)[0] == mollified_cov(GFF, m, 2.0 ** -4, m, 2.0 ** -4, CENTRE, CENTRE)


def test_separated_pure_log_matches_brute_force():
    K = PureLog()
    box, circ = MollifierSpec("box"), MollifierSpec("truncated_gaussian")
    x, y = np.zeros(2), np.array([0.25, 0.1])
    eps = 2.0 ** -4
    assert np.hypot(*y) >= 3 * eps
    value = mollified_cov(K, box, eps, circ, eps, x, y)
    pa, wa = box.rule(eps, 2)
    pb, wb = circ.rule(eps, 2)
    d = (pa[:, None, :] + x) - (pb[None, :, :] + y)
    brute = float(wa @ -np.log(np.hypot(d[..., 0], d[..., 1])) @ wb)
    assert abs(value - brute) <= 5e-2
    assert abs(value + math.log(np.hypot(*y))) <= 5e-2


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(FAMILIES[:1] + FAMILIES[2:]), st.sampled_from(FAMILIES[:1] + FAMILIES[2:]),
       st.integers(3, 6), st.integers(3, 6), st.floats(0.3, 0.7), st.floats(0.3, 0.7))
def test_mollified_cov_exactly_symmetric(fa, fb, ja, jb, u, v):
    a, b = MollifierSpec(fa), MollifierSpec(fb)
    x, y = (0.5, 0.5), (u, v)
    assert (mollified_cov(GFF, a, 2.0 ** -ja, b, 2.0 ** -jb, x, y)
            == mollified_cov(GFF, b, 2.0 ** -jb, a, 2.0 ** -ja, y, x))


def test_two_point_law_on_separation_range():
    m = MollifierSpec("circle")
    eps = 2.0 ** -6
    x = np.array(CENTRE)
    for r in np.geomspace(3 * eps, LADDER.eps0, 5):
        y = x + [r, 0.0]
        c = mollified_cov(GFF, m, eps, m, eps, x, y)
        assert abs(c - (math.log(1 / r) + g_eval(GFF, x, y))) <= 0.1
    for r in (0.0, eps / 2, eps):
        c = mollified_cov(GFF, m, eps, m, eps, x, x + [r, 0.0])
        assert c <= math.log(1 / eps) + g_eval(GFF, x, x) + 0.1


def test_spectral_route_close_to_quadrature_for_resolved_scale():
    m = MollifierSpec("circle")
    eps = 2.0 ** -5
    q = mollified_cov(GFF, m, eps, m, eps, CENTRE, CENTRE)
    s = spectral_cov(GFF, m, eps, m, eps, CENTRE, CENTRE)
    assert 0 <= q - s <= 1e-2


def test_log_part_table_matches_direct_values():
    m = MollifierSpec("box")
    eps = 2.0 ** -5
    table = LogPartTable(m, eps, m, eps)
    for d in [(0.0, 0.0), (0.01, 0.005), (0.03, 0.02), (0.2, 0.1)]:
        assert abs(table(np.array(d)) - log_part(m, eps, m, eps, d)) < 2e-4


def test_quadrature_route_rejects_explicit_matrix():
    K = ExplicitMatrix(np.array([[0.5, 0.5], [0.6, 0.5]]), np.eye(2))
    m = MollifierSpec("circle")
    with pytest.raises(TypeError):
        mollified_cov(K, m, 0.1, m, 0.1, (0.5, 0.5), (0.6, 0.5))


def test_support_leaving_domain_rejected():
    m = MollifierSpec("box")
    with pytest.raises(ValueError):
        mollified_cov(GFF, m, 0.125, m, 0.125, (0.05, 0.5), (0.5, 0.5))


# -- psd check ---------------------------------------------------------------

def test_psd_identity_needs_no_jitter():
    chk = psd_check(np.eye(4))
    assert chk.ok and chk.jitter == 0.0


def test_psd_negative_eigenvalue_fails():
    A = np.diag([1.0, 2.0, -1.0])
    assert not psd_check(A).ok


def test_psd_gram_of_twenty_probes():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.25, 0.75, size=(20, 2))
    fams = [MollifierSpec(f) for f in ("circle", "box", "truncated_gaussian")]
    atoms = [(fams[i % 3], 2.0 ** -(3 + i % 4), p) for i, p in enumerate(pts)]
    chk = psd_check(gram_matrix(GFF, atoms))
    assert chk.ok and chk.jitter <= 1e-10


def test_psd_rejects_asymmetric():
    with pytest.raises(ValueError):
        psd_check(np.array([[1.0, 0.5], [0.0, 1.0]]))
