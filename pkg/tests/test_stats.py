import math

import numpy as np
import pytest

from gmclab.stats import ess, jackknife, jackknife_cov, jackknife_ratio, loglog_slope, loglog_slope_se


def test_constant_data_has_zero_se():
    e = jackknife([2.5, 2.5, 2.5])
    assert e.value == 2.5 and e.se == 0.0 and e.n == 3


def test_mean_se_equals_classical_formula():
    x = np.random.default_rng(0).normal(size=50)
    e = jackknife(x)
    assert math.isclose(e.se, x.std(ddof=1) / math.sqrt(50), rel_tol=1e-12)
    brute = jackknife(x, lambda a: a.mean())
    assert math.isclose(brute.se, e.se, rel_tol=1e-10)


def test_needs_two_replicates():
    with pytest.raises(ValueError):
        jackknife([1.0])


def test_ratio_and_cov_match_brute_force():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=40), rng.uniform(1, 2, size=40)
    r = jackknife_ratio(a, b)
    brute = jackknife(np.c_[a, b], lambda m: m[:, 0].sum() / m[:, 1].sum())
    assert math.isclose(r.value, brute.value) and math.isclose(r.se, brute.se, rel_tol=1e-10)
    c, se = jackknife_cov(a, b)
    bc = jackknife(np.c_[a, b], lambda m: np.cov(m[:, 0], m[:, 1])[0, 1])
    assert math.isclose(c, bc.value) and math.isclose(se, bc.se, rel_tol=1e-8)


def test_ess_and_slopes():
    assert ess(np.ones(10)) == 10.0
    eps = 2.0 ** -np.arange(3, 8)
    assert math.isclose(loglog_slope(eps, eps ** -0.5), -0.5)
    s = loglog_slope_se(eps, np.tile(eps ** 2, (5, 1)))
    assert math.isclose(s.value, 2.0) and s.se < 1e-12
