import math

import numpy as np
import pytest

import oracles as O
from degradation_doe.designs import ApproximateDesign, product_design, uniform_grid_design
from degradation_doe.destructive import (
    WeightedTimeModel,
    destructive_efficiency,
    destructive_optimal_design,
    pi_star,
    pi_star_curves,
    sensitivity_curves,
    sigma_ratio,
    two_point_time_design,
    weighted_time_design,
)
from degradation_doe.errors import DomainError


def sd_at(t, s1, s2, rho, se):
    return math.sqrt(s1**2 + 2 * rho * s1 * s2 * t + s2**2 * t**2 + se**2)


@pytest.mark.parametrize("t", [1.05, 1.58, 3.0, 10.25, 80.0])
@pytest.mark.parametrize("ratio", [0.5, 1.0, 1.22, 3.0])
def test_pi_star_vs_scalar_oracle(t, ratio):
    assert pi_star(t, 1.0, ratio) == pytest.approx(O.weighted_two_point_pi(t, 1.0, ratio), abs=1e-7)


def test_pi_star_domain():
    with pytest.raises(DomainError):
        pi_star(0.8, 1.0, 1.0)


def test_example1_values(ex1):
    s0 = sd_at(0, 0.114, 0.105, -0.143, 0.048)
    s1 = sd_at(1, 0.114, 0.105, -0.143, 0.048)
    assert sigma_ratio(ex1.varcomps, ex1.model.time_basis) == pytest.approx(s1 / s0, rel=1e-12)
    rep = destructive_optimal_design(ex1)
    assert rep.extra["pi_star"] == pytest.approx(O.weighted_two_point_pi(rep.extra["t_half"], s0, s1), abs=1e-7)
    assert rep.criterion.certificate_gap <= 1e-6


def test_example2_values(ex2):
    rep = destructive_optimal_design(ex2)
    s0, s1 = sd_at(0, 0.7, 0.7, 0, 0.85), sd_at(1, 0.7, 0.7, 0, 0.85)
    pi = O.weighted_two_point_pi((14.39 - 3.31) / 1.081, s0, s1)
    assert rep.extra["pi_star"] == pytest.approx(pi, abs=1e-7)
    w1, _ = O.two_point_extrapolation(-0.5)
    w2, _ = O.two_point_extrapolation(-0.4)
    assert rep.design.weight_at([1, 1, 1]) == pytest.approx(w1 * w2 * pi, abs=1e-7)
    assert rep.design.weight_at([0, 0, 0]) == pytest.approx((1 - w1) * (1 - w2) * (1 - pi), abs=1e-7)
    assert rep.design.size == 8
    assert rep.criterion.certificate_gap <= 1e-6


def test_lp_agrees_with_closed_form(ex1):
    wtm = WeightedTimeModel.from_scenario(ex1)
    t = 1.5838873865203356
    closed = weighted_time_design(wtm, t, method="closed")
    lp = weighted_time_design(wtm, t, method="lp")
    assert lp.weight_at(1.0) == pytest.approx(closed.weight_at(1.0), abs=1e-7)


def test_interior_median_uses_lp(ex1):
    wtm = WeightedTimeModel.from_scenario(ex1)
    d = weighted_time_design(wtm, 0.6)
    assert d.size == 1 and d.support[0, 0] == pytest.approx(0.6)


def test_product_is_better_than_alternatives(ex1):
    rep = destructive_optimal_design(ex1)
    xi = ApproximateDesign([0, 1], [0.5, 0.5])
    for tau in (uniform_grid_design(2), uniform_grid_design(6), two_point_time_design(0.5)):
        assert destructive_efficiency(product_design(xi, tau), ex1, rep.design) <= 1.0 + 1e-12


def test_sensitivity_curves(ex1):
    tc, rc = sensitivity_curves(ex1)
    assert np.nanmax(tc.eff_optimal) <= 1 + 1e-12
    # the nominal plan is optimal at the nominal median
    i = np.argmin(np.abs(tc.probe - 1.5838873865203356))
    assert tc.eff_optimal[i] > 0.99
    assert np.all(tc.eff_optimal >= tc.eff_uniform6 - 1e-12)
    assert np.isnan(rc.eff_uniform6).any()
    assert np.all(np.isfinite(rc.eff_optimal))
    assert tc.to_csv().startswith("probe_value,eff_optimal")


def test_pi_star_curve_limits(ex1):
    by_t, by_r = pi_star_curves(ex1)
    assert by_t[0, 1] > 0.98
    r = sigma_ratio(ex1.varcomps, ex1.model.time_basis)
    assert by_t[-1, 1] == pytest.approx(r / (1 + r), abs=0.01)
    assert np.all(np.diff(by_r[:, 1]) > 0)
