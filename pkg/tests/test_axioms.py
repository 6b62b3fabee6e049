import math

import numpy as np
import pytest

from homsamp.axioms import (estimate_quasi_triangle, estimate_theta, fit_exponent,
                            verify_ball_power, verify_dimension, verify_regularity, verify_space)
from homsamp.space import PointCloudSpace, SpaceParams, discretize


def test_torus_quasi_triangle_is_one():
    for budget in (10, 500):
        rep = estimate_quasi_triangle(discretize("torus-1d", 512), budget=budget)
        assert rep.estimated_constant == 1.0
        assert rep.passed


def test_squared_distance_is_a_quasi_metric_with_a_two():
    # rho = |x - y|^2 on [0,1]: the midpoint gives rho(x,y) / (rho(x,z)+rho(z,y)) = 2
    base = discretize("torus-1d", 64)
    pts = np.linspace(0, 0.2, 65)[:, None]

    class Squared(PointCloudSpace):
        def rho(self, a, b):
            return np.abs(np.asarray(a)[..., 0] - np.asarray(b)[..., 0]) ** 2

    params = SpaceParams(A=2.0, C_reg=2.0, d=0.5, theta=0.5, diam=0.04)
    s = Squared("torus-1d", 65, pts, np.full(65, 1 / 65), params)
    rep = estimate_quasi_triangle(s, budget=20000)
    assert 1.5 < rep.estimated_constant <= 2.0 + 1e-12
    assert rep.passed
    assert base.params.A == 1.0


def test_fit_exponent_recovers_power():
    r = np.geomspace(0.01, 1, 9)
    assert fit_exponent(r, 3.0 * r ** 2.5) == pytest.approx(2.5, abs=1e-12)


def test_dimension_fits():
    torus = verify_dimension(discretize("torus-1d", 4096), np.geomspace(0.01, 0.45, 12))
    assert torus.details["fitted_d"] == pytest.approx(1.0, abs=0.05)
    assert torus.passed
    aniso = verify_dimension(discretize("anisotropic-square", shape=(64, 64)),
                             np.geomspace(0.2, 0.49, 30))
    assert aniso.details["fitted_d"] == pytest.approx(3.0, abs=0.15)


def test_dimension_radii_must_be_resolvable():
    s = discretize("torus-1d", 64)
    with pytest.raises(ValueError):
        verify_dimension(s, [s.nn_distance / 2, 0.1])
    with pytest.raises(ValueError):
        verify_dimension(s, [0.1, 0.6])


@pytest.mark.parametrize("gen,kw", [("torus-1d", {"resolution": 1024}),
                                    ("cantor-dset", {"depth": 8}),
                                    ("anisotropic-square", {"shape": (32, 32)})])
def test_regularity_constant_of_metrics(gen, kw):
    # for a genuine metric the reverse triangle inequality gives constant <= 1
    rep = verify_regularity(discretize(gen, **kw))
    assert rep.estimated_constant <= 1.0 + 1e-9
    assert rep.passed


def test_theta_estimate_for_metric():
    assert estimate_theta(discretize("torus-1d", 2048)) == pytest.approx(1.0, abs=0.1)


def test_verify_space_reports():
    s = discretize("cantor-dset", depth=8)
    reps = verify_space(s, 1000, np.geomspace(3.0 ** -6, 0.9, 10))
    assert [r.axiom for r in reps] == ["quasi-triangle", "dimension", "regularity"]
    assert all(r.passed for r in reps)
    assert all(isinstance(r.to_dict(), dict) for r in reps)


def test_budget_must_be_positive():
    s = discretize("torus-1d", 64)
    with pytest.raises(ValueError):
        verify_space(s, 0, [0.1])


def test_ball_power_growth_exponent():
    s = discretize("torus-1d", 2048)
    for a in (-0.5, 0.0, 1.0, 2.0):
        rep = verify_ball_power(s, a, np.geomspace(0.05, 0.4, 5), budget=8)
        assert rep.details["fitted_exponent"] == pytest.approx(a + 1, abs=0.05)
        assert rep.estimated_constant < 1.1


def test_ball_power_rejects_alpha_near_minus_d():
    with pytest.raises(ValueError):
        verify_ball_power(discretize("torus-1d", 64), -0.99, [0.1, 0.2])


def test_reports_serialize_infinite_values():
    rep = estimate_quasi_triangle(discretize("torus-1d", 32), budget=4)
    assert math.isfinite(rep.to_dict()["estimated_constant"])
