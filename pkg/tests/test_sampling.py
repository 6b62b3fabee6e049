import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homsamp import battery as bat
from homsamp.sampling import (KAPPA_LIMIT, UNRESOLVABLE, CalibrationError, SamplingPlan,
                              calibrate_kappa, cardinalities, discrete_norm, exponents,
                              kappa_grid, make_plan, proof_diagnostics, required_level,
                              sample_operator, sampling_error, sampling_profile,
                              verify_sampling_theorem)
from homsamp.space import SpaceParams, lp_norm

LINE = SpaceParams(A=1.0, C_reg=2.0, d=1.0, theta=1.0, diam=0.5)
P_VALUES = (1.0, 2.0, math.inf)


def _x(b):
    return b.space.points[:, 0]


# ---------------------------------------------------------------- level formula

def test_level_formula_example():
    assert exponents(2, 1, 1) == (1.0, 2.0)
    assert required_level(0.5, 1.0, 2, LINE, kappa=4.0) == 6


def test_level_formula_zero_log():
    assert required_level(0.5, 1.0, 2, LINE, kappa=0.5) == 0


def test_exponents_instance():
    assert exponents(1, 2, 0.5) == (4.0, 2.0)


def test_level_formula_infinite_p():
    assert exponents(math.inf, 1, 1) == (1.0, math.inf)
    assert required_level(0.5, 1.0, math.inf, LINE, kappa=0.25) == 0
    with pytest.raises(ValueError):
        required_level(0.5, 1.0, math.inf, LINE, kappa=1.0)


@pytest.mark.parametrize("kw", [{"epsilon": 0}, {"epsilon": 1}, {"K": 0.5}, {"kappa": 0}])
def test_level_formula_rejects(kw):
    args = {"epsilon": 0.5, "K": 1.0, "p": 2, "space_params": LINE, "kappa": 1.0, **kw}
    with pytest.raises(ValueError):
        required_level(**args)


def test_level_formula_monotone_on_grid():
    Ks = np.geomspace(1, 1e4, 25)
    eps = np.linspace(0.01, 0.99, 25)
    for p in (1.0, 2.0, 3.0):
        L = np.array([[required_level(e, K, p, LINE, 1.0) for e in eps] for K in Ks])
        assert np.all(np.diff(L, axis=0) >= 0)
        assert np.all(np.diff(L, axis=1) <= 0)


def test_plan_rejects_inconsistent_exponents():
    with pytest.raises(ValueError):
        SamplingPlan(0.5, 1, 2, alpha=2, beta=2, kappa=1, level=0, d=1, theta=1)


def test_plan_clamping(torus256):
    sys_ = torus256.system
    assert make_plan(LINE, sys_, 0.5, 1.0, 2, 1e-9).clamped == "below"
    high = make_plan(LINE, sys_, 0.1, 1e6, 2, 1e6)
    assert high.clamped == "above" and high.level == sys_.j_max


# ---------------------------------------------------------------- sampling operator

def test_constants_are_fixed(torus256):
    b = torus256
    for l in b.system.levels:
        assert np.array_equal(sample_operator(b.system, np.full(b.space.n, 2.5), l),
                              np.full(b.space.n, 2.5))


def test_cube_indicator_is_fixed(torus256):
    b = torus256
    f = (b.system.labels[3] == 5).astype(float)
    assert np.array_equal(sample_operator(b.system, f, 3), f)
    for p in P_VALUES:
        assert sampling_error(b.space, b.system, f, 3, p) == 0
    mass = b.system.cube_masses(b.space, 3)[5]
    assert discrete_norm(b.space, b.system, f, 3, 2) == pytest.approx(mass ** 0.5, rel=1e-14)
    assert discrete_norm(b.space, b.system, f, 3, math.inf) == 1


def test_sawtooth_staircase(torus256):
    b = torus256
    S = sample_operator(b.system, _x(b), 2)
    assert np.array_equal(np.unique(S), [0, 0.25, 0.5, 0.75])
    assert np.array_equal(S, _x(b)[b.system.centers[2]][b.system.labels[2]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), l=st.integers(0, 8))
def test_idempotent_and_identity(torus256, seed, l):
    b = torus256
    f = np.random.default_rng(seed).standard_normal(b.space.n)
    S = sample_operator(b.system, f, l)
    assert np.array_equal(sample_operator(b.system, S, l), S)
    for p in P_VALUES:
        disc = discrete_norm(b.space, b.system, f, l, p)
        assert disc == lp_norm(b.space, S, p)
        # triangle consequence, asserted without slack
        assert abs(lp_norm(b.space, f, p) - disc) <= sampling_error(b.space, b.system, f, l, p)


def test_constant_norms(torus256):
    b = torus256
    for p in P_VALUES:
        assert discrete_norm(b.space, b.system, np.full(b.space.n, -4.0), 2, p) == pytest.approx(4)
        assert sampling_error(b.space, b.system, np.full(b.space.n, -4.0), 2, p) == 0


def test_sine_error_decay(torus4096):
    b = torus4096
    f = np.sin(2 * np.pi * _x(b))
    err = [sampling_error(b.space, b.system, f, l, 2) for l in range(2, 11)]
    assert all(e1 / e0 <= 0.6 for e0, e1 in zip(err, err[1:]))


def test_level_out_of_range(torus256):
    with pytest.raises(ValueError):
        sample_operator(torus256.system, np.zeros(256), 99)


# ---------------------------------------------------------------- theorem

def test_constant_passes_with_equality(torus256):
    b = torus256
    for eps in (0.5, 0.1):
        rep = verify_sampling_theorem(b.space, b.system, b.frame, np.full(256, 3.0), eps, 1e-3)
        assert rep.error == 0 and rep.discrete_norm == pytest.approx(rep.lp_f, rel=1e-14)
        assert rep.passed and math.isfinite(rep.K_f)
        assert rep.recheck() == (True, True)


def test_zero_function_rejected(torus256):
    b = torus256
    with pytest.raises(ValueError, match="zero function"):
        verify_sampling_theorem(b.space, b.system, b.frame, np.zeros(256), 0.5, 1.0)


def test_unresolvable_status(torus256):
    b = torus256
    rep = verify_sampling_theorem(b.space, b.system, b.frame, np.sin(2 * np.pi * _x(b)), 0.1,
                                  KAPPA_LIMIT, K=1e6)
    assert rep.status == UNRESOLVABLE
    assert rep.pass_error is None and not rep.passed


def test_larger_epsilon_selects_coarser_level(torus256):
    b = torus256
    f = np.sin(2 * np.pi * _x(b))
    lo = verify_sampling_theorem(b.space, b.system, b.frame, f, 0.9, 1.0)
    hi = verify_sampling_theorem(b.space, b.system, b.frame, f, 0.1, 1.0)
    assert lo.plan.level <= hi.plan.level


def test_calibrated_sine_passes(torus4096):
    b = torus4096
    fns = bat.build_battery(b.space, bat.sampling_family(), b.system)
    family = {fn.name: fn.values for fn in fns}
    cal = calibrate_kappa(b.space, b.system, b.frame, family, 2.0, [0.5, 0.25, 0.1])
    rep = verify_sampling_theorem(b.space, b.system, b.frame, family["sin(m=1)"], 0.25, cal.kappa)
    assert rep.pass_error and rep.pass_sandwich


def test_constants_calibrate_to_grid_minimum(torus256):
    b = torus256
    cal = calibrate_kappa(b.space, b.system, b.frame, {"c": np.ones(256)}, 2.0, [0.5, 0.1])
    assert cal.grid_index == kappa_grid()[0]
    assert cal.kappa <= 1 / KAPPA_LIMIT * 1.25


def test_calibration_monotone_in_family(torus256):
    b = torus256
    smooth = {"sin1": np.sin(2 * np.pi * _x(b))}
    rough = {**smooth, "saw": _x(b)}
    a = calibrate_kappa(b.space, b.system, b.frame, smooth, 2.0, [0.5, 0.25])
    c = calibrate_kappa(b.space, b.system, b.frame, rough, 2.0, [0.5, 0.25])
    assert c.kappa >= a.kappa


def test_calibration_failure_reports_worst(torus256):
    b = torus256
    with pytest.raises(CalibrationError) as info:
        calibrate_kappa(b.space, b.system, b.frame, {"s": np.sin(2 * np.pi * _x(b))}, 2.0,
                        [0.1], K=1e30)
    assert info.value.worst is not None


def test_profile_reuse_matches_direct(torus256):
    b = torus256
    f = np.cos(4 * np.pi * _x(b))
    prof = sampling_profile(b.space, b.system, b.frame, f, 1.0)
    a = verify_sampling_theorem(b.space, b.system, b.frame, f, 0.25, 2.0, p=1.0)
    c = verify_sampling_theorem(b.space, b.system, b.frame, f, 0.25, 2.0, p=1.0, profile=prof)
    assert a.to_dict() == c.to_dict()


# ---------------------------------------------------------------- diagnostics

def test_diagnostics_zero_function(torus256):
    b = torus256
    zero = proof_diagnostics(b.space, b.system, b.frame, np.zeros(256), 4, 2.0)
    sine = proof_diagnostics(b.space, b.system, b.frame, np.sin(2 * np.pi * _x(b)), 4, 2.0)
    assert all(not e.any() for e in zero.E.values())
    assert zero.R_measured == sine.R_measured
    assert zero.lambda_constants == sine.lambda_constants
    assert all(np.array_equal(zero.lambda_counts[j], sine.lambda_counts[j]) for j in zero.E)


def test_R_on_torus(torus4096):
    b = torus4096
    card = cardinalities(b.space, b.system, 1.5, 6)
    assert card.R_measured <= 4


def test_lambda_regimes_agree_at_boundary(torus256):
    b = torus256
    card = cardinalities(b.space, b.system, 1.5, 5)
    assert card.lambda_ratio(5, 1.0, 2) == card.lambda_counts[5].max()


def test_lambda_counts_match_definition(torus256):
    # Lambda^k_{j,l} = {n : k in I_j^n}, counted from the balls directly
    b = torus256
    j, l, C = 3, 5, 1.5
    card = cardinalities(b.space, b.system, C, l)
    for k, y in enumerate(b.system.centers[j]):
        near = b.space.distances(int(y)) <= C * 2.0 ** -j
        assert card.lambda_counts[j][k] == len(np.unique(b.system.labels[l][near]))


def test_error_split(torus256):
    b = torus256
    f = np.sin(2 * np.pi * _x(b))
    rec = proof_diagnostics(b.space, b.system, b.frame, f, 4, 2.0, epsilon=0.25)
    assert rec.error == pytest.approx(rec.terms["I"] + rec.terms["II"], rel=1e-12)
    assert rec.terms["I"] == pytest.approx(rec.terms["I_a"] + rec.terms["I_b"], rel=1e-12)
    assert rec.j0_used == pytest.approx(
        4 - math.log(2 * rec.Cp_estimate / 0.25) / math.log(2), rel=1e-12)
    rows = list(rec.E_rows())
    assert len(rows) == sum(len(e) for e in rec.E.values())


def test_diagnostics_level_range(torus256):
    b = torus256
    with pytest.raises(ValueError):
        proof_diagnostics(b.space, b.system, b.frame, np.ones(256), 40, 2.0)
