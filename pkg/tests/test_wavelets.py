import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homsamp.dyadic import build_dyadic_system, finest_level
from homsamp.space import PointCloudSpace, SpaceParams, discretize
from homsamp.wavelets import (CoefficientTable, IncompleteFrameError, analyze, build_frame,
                              delta_table, multiplicity, read_frame, smoothstep, synthesize,
                              tent, verify_frame, write_frame)


def _frame(n=64, C=1.5, profile="tent", solver="auto"):
    s = discretize("torus-1d", n)
    sys_ = build_dyadic_system(s, 0, finest_level(s))
    return s, build_frame(sys_, s, C, profile, solver=solver)


@pytest.fixture(scope="module")
def small():
    return _frame()


def test_profiles():
    t = np.array([0.0, 0.5, 1.0, 2.0])
    assert np.array_equal(tent(t), [1, 0.5, 0, 0])
    assert smoothstep(np.array([0.0]))[0] == 1 and smoothstep(np.array([1.0]))[0] == 0


def test_one_element_frame():
    # a single point is the only space on which one element spans everything
    params = SpaceParams(A=1.0, C_reg=2.0, d=1.0, theta=1.0, diam=0.5)
    s = PointCloudSpace("torus-1d", 1, np.zeros((1, 1)), np.array([0.5]), params)
    f = build_frame(build_dyadic_system(s, 0, 0), s)
    phi = f.phi_values(0, 0)
    norm2 = float(np.sum(s.weights * phi ** 2))
    assert np.allclose(f.dual(0, 0), phi / norm2, rtol=1e-15)
    assert analyze(f, s, phi)[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert np.allclose(synthesize(f, analyze(f, s, 3 * phi)), 3 * phi, rtol=1e-15)


def test_one_element_frame_on_many_points_is_incomplete():
    s = discretize("torus-1d", 16)
    with pytest.raises(IncompleteFrameError, match="incomplete frame"):
        build_frame(build_dyadic_system(s, 0, 0), s)


def test_missing_atomic_level_is_incomplete():
    s = discretize("torus-1d", 4096)
    with pytest.raises(IncompleteFrameError):
        build_frame(build_dyadic_system(s, 0, 8), s)


def test_dual_matches_dense_oracle(small):
    s, f = small
    Phi = f.phi.toarray()
    W = np.diag(s.weights)
    S = Phi @ Phi.T @ W
    psi = np.linalg.solve(S, Phi)
    assert np.allclose(f.dual_matrix(), psi, rtol=0, atol=1e-10 * np.abs(psi).max())
    g = np.cos(6 * np.pi * s.points[:, 0]) + s.points[:, 0]
    assert np.allclose(analyze(f, s, g).flat(), psi.T @ W @ g, atol=1e-10)


def test_frame_bounds_match_dense_oracle(small):
    s, f = small
    sw = np.sqrt(s.weights)
    Phi = f.phi.toarray()
    ev = np.linalg.eigvalsh((sw[:, None] * Phi) @ (Phi.T * sw[None, :]))
    lower, upper = f.frame_bounds
    assert lower == pytest.approx(ev[0], rel=1e-8)
    assert upper == pytest.approx(ev[-1], rel=1e-8)


def test_iterative_solver_agrees_with_dense(small):
    s, dense = small
    _, it = _frame(solver="iterative")
    g = np.random.default_rng(0).standard_normal(s.n)
    a, b = analyze(dense, s, g).flat(), analyze(it, s, g).flat()
    assert np.allclose(a, b, atol=1e-8 * np.abs(a).max())
    assert it.frame_bounds[1] == pytest.approx(dense.frame_bounds[1], rel=1e-6)
    assert it.frame_bounds[0] == pytest.approx(dense.frame_bounds[0], rel=1e-3)


def test_peak_is_exact(small):
    s, f = small
    for j in f.level_range:
        for k in range(f.system.n_cubes(j)):
            assert np.abs(f.phi_values(j, k)).max() == 2.0 ** (j / 2)


def test_verify_frame_reports(small):
    s, f = small
    reps = {r.axiom: r for r in verify_frame(f, s)}
    assert set(reps) == {"support", "size", "smoothness", "multiplicity", "frame-bounds"}
    assert all(r.passed for r in reps.values())
    assert f.C_phi >= f.C_phi_target
    assert math.isfinite(f.C_phi)
    assert f.N_measured <= 4


def test_disjoint_supports_give_multiplicity_one():
    s, f = _frame(C=0.4)
    assert f.N_measured == 1
    assert set(multiplicity(f).values()) == {1}


@pytest.mark.parametrize("profile", ["tent", "smoothstep"])
def test_reconstruction(profile):
    s, f = _frame(256, profile=profile)
    rng = np.random.default_rng(1)
    for g in (rng.standard_normal(s.n), np.sin(2 * np.pi * s.points[:, 0])):
        rec = synthesize(f, analyze(f, s, g))
        assert np.linalg.norm(rec - g) <= 1e-8 * np.linalg.norm(g)


def test_zero_and_delta(small):
    s, f = small
    assert not analyze(f, s, np.zeros(s.n)).flat().any()
    zero = CoefficientTable.zeros_like(analyze(f, s, np.ones(s.n)))
    assert not synthesize(f, zero).any()
    assert np.array_equal(synthesize(f, delta_table(f, 3, 2)), f.phi_values(3, 2))


def test_synthesize_checks_levels(small):
    s, f = small
    with pytest.raises(ValueError):
        synthesize(f, CoefficientTable((0, 1), {0: np.zeros(1), 1: np.zeros(2)}))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_analyze_is_linear(small, seed, a, b):
    s, f = small
    rng = np.random.default_rng(seed)
    g, h = rng.standard_normal(s.n), rng.standard_normal(s.n)
    lhs = analyze(f, s, a * g + b * h).flat()
    rhs = a * analyze(f, s, g).flat() + b * analyze(f, s, h).flat()
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)))


def test_coefficient_csv_round_trip(small):
    s, f = small
    c = analyze(f, s, np.sin(2 * np.pi * s.points[:, 0]))
    back = CoefficientTable.from_csv(c.to_csv())
    assert back.levels == c.levels
    assert np.array_equal(back.flat(), c.flat())


def test_coefficient_table_validation():
    with pytest.raises(ValueError):
        CoefficientTable((0, 2), {0: np.zeros(1), 2: np.zeros(4)})
    a = CoefficientTable((0, 0), {0: np.ones(1)})
    with pytest.raises(ValueError):
        a + CoefficientTable((1, 1), {1: np.ones(2)})


def test_frame_io_round_trip(small, tmp_path):
    s, f = small
    files = write_frame(f, tmp_path / "fr")
    assert len(files) == 3
    g = read_frame(tmp_path / "fr", f.system, s)
    assert (g.phi != f.phi).nnz == 0
    assert g.C_phi == f.C_phi and g.N_measured == f.N_measured
    x = np.cos(2 * np.pi * s.points[:, 0])
    assert np.allclose(analyze(g, s, x).flat(), analyze(f, s, x).flat(), rtol=0, atol=1e-13)


def test_large_frames_skip_psi_file(small, tmp_path):
    s, f = small
    files = write_frame(f, tmp_path / "fr", psi_limit=10)
    assert not any(p.endswith(".psi.csv") for p in files)


def test_bad_arguments(small):
    s, f = small
    with pytest.raises(ValueError):
        build_frame(f.system, s, 1.5, "box")
    with pytest.raises(ValueError):
        build_frame(f.system, s, 0.0)
    with pytest.raises(ValueError):
        analyze(f, s, np.zeros(s.n + 1))
