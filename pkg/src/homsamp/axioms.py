"""Empirical checks of the quasi-metric, dimension and regularity axioms."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .space import DEFAULT_TOLERANCE, PointCloudSpace, VerificationReport, ball_power_integral


def _rng(seed):
    return np.random.default_rng(seed)


def _sample_points(space: PointCloudSpace, budget: int, rng) -> np.ndarray:
    if budget >= space.n:
        return np.arange(space.n)
    return np.sort(rng.choice(space.n, size=budget, replace=False))


def estimate_quasi_triangle(space: PointCloudSpace, budget: int = 2000, seed=0,
                            tolerance: float = DEFAULT_TOLERANCE) -> VerificationReport:
    """Largest ``rho(x,y) / (rho(x,z) + rho(z,y))`` over sampled triples."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = _rng(seed)
    x = rng.integers(space.n, size=budget)
    y = rng.integers(space.n, size=budget)
    z = rng.integers(space.n, size=budget)
    keep = x != y
    x, y, z = x[keep], y[keep], z[keep]
    P = space.points
    ratio = space.rho(P[x], P[y]) / (space.rho(P[x], P[z]) + space.rho(P[z], P[y]))
    # z = x is always admissible and gives exactly 1
    best, witness = 1.0, (0, min(1, space.n - 1), 0)
    if len(ratio) and ratio.max() > best:
        i = int(np.argmax(ratio))
        best, witness = float(ratio[i]), (int(x[i]), int(y[i]), int(z[i]))
    return VerificationReport(
        axiom="quasi-triangle",
        estimated_constant=best,
        worst_witness=witness,
        passed=best <= space.params.A * tolerance,
        details={"declared": space.params.A, "samples": int(len(ratio)), "tolerance": tolerance},
    )


def _check_radii(space: PointCloudSpace, radii) -> np.ndarray:
    radii = np.asarray(sorted(set(float(r) for r in radii)))
    if radii.size == 0:
        raise ValueError("empty radii")
    lo, hi = space.nn_distance, space.params.diam
    if radii[0] <= lo or radii[-1] >= hi:
        raise ValueError(f"radii must lie strictly inside ({lo:g}, {hi:g})")
    return radii


def ball_masses(space: PointCloudSpace, centers, radii) -> np.ndarray:
    """``mu(B(x, r))`` for every center (rows) and radius (columns)."""
    out = np.empty((len(centers), len(radii)))
    for j, r in enumerate(radii):
        for i, nb in enumerate(space.balls(centers, r)):
            out[i, j] = space.weights[nb].sum()
    return out


def fit_exponent(radii, values) -> float:
    """Least-squares slope of ``log values`` against ``log radii``."""
    return float(np.polyfit(np.log(radii), np.log(values), 1)[0])


def verify_dimension(space: PointCloudSpace, radii: Sequence[float], budget: int = 256,
                     seed=0, tolerance: float = DEFAULT_TOLERANCE,
                     d_tolerance: float = 0.15) -> VerificationReport:
    """Two-sided ball-growth bound ``mu(B(x,r)) ~ r^d`` and a fitted dimension."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    radii = _check_radii(space, radii)
    centers = _sample_points(space, budget, _rng(seed))
    mass = ball_masses(space, centers, radii)
    ratio = mass / radii[None, :] ** space.params.d
    hi = np.unravel_index(np.argmax(ratio), ratio.shape)
    lo = np.unravel_index(np.argmin(ratio), ratio.shape)
    upper, lower = float(ratio[hi]), float(ratio[lo])
    if upper >= 1.0 / lower:
        best, (ci, ri) = upper, hi
    else:
        best, (ci, ri) = 1.0 / lower, lo
    d_fit = fit_exponent(radii, np.exp(np.log(mass).mean(axis=0)))
    ok_c = best <= space.params.C_reg * tolerance
    ok_d = abs(d_fit - space.params.d) <= d_tolerance
    return VerificationReport(
        axiom="dimension",
        estimated_constant=best,
        worst_witness=(int(centers[ci]), int(ri)),
        passed=bool(ok_c and ok_d),
        details={"declared_C": space.params.C_reg, "declared_d": space.params.d,
                 "fitted_d": d_fit, "ratio_min": lower, "ratio_max": upper,
                 "witness_radius": float(radii[ri]),
                 "r_min_resolvable": space.nn_distance, "tolerance": tolerance},
    )


def _regularity_triples(space: PointCloudSpace, budget: int, rng):
    half = budget // 2
    x = rng.integers(space.n, size=budget)
    y = rng.integers(space.n, size=budget)
    xp = rng.integers(space.n, size=budget)
    # half of the pairs (x, x') are close: the short-range regime decides theta
    near_r = 8.0 * space.nn_distance
    picks = np.unique(x[:half])
    for i, nb in zip(picks, space.balls(picks, near_r)):
        nb = nb[nb != i]
        if len(nb):
            slots = np.flatnonzero(x[:half] == i)
            xp[slots] = rng.choice(nb, size=len(slots))
    keep = x != xp
    return x[keep], xp[keep], y[keep]


def _regularity_terms(space, x, xp, y):
    P = space.points
    dxx = space.rho(P[x], P[xp])
    dxy = space.rho(P[x], P[y])
    dpy = space.rho(P[xp], P[y])
    return dxx, np.abs(dxy - dpy), dxy + dpy


def verify_regularity(space: PointCloudSpace, budget: int = 4000, seed=0,
                      tolerance: float = DEFAULT_TOLERANCE, theta: float | None = None
                      ) -> VerificationReport:
    """Largest ``|rho(x,y)-rho(x',y)| / [rho(x,x')^t (rho(x,y)+rho(x',y))^(1-t)]``."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    theta = space.params.theta if theta is None else theta
    x, xp, y = _regularity_triples(space, budget, _rng(seed))
    dxx, num, s = _regularity_terms(space, x, xp, y)
    ratio = num / (dxx ** theta * s ** (1.0 - theta))
    i = int(np.argmax(ratio))
    best = float(ratio[i])
    return VerificationReport(
        axiom="regularity",
        estimated_constant=best,
        worst_witness=(int(x[i]), int(xp[i]), int(y[i])),
        passed=best <= space.params.C_reg * tolerance,
        details={"theta": theta, "declared_C": space.params.C_reg,
                 "samples": int(len(ratio)), "tolerance": tolerance},
    )


def estimate_theta(space: PointCloudSpace, budget: int = 4000, seed=0, bins: int = 12) -> float:
    """Regularity exponent from the upper envelope of the rescaled increments.

    With ``u = rho(x,x')/s`` and ``v = |rho(x,y)-rho(x',y)|/s`` the axiom reads
    ``v <= C u**theta``; theta is the log-log slope of the per-bin maxima.
    """
    x, xp, y = _regularity_triples(space, budget, _rng(seed))
    dxx, num, s = _regularity_terms(space, x, xp, y)
    u, v = dxx / s, num / s
    ok = (u > 0) & (v > 0)
    lu, lv = np.log(u[ok]), np.log(v[ok])
    edges = np.linspace(lu.min(), lu.max(), bins + 1)
    px, py = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (lu >= a) & (lu <= b)
        if sel.sum() >= 3:
            k = np.argmax(lv[sel])
            px.append(lu[sel][k])
            py.append(lv[sel][k])
    if len(px) < 2:
        return 1.0
    slope = float(np.polyfit(px, py, 1)[0])
    return float(min(1.0, max(0.05, round(slope, 2))))


def verify_space(space: PointCloudSpace, budget: int, radii: Sequence[float], *,
                 tolerance: float = DEFAULT_TOLERANCE, seed=0) -> list[VerificationReport]:
    """Quasi-triangle, dimension and regularity reports for ``space``."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    return [
        estimate_quasi_triangle(space, budget=budget, seed=seed, tolerance=tolerance),
        verify_dimension(space, radii, budget=min(budget, 512), seed=seed, tolerance=tolerance),
        verify_regularity(space, budget=budget, seed=seed, tolerance=tolerance),
    ]


def verify_ball_power(space: PointCloudSpace, alpha: float, radii: Sequence[float],
                      budget: int = 64, seed=0, exponent_tolerance: float = 0.15
                      ) -> VerificationReport:
    """Growth of ``int_B(x,r) rho(z,x)^alpha dmu(z)`` against ``r^(alpha+d)``.

    The estimated constant is the spread ``c2/c1`` of the normalized integral
    over sampled centers and radii; the check passes when the fitted growth
    exponent matches ``alpha + d``.
    """
    if alpha <= -space.params.d + 0.05:
        raise ValueError("alpha too close to -d for a discretized integral")
    radii = _check_radii(space, radii)
    centers = _sample_points(space, budget, _rng(seed))
    d = space.params.d
    vals = np.array([[ball_power_integral(space, int(x), r, alpha) for r in radii]
                     for x in centers])
    ratio = vals / radii[None, :] ** (alpha + d)
    c1, c2 = float(ratio.min()), float(ratio.max())
    fitted = fit_exponent(radii, np.exp(np.log(vals).mean(axis=0)))
    worst = np.unravel_index(np.argmax(ratio), ratio.shape)
    return VerificationReport(
        axiom=f"ball-power(alpha={alpha:g})",
        estimated_constant=c2 / c1 if c1 > 0 else math.inf,
        worst_witness=(int(centers[worst[0]]), int(worst[1])),
        passed=bool(c1 > 0 and abs(fitted - (alpha + d)) <= exponent_tolerance),
        details={"c1": c1, "c2": c2, "fitted_exponent": fitted, "expected_exponent": alpha + d},
    )
