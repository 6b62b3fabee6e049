"""Piecewise-constant sampling on dyadic cubes and the sampling inequality.

``S_l f`` takes on each level-``l`` cube the value of ``f`` at the cube's
center. Once the level exceeds

    l >= beta * ln(kappa K / eps^alpha) / ln(base),
    alpha = max(1, d / (p theta)),  beta = max(p / d, 1 / theta),

the error ``||f - S_l f||_p`` is at most ``eps ||f||_p`` for every ``f`` whose
``B^{d/p}_{p,1}`` norm is at most ``K ||f||_p``. ``kappa`` is not explicit and
is calibrated on a geometric grid.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .besov import BesovParams, besov_norm
from .dyadic import DyadicSystem
from .space import PointCloudSpace, SpaceParams, lp_norm, weighted_lp
from .wavelets import CoefficientTable, WaveletFrame, analyze

KAPPA_STEP = 1.25
KAPPA_LIMIT = 2.0 ** 20
UNRESOLVABLE = "unresolvable: need finer discretization"


def exponents(p: float, d: float, theta: float) -> tuple[float, float]:
    """``(alpha, beta)`` of the level formula."""
    if p < 1:
        raise ValueError("p must be >= 1")
    ratio = 0.0 if math.isinf(p) else d / (p * theta)
    return max(1.0, ratio), max(p / d, 1.0 / theta)


def required_level(epsilon: float, K: float, p: float, space_params: SpaceParams,
                   kappa: float, base: float = 2.0) -> int:
    """``ceil(beta * ln(kappa K / eps^alpha) / ln(base))``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be >= 1")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    alpha, beta = exponents(p, space_params.d, space_params.theta)
    logarg = math.log(kappa) + math.log(K) - alpha * math.log(epsilon)
    if math.isinf(beta):
        if logarg > 0:
            raise ValueError("the level formula is unbounded for p = inf")
        return 0
    x = beta * logarg / math.log(base)
    # absorb rounding so exact integers (e.g. 2 * log2(8)) are not bumped up
    return math.ceil(x - 1e-12 * max(1.0, abs(x)))


def _check_level(system: DyadicSystem, l: int) -> None:
    if not system.j_min <= l <= system.j_max:
        raise ValueError(f"level {l} outside [{system.j_min}, {system.j_max}]")


def sample_operator(system: DyadicSystem, f, l: int) -> np.ndarray:
    """``(S_l f)(x) = f(a^l_n)`` for the cube ``Q^l_n`` containing ``x``."""
    _check_level(system, l)
    f = np.asarray(f, float)
    if f.shape != (system.n_points,):
        raise ValueError("function size does not match the system")
    return f[system.centers[l]][system.labels[l]]


def sampling_error(space: PointCloudSpace, system: DyadicSystem, f, l: int, p: float) -> float:
    f = np.asarray(f, float)
    return lp_norm(space, f - sample_operator(system, f, l), p)


def discrete_norm(space: PointCloudSpace, system: DyadicSystem, f, l: int, p: float) -> float:
    """``(sum_n |f(a^l_n)|^p mu(Q^l_n))^(1/p)``; the max of the samples at ``p = inf``.

    Evaluated point by point on the staircase, so it agrees bit for bit with
    ``lp_norm(S_l f)`` and vanishing sampling errors give equal norms.
    """
    f = np.asarray(f, float)
    if f.shape != (space.n,):
        raise ValueError("function size does not match the space")
    return weighted_lp(sample_operator(system, f, l), space.weights, p)


# ---------------------------------------------------------------- theorem checks

@dataclass(frozen=True)
class SamplingPlan:
    epsilon: float
    K: float
    p: float
    alpha: float
    beta: float
    kappa: float
    level: int
    d: float
    theta: float
    base: float = 2.0
    formula_level: int | None = None
    clamped: str | None = None

    def __post_init__(self):
        if (self.alpha, self.beta) != exponents(self.p, self.d, self.theta):
            raise ValueError("alpha/beta inconsistent with (p, d, theta)")


@dataclass(frozen=True)
class SamplingReport:
    plan: SamplingPlan
    lp_f: float
    besov_f: float
    K_f: float
    error: float | None
    discrete_norm: float | None
    pass_error: bool | None
    pass_sandwich: bool | None
    status: str
    function: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def recheck(self) -> tuple[bool, bool]:
        """Pass flags recomputed from the stored scalars."""
        eps = self.plan.epsilon
        return (self.error <= eps * self.lp_f,
                (1 - eps) * self.lp_f <= self.discrete_norm <= (1 + eps) * self.lp_f)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


@dataclass
class SamplingProfile:
    """Everything the theorem check needs about one function, computed once."""

    lp_f: float
    besov_f: float
    errors: dict[int, float]
    discrete: dict[int, float]

    @property
    def K_f(self) -> float:
        return self.besov_f / self.lp_f


def sampling_profile(space: PointCloudSpace, system: DyadicSystem, frame: WaveletFrame, f,
                     p: float, coeffs: CoefficientTable | None = None) -> SamplingProfile:
    f = np.asarray(f, float)
    lp_f = lp_norm(space, f, p)
    if lp_f == 0:
        raise ValueError("zero function: the sampling inequality is vacuous")
    if coeffs is None:
        coeffs = analyze(frame, space, f)
    besov_f = besov_norm(coeffs, BesovParams.sampling_index(p, space.params.d),
                         space.params.d, system.base)
    errors = {l: sampling_error(space, system, f, l, p) for l in system.levels}
    disc = {l: discrete_norm(space, system, f, l, p) for l in system.levels}
    return SamplingProfile(lp_f, besov_f, errors, disc)


def make_plan(space_params: SpaceParams, system: DyadicSystem, epsilon: float, K: float,
              p: float, kappa: float) -> SamplingPlan:
    alpha, beta = exponents(p, space_params.d, space_params.theta)
    try:
        raw = required_level(epsilon, K, p, space_params, kappa, system.base)
    except ValueError:
        if not math.isinf(beta):
            raise
        raw = None
    clamped = None
    level = raw
    if raw is None or raw > system.j_max:
        clamped = "above"
        level = system.j_max
    elif raw < system.j_min:
        clamped = "below"
        level = system.j_min
    return SamplingPlan(epsilon=epsilon, K=K, p=p, alpha=alpha, beta=beta, kappa=kappa,
                        level=level, d=space_params.d, theta=space_params.theta,
                        base=float(system.base), formula_level=raw, clamped=clamped)


def evaluate_plan(profile: SamplingProfile, plan: SamplingPlan, name: str = "") -> SamplingReport:
    if plan.clamped == "above":
        return SamplingReport(plan, profile.lp_f, profile.besov_f, profile.K_f, None, None,
                              None, None, UNRESOLVABLE, name)
    err = profile.errors[plan.level]
    disc = profile.discrete[plan.level]
    eps, lp = plan.epsilon, profile.lp_f
    ok_err = bool(err <= eps * lp)
    ok_sand = bool((1 - eps) * lp <= disc <= (1 + eps) * lp)
    status = "pass" if ok_err and ok_sand else "fail"
    return SamplingReport(plan, lp, profile.besov_f, profile.K_f, err, disc, ok_err, ok_sand,
                          status, name)


def verify_sampling_theorem(space: PointCloudSpace, system: DyadicSystem, frame: WaveletFrame,
                            f, epsilon: float, kappa: float, p: float = 2.0,
                            K: float | None = None, name: str = "",
                            profile: SamplingProfile | None = None) -> SamplingReport:
    """Both inequalities at the formula-selected level.

    ``K=None`` uses the function's own ratio ``K_f`` (floored at 1); a number
    fixes the class bound instead. A level beyond the finest built one yields
    status ``UNRESOLVABLE`` with no pass/fail flags.
    """
    if profile is None:
        profile = sampling_profile(space, system, frame, f, p)
    K_used = max(profile.K_f, 1.0) if K is None else float(K)
    plan = make_plan(space.params, system, epsilon, K_used, p, kappa)
    return evaluate_plan(profile, plan, name)


# ---------------------------------------------------------------- calibration

@dataclass
class CalibrationResult:
    kappa: float
    grid_index: int
    binding: tuple[str, float] | None
    p: float
    reports: list[SamplingReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "grid_index": self.grid_index,
                "binding": list(self.binding) if self.binding else None, "p": self.p}


class CalibrationError(RuntimeError):
    def __init__(self, message: str, worst: SamplingReport | None = None):
        super().__init__(message)
        self.worst = worst


def kappa_grid() -> np.ndarray:
    """``KAPPA_STEP**m`` for all ``m`` with ``KAPPA_LIMIT**-1 <= kappa <= KAPPA_LIMIT``."""
    m = int(math.floor(math.log(KAPPA_LIMIT) / math.log(KAPPA_STEP)))
    return np.arange(-m, m + 1)


def calibrate_kappa(space: PointCloudSpace, system: DyadicSystem, frame: WaveletFrame,
                    family: Mapping[str, np.ndarray], p: float, epsilons: Sequence[float],
                    K: float | None = None,
                    profiles: Mapping[str, SamplingProfile] | None = None) -> CalibrationResult:
    """Smallest grid ``kappa`` for which every ``(f, eps)`` pair passes."""
    if not family:
        raise ValueError("empty family")
    if not epsilons:
        raise ValueError("no epsilons")
    if profiles is None:
        profiles = {name: sampling_profile(space, system, frame, f, p)
                    for name, f in family.items()}
    pairs = [(name, float(eps)) for name in family for eps in epsilons]
    first_fail: dict[tuple[str, float], SamplingReport] = {}
    prev_fail = None
    for m in kappa_grid():
        kappa = KAPPA_STEP ** float(m)
        reports, failing = [], None
        for name, eps in pairs:
            rep = verify_sampling_theorem(space, system, frame, family[name], eps, kappa, p,
                                          K=K, name=name, profile=profiles[name])
            reports.append(rep)
            if not rep.passed:
                first_fail.setdefault((name, eps), rep)
                if failing is None:
                    failing = (name, eps)
        if failing is None:
            return CalibrationResult(kappa, int(m), prev_fail, p, reports)
        prev_fail = failing
    worst = first_fail.get(prev_fail)
    raise CalibrationError(f"no kappa <= {KAPPA_LIMIT:g} passes; last failing pair {prev_fail}",
                           worst)


# ---------------------------------------------------------------- proof diagnostics

def _incidence(space: PointCloudSpace, system: DyadicSystem, C_phi: float, j: int, l: int):
    """Pairs ``(k, n)`` with ``k`` in ``I_j^n``, and the per-point counts ``#I_j^x``."""
    ctr = system.centers[j]
    balls = space.balls(ctr, C_phi * system.scale(j), closed=True)
    per_x = np.zeros(space.n, dtype=np.intp)
    ks, ns = [], []
    for k, nb in enumerate(balls):
        per_x[nb] += 1
        cubes = np.unique(system.labels[l][nb])
        ks.append(np.full(len(cubes), k, dtype=np.intp))
        ns.append(cubes)
    return np.concatenate(ks), np.concatenate(ns), per_x


@dataclass
class Cardinalities:
    level: int
    C_phi: float
    I_max: dict[int, int]
    lambda_counts: dict[int, np.ndarray]
    incidence: dict[int, tuple[np.ndarray, np.ndarray]] = field(repr=False, default_factory=dict)

    @property
    def R_measured(self) -> int:
        return max(self.I_max.values())

    def lambda_ratio(self, j: int, d: float, base: float) -> float:
        top = float(self.lambda_counts[j].max())
        return top / float(base) ** ((self.level - j) * d) if j <= self.level else top

    def lambda_constants(self, d: float, base: float) -> dict[str, float]:
        low = [self.lambda_ratio(j, d, base) for j in self.lambda_counts if j <= self.level]
        high = [self.lambda_ratio(j, d, base) for j in self.lambda_counts if j > self.level]
        return {"coarse": max(low) if low else 0.0, "fine": max(high) if high else 0.0}


def cardinalities(space: PointCloudSpace, system: DyadicSystem, C_phi: float, l: int
                  ) -> Cardinalities:
    """``#I_j^x`` maxima and ``#Lambda^k_{j,l}`` counts; purely geometric."""
    _check_level(system, l)
    I_max, lam, inc = {}, {}, {}
    for j in system.levels:
        ks, ns, per_x = _incidence(space, system, C_phi, j, l)
        I_max[j] = int(per_x.max())
        lam[j] = np.bincount(ks, minlength=len(system.centers[j]))
        inc[j] = (ks, ns)
    return Cardinalities(l, C_phi, I_max, lam, inc)


@dataclass
class DiagnosticsRecord:
    level: int
    p: float
    E: dict[int, np.ndarray]
    R_measured: int
    I_max: dict[int, int]
    lambda_counts: dict[int, np.ndarray]
    lambda_constants: dict[str, float]
    Cp_estimate: float
    j0_used: float | None
    terms: dict[str, float]
    error: float

    def E_rows(self):
        for j in sorted(self.E):
            for n, v in enumerate(self.E[j]):
                yield j, n, float(v)

    def cardinality_rows(self):
        for j in sorted(self.lambda_counts):
            for k, c in enumerate(self.lambda_counts[j]):
                yield j, k, int(c)


def proof_diagnostics(space: PointCloudSpace, system: DyadicSystem, frame: WaveletFrame, f,
                      l: int, p: float, epsilon: float | None = None,
                      coeffs: CoefficientTable | None = None) -> DiagnosticsRecord:
    """Replay the cardinality and error-splitting steps of the sampling proof.

    ``Cp_estimate`` is the smallest constant with
    ``||f - S_l f||_p <= Cp * (I + II)``, where ``I`` and ``II`` are the
    coarse- and fine-level coefficient sums of the proof without the constant.
    """
    _check_level(system, l)
    f = np.asarray(f, float)
    if coeffs is None:
        coeffs = analyze(frame, space, f)
    card = cardinalities(space, system, frame.C_phi, l)
    d, theta, b = space.params.d, space.params.theta, float(system.base)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    n_l = len(system.centers[l])
    E = {}
    level_norm = {}
    for j in system.levels:
        ks, ns = card.incidence[j]
        a = np.abs(coeffs.values[j])[ks]
        if math.isinf(p):
            e = np.zeros(n_l)
            np.maximum.at(e, ns, a)
        else:
            e = np.bincount(ns, weights=a ** p, minlength=n_l) ** inv_p
        E[j] = e
        level_norm[j] = weighted_lp(coeffs.values[j], np.ones(len(coeffs.values[j])), p)

    def term(j):
        if j <= l:
            return b ** (j * d / 2 + j * (theta - d * inv_p) - l * theta) * level_norm[j]
        return b ** (j * d / 2 - l * d * inv_p) * level_norm[j]

    coarse = sum(term(j) for j in system.levels if j <= l)
    fine = sum(term(j) for j in system.levels if j > l)
    error = sampling_error(space, system, f, l, p)
    bracket = coarse + fine
    Cp = error / bracket if bracket > 0 else 0.0
    j0 = None
    terms = {"I": Cp * coarse, "II": Cp * fine}
    if epsilon is not None and Cp > 0:
        j0 = l - math.log(2 * Cp / epsilon) / (theta * math.log(b))
        terms["I_a"] = Cp * sum(term(j) for j in system.levels if j < j0 and j <= l)
        terms["I_b"] = Cp * sum(term(j) for j in system.levels if j0 <= j <= l)
    return DiagnosticsRecord(level=l, p=p, E=E, R_measured=card.R_measured, I_max=card.I_max,
                             lambda_counts=card.lambda_counts,
                             lambda_constants=card.lambda_constants(d, b), Cp_estimate=Cp,
                             j0_used=j0, terms=terms, error=error)
