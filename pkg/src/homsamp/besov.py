"""Besov norms computed from frame coefficients.

    ||f||_{B^s_{p,q}} = ( sum_j [ b^{j(s + d(1/2 - 1/p))} ||c_j||_{l^p} ]^q )^{1/q}

over the (finite) level range of the coefficient table, with suprema
replacing sums when ``p`` or ``q`` is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import weighted_lp
from .wavelets import CoefficientTable


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    q: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError("s must be finite")
        if not (self.p >= 1):
            raise ValueError("p must be >= 1")
        if not (self.q > 0):
            raise ValueError("q must be > 0")

    @classmethod
    def sampling_index(cls, p: float, d: float) -> "BesovParams":
        """The space ``B^{d/p}_{p,1}`` (``s = 0`` when ``p`` is infinite)."""
        return cls(s=0.0 if math.isinf(p) else d / p, p=p, q=1.0)


def level_weight(j: int, params: BesovParams, d: float, base: float = 2.0) -> float:
    inv_p = 0.0 if math.isinf(params.p) else 1.0 / params.p
    return float(base) ** (j * (params.s + d * (0.5 - inv_p)))


def level_terms(coeffs: CoefficientTable, params: BesovParams, d: float,
                base: float = 2.0) -> dict[int, float]:
    """The weighted per-level ``l^p`` norms, before the outer ``l^q`` sum."""
    if not coeffs.values:
        raise ValueError("empty coefficient table")
    return {j: level_weight(j, params, d, base) * _lp(coeffs.values[j], params.p)
            for j in coeffs.level_range}


def _lp(v: np.ndarray, p: float) -> float:
    if v.size == 0:
        return 0.0
    return weighted_lp(v, np.ones_like(v), p)


def besov_norm(coeffs: CoefficientTable, params: BesovParams, d: float,
               base: float = 2.0) -> float:
    terms = np.array(list(level_terms(coeffs, params, d, base).values()))
    if math.isinf(params.q):
        return float(terms.max())
    if params.q == 1:
        return math.fsum(terms)
    if params.q >= 1:
        return _lp(terms, params.q)
    return float(np.sum(terms ** params.q) ** (1.0 / params.q))
