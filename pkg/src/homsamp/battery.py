"""Named test functions on point-cloud spaces.

Each function carries a feature scale: the smallest length over which it
changes appreciably (half a period, a step width). Sampling levels whose
cubes are coarser than that scale alias the function and are excluded from
refinement and rate checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dyadic import DyadicSystem
from .space import PointCloudSpace


@dataclass(frozen=True)
class TestFunction:
    name: str
    values: np.ndarray
    scale: float
    smooth: bool = False

    __test__ = False  # not a pytest class


def _coord(space: PointCloudSpace) -> np.ndarray:
    return space.points[:, 0]


def _sin(space, system, rng, m=1):
    return np.sin(2 * np.pi * m * _coord(space)), 1.0 / (2 * m), True


def _cos(space, system, rng, m=1):
    return np.cos(2 * np.pi * m * _coord(space)), 1.0 / (2 * m), True


def _constant(space, system, rng, c=1.0):
    return np.full(space.n, float(c)), space.params.diam, True


def _sawtooth(space, system, rng):
    return _coord(space).copy(), space.nn_distance, False


def _staircase(space, system, rng, level=2):
    if system is None:
        raise ValueError("staircase needs a dyadic system")
    steps = rng.standard_normal(len(system.centers[level]))
    return steps[system.labels[level]], system.scale(level), False


def _indicator(space, system, rng, level=1, cube=0):
    if system is None:
        raise ValueError("indicator needs a dyadic system")
    return (system.labels[level] == cube).astype(float), system.scale(level), False


def _bump(space, system, rng, center=0, width=0.25):
    r = space.distances(int(center), np.arange(space.n))
    return np.clip(1.0 - r / width, 0.0, None), width, False


def _noise(space, system, rng):
    return rng.standard_normal(space.n), space.nn_distance, False


REGISTRY: dict[str, Callable] = {
    "sin": _sin,
    "cos": _cos,
    "constant": _constant,
    "sawtooth": _sawtooth,
    "staircase": _staircase,
    "indicator": _indicator,
    "bump": _bump,
    "noise": _noise,
}


def spec_name(spec: dict) -> str:
    args = [f"{k}={spec[k]}" for k in sorted(spec) if k not in ("name", "seed")]
    return spec["name"] + (f"({','.join(args)})" if args else "")


def make_function(space: PointCloudSpace, spec: dict, system: DyadicSystem | None = None,
                  seed: int = 0) -> TestFunction:
    """Evaluate one ``{"name": ..., **params}`` entry; randomness is seeded."""
    spec = dict(spec)
    name = spec.get("name")
    if name not in REGISTRY:
        raise ValueError(f"unknown test function {name!r}; expected one of {sorted(REGISTRY)}")
    params = {k: v for k, v in spec.items() if k not in ("name", "seed")}
    rng = np.random.default_rng([int(spec.get("seed", seed)), sum(map(ord, spec_name(spec)))])
    values, scale, smooth = REGISTRY[name](space, system, rng, **params)
    return TestFunction(spec_name(spec), np.asarray(values, float), float(scale), smooth)


def sine_family(max_m: int = 8) -> list[dict]:
    return [{"name": "sin", "m": m} for m in range(1, max_m + 1)]


def sampling_family() -> list[dict]:
    """Sines of frequency 1 to 8, two staircases and a constant."""
    return sine_family() + [{"name": "staircase", "level": 2},
                            {"name": "staircase", "level": 3},
                            {"name": "constant"}]


def default_battery(space: PointCloudSpace) -> list[dict]:
    """Fourteen functions: the sampling family plus a bump, a cosine and noise."""
    mid = space.n // 2
    return sampling_family() + [{"name": "bump", "center": mid, "width": 0.25 * space.params.diam},
                                {"name": "cos", "m": 3},
                                {"name": "noise"}]


def build_battery(space: PointCloudSpace, specs: list[dict], system: DyadicSystem | None = None,
                  seed: int = 0) -> list[TestFunction]:
    return [make_function(space, s, system, seed) for s in specs]


def resolved_from(fn: TestFunction, base: float = 2.0) -> int:
    """First level whose cube scale does not exceed the feature scale."""
    return max(0, math.ceil(-math.log(fn.scale) / math.log(base) - 1e-12))
