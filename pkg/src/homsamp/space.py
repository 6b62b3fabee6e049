"""Discretized spaces of homogeneous type.

A :class:`PointCloudSpace` is a finite weighted point cloud carrying a
quasi-metric. Integrals become weighted sums and "for all x" becomes "for all
sample points". Three model generators are available:

``torus-1d``
    uniform grid on the circle of length one, wrap-around metric.
``cantor-dset``
    midpoints of the depth-``m`` middle-thirds intervals, Euclidean metric,
    dimension ``ln 2 / ln 3``.
``anisotropic-square``
    uniform grid on the two-torus with ``rho = max(|dx1|, |dx2|**0.5)``,
    homogeneous dimension 3.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.spatial import cKDTree

def thread_count() -> int:
    """Worker cap from ``HOMSAMP_THREADS`` (default 1)."""
    raw = os.environ.get("HOMSAMP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"HOMSAMP_THREADS must be an integer, got {raw!r}") from None


GENERATORS = ("torus-1d", "cantor-dset", "anisotropic-square")

CANTOR_DIM = math.log(2.0) / math.log(3.0)
DEFAULT_TOLERANCE = 1.10
ANISO_C_REG = 5.0


@dataclass(frozen=True)
class SpaceParams:
    """Structural constants ``(A, C_reg, d, theta, diam)`` of a space."""

    A: float
    C_reg: float
    d: float
    theta: float
    diam: float

    def __post_init__(self):
        if self.A < 1.0:
            raise ValueError(f"quasi-triangle constant must be >= 1, got {self.A}")
        if self.C_reg < 1.0:
            raise ValueError(f"regularity constant must be >= 1, got {self.C_reg}")
        if self.d <= 0:
            raise ValueError(f"homogeneous dimension must be positive, got {self.d}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")


@dataclass
class VerificationReport:
    """Outcome of one axiom / property check.

    ``estimated_constant`` is the best constant found on the sample and
    ``worst_witness`` a tuple of point (or cube) indices attaining it.
    """

    axiom: str
    estimated_constant: float
    worst_witness: tuple
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["worst_witness"] = [int(w) if isinstance(w, (int, np.integer)) else w
                                for w in self.worst_witness]
        return out


# --------------------------------------------------------------------------
# metrics, vectorized over broadcastable coordinate arrays of shape (..., k)

def _wrap(delta):
    delta = np.abs(delta)
    return np.minimum(delta, 1.0 - delta)


def _torus_metric(a, b):
    return _wrap(a[..., 0] - b[..., 0])


def _cantor_metric(a, b):
    return np.abs(a[..., 0] - b[..., 0])


def _aniso_metric(a, b):
    return np.maximum(_wrap(a[..., 0] - b[..., 0]),
                      np.sqrt(_wrap(a[..., 1] - b[..., 1])))


_METRICS = {
    "torus-1d": _torus_metric,
    "cantor-dset": _cantor_metric,
    "anisotropic-square": _aniso_metric,
}


def _chart_scale(generator: str, r: float) -> np.ndarray:
    # per-coordinate factors mapping B(x, r) into a Chebyshev ball of radius r
    if generator == "anisotropic-square":
        return np.array([1.0, 1.0 / r])
    return np.array([1.0])


@dataclass(frozen=True, eq=False)
class PointCloudSpace:
    """Finite weighted point cloud with a quasi-metric.

    The metric is never stored as a matrix; distances are recomputed from the
    coordinates and the generator name.
    """

    generator: str
    resolution: int
    points: np.ndarray
    weights: np.ndarray
    params: SpaceParams
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in _METRICS:
            raise ValueError(f"unknown generator {self.generator!r}")
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.ascontiguousarray(self.weights, dtype=float)
        if len(w) != len(pts):
            raise ValueError("one weight per point required")
        if len(pts) == 0:
            raise ValueError("empty space")
        if np.any(w <= 0):
            raise ValueError("all weights must be positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_trees", {})

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def periodic(self) -> bool:
        return self.generator != "cantor-dset"

    def rho(self, a, b) -> np.ndarray:
        """Quasi-distance between coordinate arrays ``a`` and ``b``."""
        return _METRICS[self.generator](np.asarray(a, float), np.asarray(b, float))

    def distances(self, i: int, idx=None) -> np.ndarray:
        """Distances from point ``i`` to the points ``idx`` (all by default)."""
        other = self.points if idx is None else self.points[idx]
        return self.rho(self.points[i], other)

    def pairwise(self, rows, cols) -> np.ndarray:
        return self.rho(self.points[np.asarray(rows)][:, None, :],
                        self.points[np.asarray(cols)][None, :, :])

    def _tree(self, r: float, subset=None):
        scale = _chart_scale(self.generator, r)
        key = (tuple(scale), None if subset is None else subset.tobytes())
        if key not in self._trees:
            pts = self.points if subset is None else self.points[subset]
            scaled = pts * scale
            box = scale.copy() if self.periodic else None
            if box is not None:
                scaled = np.mod(scaled, box)
            if len(self._trees) > 32:
                self._trees.clear()
            self._trees[key] = cKDTree(scaled, boxsize=box)
        return self._trees[key], scale

    def balls(self, centers, r: float, *, closed: bool = False, among=None) -> list[np.ndarray]:
        """Indices within distance ``r`` of each center, sorted.

        Open balls (``rho < r``) by default; ``closed=True`` gives ``rho <= r``.
        ``among`` restricts the candidates to a subset of point indices, in
        which case the returned indices refer to positions within ``among``.
        """
        centers = np.atleast_1d(np.asarray(centers, dtype=np.intp))
        subset = None if among is None else np.asarray(among, dtype=np.intp)
        tree, scale = self._tree(r, subset)
        q = self.points[centers] * scale
        if self.periodic:
            q = np.mod(q, scale)
        raw = tree.query_ball_point(q, r * (1.0 + 1e-9) + 1e-300, p=np.inf,
                                    return_sorted=False, workers=thread_count())
        lengths = np.fromiter((len(c) for c in raw), dtype=np.intp, count=len(raw))
        if lengths.sum() == 0:
            return [np.empty(0, dtype=np.intp) for _ in centers]
        cand = np.concatenate([np.asarray(c, dtype=np.intp) for c in raw])
        owner = np.repeat(centers, lengths)
        target = cand if subset is None else subset[cand]
        dist = self.rho(self.points[owner], self.points[target])
        keep = dist <= r if closed else dist < r
        bounds = np.concatenate([[0], np.cumsum(lengths)])
        out = []
        for s, e in zip(bounds[:-1], bounds[1:]):
            sel = cand[s:e][keep[s:e]]
            sel.sort()
            out.append(sel)
        return out

    def ball(self, i: int, r: float, *, closed: bool = False) -> np.ndarray:
        return self.balls([i], r, closed=closed)[0]

    def ball_mass(self, i: int, r: float) -> float:
        return float(self.weights[self.ball(i, r)].sum())

    @cached_property
    def nn_distances(self) -> np.ndarray:
        """Distance from every point to its nearest other point."""
        out = np.full(self.n, np.inf)
        if self.n < 2:
            return out
        r = self.params.diam / max(self.n, 2) ** (1.0 / self.params.d)
        todo = np.arange(self.n)
        while len(todo):
            for i, nb in zip(todo, self.balls(todo, r, closed=True)):
                nb = nb[nb != i]
                if len(nb):
                    out[i] = self.distances(i, nb).min()
            todo = np.flatnonzero(np.isinf(out))
            r *= 2.0
        return out

    @property
    def nn_distance(self) -> float:
        """Smallest nearest-neighbor distance (the finest resolvable radius)."""
        return float(self.nn_distances.min())

    # ---------------------------------------------------------------- io

    def to_json(self) -> dict:
        return {
            "generator": self.generator,
            "resolution": int(self.resolution),
            "options": dict(self.options),
            "params": asdict(self.params),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "PointCloudSpace":
        return cls(
            generator=doc["generator"],
            resolution=int(doc["resolution"]),
            points=np.asarray(doc["points"], dtype=float),
            weights=np.asarray(doc["weights"], dtype=float),
            params=SpaceParams(**doc["params"]),
            options=dict(doc.get("options", {})),
        )


# --------------------------------------------------------------------------
# generators

def _torus(n: int) -> PointCloudSpace:
    pts = np.arange(n, dtype=float) / n
    params = SpaceParams(A=1.0, C_reg=2.0, d=1.0, theta=1.0, diam=(n // 2) / n)
    return PointCloudSpace("torus-1d", n, pts[:, None], np.full(n, 1.0 / n), params)


def cantor_midpoints(depth: int) -> np.ndarray:
    """Midpoints of the ``2**depth`` middle-thirds intervals of the given depth."""
    left = np.zeros(1)
    for m in range(1, depth + 1):
        step = 2.0 * 3.0 ** (-m)
        left = np.concatenate([left, left + step])
    left.sort()
    return left + 0.5 * 3.0 ** (-depth)


def _cantor(depth: int) -> PointCloudSpace:
    n = 2 ** depth
    pts = cantor_midpoints(depth)
    # ball/radius^d ratio of the middle-thirds measure lies in [1/2, 4)
    params = SpaceParams(A=1.0, C_reg=4.0, d=CANTOR_DIM, theta=1.0,
                         diam=float(pts[-1] - pts[0]) if n > 1 else 1.0)
    return PointCloudSpace("cantor-dset", n, pts[:, None], np.full(n, 1.0 / n), params,
                           options={"depth": depth})


def _aniso(shape: tuple[int, int], estimate: bool) -> PointCloudSpace:
    n1, n2 = shape
    g1, g2 = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    n = n1 * n2
    diam = max((n1 // 2) / n1, math.sqrt((n2 // 2) / n2))
    # a ball of radius r is a 2r x 2r^2 box of mass 4 r^3; lattice counting on
    # coarse grids overshoots that by up to ~20%
    params = SpaceParams(A=1.0, C_reg=ANISO_C_REG, d=3.0, theta=1.0, diam=diam)
    space = PointCloudSpace("anisotropic-square", n, pts, np.full(n, 1.0 / n), params,
                            options={"shape": [n1, n2]})
    if estimate:
        from .axioms import estimate_quasi_triangle, estimate_theta
        A = estimate_quasi_triangle(space, budget=4000, seed=0).estimated_constant
        theta = estimate_theta(space, budget=4000, seed=0)
        params = SpaceParams(A=A, C_reg=ANISO_C_REG, d=3.0, theta=theta, diam=diam)
        space = PointCloudSpace("anisotropic-square", n, pts, np.full(n, 1.0 / n), params,
                                options={"shape": [n1, n2]})
    return space


def discretize(generator: str, resolution: int | None = None, *, depth: int | None = None,
               shape: Sequence[int] | None = None, estimate: bool = True) -> PointCloudSpace:
    """Build a model space.

    ``resolution`` is the target point count. The Cantor generator takes its
    ``depth`` directly (or ``log2(resolution)``); the anisotropic square takes
    an explicit grid ``shape`` or a square grid of ``resolution`` points.
    """
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}; expected one of {GENERATORS}")
    if generator == "cantor-dset":
        if depth is None:
            if resolution is None:
                raise ValueError("cantor-dset needs a depth or a resolution")
            depth = int(round(math.log2(resolution)))
            if 2 ** depth != resolution:
                raise ValueError("cantor-dset resolution must be a power of two")
        if depth < 1:
            raise ValueError("resolution below 2")
        return _cantor(depth)
    if generator == "anisotropic-square":
        if shape is None:
            if resolution is None:
                raise ValueError("anisotropic-square needs a resolution or a shape")
            side = math.isqrt(resolution)
            if side * side != resolution:
                raise ValueError("square grid needs a perfect-square resolution; pass shape")
            shape = (side, side)
        shape = (int(shape[0]), int(shape[1]))
        if shape[0] * shape[1] < 2:
            raise ValueError("resolution below 2")
        return _aniso(shape, estimate)
    if resolution is None or resolution < 2:
        raise ValueError("resolution below 2")
    return _torus(int(resolution))


def load_space(path) -> PointCloudSpace:
    with open(path) as fh:
        return PointCloudSpace.from_json(json.load(fh))


# --------------------------------------------------------------------------
# integrals and norms

def ball_power_integral(space: PointCloudSpace, x: int, r: float, alpha: float,
                        *, with_self_mass: bool = False):
    """Weighted sum of ``rho(z, x)**alpha`` over the open ball ``B(x, r)``.

    The self term ``z = x`` is left out; with ``with_self_mass=True`` the
    omitted weight is returned alongside the value.
    """
    d = space.params.d
    if r <= 0:
        raise ValueError("radius must be positive")
    if alpha <= -d:
        raise ValueError(f"alpha must exceed -d = {-d}")
    idx = space.ball(x, r)
    idx = idx[idx != x]
    dist = space.distances(x, idx)
    value = float(np.sum(dist ** alpha * space.weights[idx]))
    if with_self_mass:
        return value, float(space.weights[x])
    return value


def lp_norm(space: PointCloudSpace, f, p: float) -> float:
    """``L^p(mu)`` norm of per-point values; ``p = inf`` gives the max."""
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,):
        raise ValueError(f"expected {space.n} values, got shape {f.shape}")
    return weighted_lp(f, space.weights, p)


def weighted_lp(f: np.ndarray, w: np.ndarray, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    top = a.max() if a.size else 0.0
    if top == 0.0:
        return 0.0
    # scale first so large p does not overflow
    return float(top * np.sum(w * (a / top) ** p) ** (1.0 / p))


def space_summary(space: PointCloudSpace) -> dict[str, Any]:
    return {"generator": space.generator, "n": space.n, "total_mass": space.total_mass,
            "nn_distance": space.nn_distance, **asdict(space.params)}
