"""Nested dyadic cube systems built from greedy separated nets.

Cubes are point sets of the discretization. Level ``j`` works at scale
``base**-j`` (``base = 2`` gives the usual dyadic cubes; the Cantor set is
better served by ``base = 3``).

Construction, for ``j = j_min .. j_max``:

1. a maximal ``c * base**-j``-separated net ``N_j`` is grown greedily in point
   index order, seeded with ``N_{j-1}`` so that the nets are nested;
2. every point joins the nearest center of the finest net (equidistant points
   join the smallest candidate cube);
3. every center of ``N_{j+1}`` becomes a child of its nearest center in
   ``N_j``; coarser cubes are unions of their descendants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .space import PointCloudSpace, VerificationReport

_SEP_RTOL = 1e-12


@dataclass(frozen=True)
class Cube:
    level: int
    index: int
    center: int
    members: np.ndarray
    parent: tuple[int, int] | None
    children: list[tuple[int, int]]


@dataclass(eq=False)
class DyadicSystem:
    """Per-level cube labels of every point plus the center / parent tables.

    ``labels[j][x]`` is the index of the level-``j`` cube containing ``x``;
    ``centers[j][k]`` is the point index of the center of cube ``k``;
    ``parents[j][k]`` is the level ``j - 1`` cube containing cube ``k``.
    """

    j_min: int
    j_max: int
    base: float
    separation_factor: float
    n_points: int
    centers: dict[int, np.ndarray]
    labels: dict[int, np.ndarray]
    parents: dict[int, np.ndarray]
    r0_measured: float = math.nan
    r1_measured: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def levels(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def scale(self, j: int) -> float:
        return float(self.base) ** (-j)

    def n_cubes(self, j: int) -> int:
        self._check_level(j)
        return len(self.centers[j])

    def _check_level(self, j: int):
        if j not in self.levels:
            raise ValueError(f"level {j} outside [{self.j_min}, {self.j_max}]")

    @cached_property
    def _groups(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for j in self.levels:
            order = np.argsort(self.labels[j], kind="stable")
            starts = np.searchsorted(self.labels[j][order], np.arange(len(self.centers[j]) + 1))
            out[j] = (order, starts)
        return out

    def members(self, j: int, k: int) -> np.ndarray:
        self._check_level(j)
        order, starts = self._groups[j]
        return order[starts[k]:starts[k + 1]]

    def children(self, j: int, k: int) -> list[tuple[int, int]]:
        self._check_level(j)
        if j == self.j_max:
            return []
        kids = np.flatnonzero(self.parents[j + 1] == k)
        return [(j + 1, int(c)) for c in kids]

    def cube(self, j: int, k: int) -> Cube:
        self._check_level(j)
        parent = None if j == self.j_min else (j - 1, int(self.parents[j][k]))
        return Cube(level=j, index=k, center=int(self.centers[j][k]),
                    members=self.members(j, k), parent=parent, children=self.children(j, k))

    def cubes(self, j: int) -> list[Cube]:
        return [self.cube(j, k) for k in range(self.n_cubes(j))]

    def cube_masses(self, space: PointCloudSpace, j: int) -> np.ndarray:
        return np.bincount(self.labels[j], weights=space.weights, minlength=self.n_cubes(j))

    # ------------------------------------------------------------- io

    def to_json(self) -> dict:
        levels = []
        for j in self.levels:
            cubes = []
            for k in range(self.n_cubes(j)):
                cubes.append({
                    "center": int(self.centers[j][k]),
                    "parent": None if j == self.j_min else int(self.parents[j][k]),
                    "members": run_length_encode(self.members(j, k)),
                })
            levels.append({"level": j, "cubes": cubes})
        return {
            "levels": [self.j_min, self.j_max],
            "base": self.base,
            "separation_factor": self.separation_factor,
            "n_points": self.n_points,
            "r0_measured": self.r0_measured,
            "r1_measured": self.r1_measured,
            "cubes": levels,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "DyadicSystem":
        j_min, j_max = doc["levels"]
        n = int(doc["n_points"])
        centers, labels, parents = {}, {}, {}
        for entry in doc["cubes"]:
            j = int(entry["level"])
            centers[j] = np.array([c["center"] for c in entry["cubes"]], dtype=np.intp)
            lab = np.full(n, -1, dtype=np.intp)
            for k, c in enumerate(entry["cubes"]):
                lab[run_length_decode(c["members"])] = k
            if np.any(lab < 0):
                raise ValueError(f"level {j} does not cover every point")
            labels[j] = lab
            if j > j_min:
                parents[j] = np.array([c["parent"] for c in entry["cubes"]], dtype=np.intp)
        return cls(j_min=j_min, j_max=j_max, base=doc.get("base", 2),
                   separation_factor=doc["separation_factor"], n_points=n, centers=centers,
                   labels=labels, parents=parents, r0_measured=doc.get("r0_measured", math.nan),
                   r1_measured=doc.get("r1_measured", math.nan))


def run_length_encode(idx) -> list[list[int]]:
    """Sorted indices as ``[start, length]`` runs of consecutive integers."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [idx.size]])
    return [[int(idx[s]), int(e - s)] for s, e in zip(starts, ends)]


def run_length_decode(runs) -> np.ndarray:
    if not runs:
        return np.empty(0, dtype=np.intp)
    return np.concatenate([np.arange(s, s + l) for s, l in runs]).astype(np.intp)


# ---------------------------------------------------------------- build

def greedy_net(space: PointCloudSpace, sep: float, seed_net=()) -> np.ndarray:
    """Maximal ``sep``-separated net containing ``seed_net``, greedy in index order.

    A point joins when its distance to every chosen center is at least ``sep``.
    """
    covered = np.zeros(space.n, dtype=bool)
    r = sep * (1.0 - _SEP_RTOL)
    chosen = [int(c) for c in seed_net]
    if chosen:
        for nb in space.balls(chosen, r):
            covered[nb] = True
    for i in range(space.n):
        if covered[i]:
            continue
        chosen.append(i)
        covered[space.ball(i, r)] = True
    return np.array(sorted(chosen), dtype=np.intp)


def _nearest(space, queries, pool, radius):
    """For each query point, positions in ``pool`` of the nearest pool points (all ties)."""
    out = []
    for q, cand in zip(queries, space.balls(queries, radius, among=pool)):
        if len(cand) == 0:
            raise RuntimeError(f"point {q} is not covered at radius {radius}")
        dist = space.distances(q, pool[cand])
        out.append(cand[dist == dist.min()])
    return out


def build_dyadic_system(space: PointCloudSpace, j_min: int, j_max: int, c: float = 1.0,
                        base: float = 2, verify: bool = True) -> DyadicSystem:
    """Greedy nested nets plus hierarchical nearest-center assignment.

    At the finest level a point equidistant from several centers joins the
    smallest of those cubes. Ties between equally near parents go to the
    candidate that keeps the child cube closest (smallest farthest-member
    distance), then to the lowest cube index.
    """
    if space.n == 0:
        raise ValueError("empty space")
    if j_min > j_max:
        raise ValueError("j_min must not exceed j_max")
    if not 0 < c <= 1:
        raise ValueError("separation factor must lie in (0, 1]")
    if base <= 1:
        raise ValueError("base must exceed 1")
    # the finest level may reach the atomic scale but not go beyond it
    if space.n > 1 and c * float(base) ** (1 - j_max) <= space.nn_distance * (1.0 + 1e-9):
        raise ValueError(
            f"level range unresolvable: level {j_max - 1} already separates every point "
            f"(spacing {space.nn_distance:g})")
    levels = range(j_min, j_max + 1)
    centers: dict[int, np.ndarray] = {}
    prev = np.empty(0, dtype=np.intp)
    for j in levels:
        prev = greedy_net(space, c * float(base) ** (-j), prev)
        centers[j] = prev

    labels: dict[int, np.ndarray] = {}
    fine = centers[j_max]
    pos = {int(p): k for k, p in enumerate(fine)}
    ties = _nearest(space, np.arange(space.n), fine, c * float(base) ** (-j_max))
    labels[j_max] = np.array([t[0] for t in ties], dtype=np.intp)
    for p, k in pos.items():
        labels[j_max][p] = k
    # equidistant points go, in index order, to the currently smallest cube
    # (then the lowest index)
    tied = [x for x, t in enumerate(ties) if len(t) > 1 and x not in pos]
    settled = np.ones(space.n, dtype=bool)
    settled[tied] = False
    size = np.bincount(labels[j_max][settled], minlength=len(fine))
    for x in tied:
        t = np.sort(ties[x])
        k = t[np.argmin(size[t])]
        size[k] += 1
        labels[j_max][x] = k

    parents: dict[int, np.ndarray] = {}
    for j in range(j_max - 1, j_min - 1, -1):
        child_centers, pool = centers[j + 1], centers[j]
        options = _nearest(space, child_centers, pool, c * float(base) ** (-j))
        order = np.argsort(labels[j + 1], kind="stable")
        starts = np.searchsorted(labels[j + 1][order], np.arange(len(child_centers) + 1))
        par = np.empty(len(child_centers), dtype=np.intp)
        for k, opt in enumerate(options):
            if len(opt) == 1:
                par[k] = opt[0]
                continue
            mem = order[starts[k]:starts[k + 1]]
            reach = space.pairwise(pool[opt], mem).max(axis=1)
            par[k] = opt[np.flatnonzero(reach == reach.min())[0]]
        parents[j + 1] = par
        labels[j] = par[labels[j + 1]]

    system = DyadicSystem(j_min=j_min, j_max=j_max, base=base, separation_factor=c,
                          n_points=space.n, centers=centers, labels=labels, parents=parents)
    if verify:
        verify_dyadic(system, space)
    return system


def locate(system: DyadicSystem, x: int, j: int) -> int:
    """Index of the level-``j`` cube containing point ``x``."""
    system._check_level(j)
    return int(system.labels[j][x])


# ---------------------------------------------------------------- verification

def cube_radii(system: DyadicSystem, space: PointCloudSpace, j: int):
    """Inner and outer radii of every level-``j`` cube around its center.

    The inner radius is the largest ``r`` with ``B(y, r)`` inside the cube,
    i.e. the distance from ``y`` to the nearest non-member (``diam`` when the
    cube is the whole space).
    """
    lab, ctr = system.labels[j], system.centers[j]
    outer = np.zeros(len(ctr))
    for k in range(len(ctr)):
        mem = system.members(j, k)
        outer[k] = space.distances(ctr[k], mem).max()
    inner = np.full(len(ctr), np.nan)
    todo = np.arange(len(ctr))
    radius = max(outer.max(), space.nn_distance) * (1.0 + 1e-9)
    while len(todo):
        for k, nb in zip(todo, space.balls(ctr[todo], radius, closed=True)):
            other = nb[lab[nb] != k]
            if len(other):
                inner[k] = space.distances(ctr[k], other).min()
        todo = np.flatnonzero(np.isnan(inner))
        if radius > 2.0 * space.params.diam:
            inner[todo] = space.params.diam
            break
        radius *= 2.0
    return inner, outer


def verify_dyadic(system: DyadicSystem, space: PointCloudSpace) -> list[VerificationReport]:
    """Exact partition / nesting / parent checks plus measured sandwich radii.

    Fills ``system.r0_measured``, ``system.r1_measured`` and
    ``system.diagnostics`` as a side effect.
    """
    if system.n_points != space.n:
        raise ValueError(f"system has {system.n_points} points, space has {space.n}")
    reports = []

    bad_partition, bad_center = 0, 0
    for j in system.levels:
        lab = system.labels[j]
        counts = np.bincount(lab, minlength=system.n_cubes(j))
        bad_partition += int(np.sum(counts == 0)) + int(np.sum((lab < 0) | (lab >= len(counts))))
        bad_center += int(np.sum(lab[system.centers[j]] != np.arange(system.n_cubes(j))))
    reports.append(VerificationReport("partition", float(bad_partition + bad_center), (),
                                      bad_partition + bad_center == 0,
                                      {"empty_or_invalid": bad_partition,
                                       "centers_outside": bad_center}))

    nest_violations, worst = 0, ()
    for i in system.levels:
        for j in range(system.j_min, i):
            fine, coarse = system.labels[i], system.labels[j]
            first = np.zeros(system.n_cubes(i), dtype=np.intp)
            first[fine[::-1]] = np.arange(space.n)[::-1]
            mismatch = coarse != coarse[first][fine]
            if mismatch.any():
                nest_violations += int(mismatch.sum())
                worst = (i, j, int(np.flatnonzero(mismatch)[0]))
    reports.append(VerificationReport("nesting", float(nest_violations), worst,
                                      nest_violations == 0))

    parent_violations = 0
    for j in system.levels:
        if j == system.j_min:
            continue
        implied = system.parents[j][system.labels[j]]
        parent_violations += int(np.sum(implied != system.labels[j - 1]))
    reports.append(VerificationReport("unique-parent", float(parent_violations), (),
                                      parent_violations == 0))

    sep_violations = 0
    for j in system.levels:
        ctr = system.centers[j]
        sep = system.separation_factor * system.scale(j) * (1.0 - _SEP_RTOL)
        for k, nb in enumerate(space.balls(ctr, sep, among=ctr)):
            sep_violations += int(np.sum(nb != k))
    reports.append(VerificationReport("separation", float(sep_violations), (),
                                      sep_violations == 0))

    per_level = {}
    r0, r1 = math.inf, 0.0
    r0_w = r1_w = ()
    for j in system.levels:
        inner, outer = cube_radii(system, space, j)
        s = float(system.base) ** j
        lo, hi = float(inner.min() * s), float(outer.max() * s)
        per_level[j] = {"r0": lo, "r1": hi, "cubes": system.n_cubes(j)}
        if lo < r0:
            r0, r0_w = lo, (j, int(np.argmin(inner)))
        if hi > r1:
            r1, r1_w = hi, (j, int(np.argmax(outer)))
    system.r0_measured, system.r1_measured = r0, r1
    r1_levels = [v["r1"] for v in per_level.values() if v["r1"] > 0]
    uniform_r1 = max(r1_levels) <= 2.0 * min(r1_levels) if r1_levels else True
    reports.append(VerificationReport("sandwich-inner", r0, r0_w, r0 > 0,
                                      {"per_level": per_level}))
    reports.append(VerificationReport("sandwich-outer", r1, r1_w,
                                      bool(math.isfinite(r1) and uniform_r1),
                                      {"ratio_r1_r0": r1 / r0 if r0 > 0 else math.inf,
                                       "uniform_over_levels": uniform_r1}))

    lo, hi = math.inf, 0.0
    lo_w = hi_w = ()
    for j in system.levels:
        m = system.cube_masses(space, j) * float(system.base) ** (j * space.params.d)
        if m.min() < lo:
            lo, lo_w = float(m.min()), (j, int(np.argmin(m)))
        if m.max() > hi:
            hi, hi_w = float(m.max()), (j, int(np.argmax(m)))
    ratio = hi / lo
    reports.append(VerificationReport("cube-measure", ratio, hi_w if hi >= 1 / lo else lo_w,
                                      math.isfinite(ratio),
                                      {"min": lo, "max": hi, "C_cube": max(hi, 1.0 / lo)}))
    system.diagnostics = {
        "per_level": per_level,
        "measure_min": lo,
        "measure_max": hi,
        "measure_ratio": ratio,
    }
    return reports


def finest_level(space: PointCloudSpace, c: float = 1.0, base: float = 2) -> int:
    """The first level whose nets must separate every point (the atomic level)."""
    j = math.floor(math.log(c / space.nn_distance) / math.log(base)) + 1
    # exact powers of the base sit on the boundary; settle them by direct comparison
    while c * float(base) ** (1 - j) <= space.nn_distance * (1.0 + 1e-9):
        j -= 1
    while c * float(base) ** (-j) > space.nn_distance * (1.0 + 1e-9):
        j += 1
    return j
