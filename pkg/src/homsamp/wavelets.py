"""Bump frames on dyadic cube systems and their canonical duals.

The synthesis family is

    phi_{j,k}(x) = base**(j d / 2) * h(rho(x, y_k^j) / (C * base**-j))

with a compactly supported profile ``h`` (``tent`` or ``smoothstep``). The
analysis family is the canonical dual ``psi = S^{-1} phi`` where
``S f = sum <f, phi> phi`` is the frame operator on ``L^2(mu)``. ``S`` is
handled through its symmetric form ``G = W^(1/2) Phi Phi^T W^(1/2)``: a dense
Cholesky factor for small clouds, preconditioned conjugate gradients above
``DENSE_LIMIT`` points.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, eigsh, lobpcg

from .dyadic import DyadicSystem
from .space import PointCloudSpace, VerificationReport

DENSE_LIMIT = 5000
RESIDUAL_RTOL = 1e-10
MAX_CONDITION = 1e12


def tent(t):
    return np.clip(1.0 - np.asarray(t, float), 0.0, None)


def smoothstep(t):
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    return 2.0 * t ** 3 - 3.0 * t ** 2 + 1.0


PROFILES = {"tent": tent, "smoothstep": smoothstep}


class IncompleteFrameError(ValueError):
    """The truncated frame does not span the discrete L^2 space."""


# ---------------------------------------------------------------- solvers

class _DenseSolver:
    def __init__(self, gram: np.ndarray):
        try:
            self.factor = sla.cho_factor(gram, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise IncompleteFrameError("incomplete frame: extend levels or refine net") from exc
        self.gram = gram

    def matvec(self, v):
        return self.gram @ v

    def solve(self, b):
        return sla.cho_solve(self.factor, b, check_finite=False)


class _IterativeSolver:
    def __init__(self, B: sp.csr_matrix):
        self.B = B
        self.Bt = B.T.tocsr()
        self.n = B.shape[0]
        diag = np.asarray(B.multiply(B).sum(axis=1)).ravel()
        if np.any(diag <= 0):
            raise IncompleteFrameError("incomplete frame: extend levels or refine net")
        self.precond = LinearOperator((self.n, self.n), matvec=lambda v: v.ravel() / diag,
                                      matmat=lambda Y: Y / diag[:, None])
        self.op = LinearOperator((self.n, self.n), matvec=self.matvec)

    def matvec(self, v):
        return self.B @ (self.Bt @ v)

    def _solve1(self, b):
        nb = np.linalg.norm(b)
        if nb == 0:
            return np.zeros_like(b)
        x, info = cg(self.op, b, rtol=RESIDUAL_RTOL * 0.1, atol=0.0, M=self.precond,
                     maxiter=20 * self.n)
        if info != 0 or np.linalg.norm(b - self.matvec(x)) > RESIDUAL_RTOL * nb:
            raise IncompleteFrameError("incomplete frame: conjugate gradients did not converge")
        return x

    def solve(self, b):
        b = np.asarray(b, float)
        if b.ndim == 1:
            return self._solve1(b)
        return np.column_stack([self._solve1(b[:, i]) for i in range(b.shape[1])])


# ---------------------------------------------------------------- types

@dataclass
class CoefficientTable:
    """Per-level coefficient arrays; ``values[j][k]`` is the entry for cube ``(j, k)``."""

    levels: tuple[int, int]
    values: dict[int, np.ndarray]

    def __post_init__(self):
        lo, hi = self.levels
        if set(self.values) != set(range(lo, hi + 1)):
            raise ValueError("exactly one coefficient array per covered level required")
        self.values = {j: np.asarray(v, dtype=float) for j, v in sorted(self.values.items())}

    def __getitem__(self, key):
        j, k = key
        return float(self.values[j][k])

    @property
    def level_range(self) -> range:
        return range(self.levels[0], self.levels[1] + 1)

    def entries(self):
        for j in self.level_range:
            for k, v in enumerate(self.values[j]):
                yield (j, k), float(v)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.values[j] for j in self.level_range])

    def scaled(self, c: float) -> "CoefficientTable":
        return CoefficientTable(self.levels, {j: c * v for j, v in self.values.items()})

    def __add__(self, other: "CoefficientTable") -> "CoefficientTable":
        if self.levels != other.levels:
            raise ValueError("level ranges differ")
        return CoefficientTable(self.levels, {j: self.values[j] + other.values[j]
                                              for j in self.level_range})

    @classmethod
    def zeros_like(cls, other: "CoefficientTable") -> "CoefficientTable":
        return cls(other.levels, {j: np.zeros_like(v) for j, v in other.values.items()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "k", "value"])
        for (j, k), v in self.entries():
            w.writerow([j, k, repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CoefficientTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty coefficient table")
        per: dict[int, dict[int, float]] = {}
        for r in rows:
            per.setdefault(int(r["j"]), {})[int(r["k"])] = float(r["value"])
        values = {}
        for j, d in per.items():
            arr = np.zeros(max(d) + 1)
            for k, v in d.items():
                arr[k] = v
            values[j] = arr
        return cls((min(per), max(per)), values)


@dataclass(eq=False)
class WaveletFrame:
    system: DyadicSystem
    levels: tuple[int, int]
    element_level: np.ndarray
    element_cube: np.ndarray
    phi: sp.csc_matrix
    weights: np.ndarray
    d: float
    theta: float
    C_phi_target: float
    profile: str
    C_phi: float = math.nan
    N_measured: int = 0
    frame_bounds: tuple[float, float] = (math.nan, math.nan)
    constants: dict = field(default_factory=dict)
    solver: object = field(default=None, repr=False)

    @property
    def n_elements(self) -> int:
        return self.phi.shape[1]

    @property
    def n_points(self) -> int:
        return self.phi.shape[0]

    @property
    def level_range(self) -> range:
        return range(self.levels[0], self.levels[1] + 1)

    def level_slice(self, j: int) -> slice:
        idx = np.flatnonzero(self.element_level == j)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def element(self, j: int, k: int) -> int:
        return self.level_slice(j).start + k

    def phi_values(self, j: int, k: int) -> np.ndarray:
        return self.phi[:, self.element(j, k)].toarray().ravel()

    def apply_inverse(self, f) -> np.ndarray:
        """``S^{-1} f`` for one function (1-d) or many (columns of a 2-d array)."""
        f = np.asarray(f, float)
        sw = np.sqrt(self.weights)
        scale = sw if f.ndim == 1 else sw[:, None]
        return self.solver.solve(f * scale) / scale

    def apply_frame_operator(self, f) -> np.ndarray:
        f = np.asarray(f, float)
        return self.phi @ (self.phi.T @ (self.weights * f))

    def dual(self, j: int, k: int) -> np.ndarray:
        """The dual function ``psi_{j,k}`` on every point."""
        return self.apply_inverse(self.phi_values(j, k))

    def dual_matrix(self) -> np.ndarray:
        """All duals as columns (``n_points x n_elements``); dense, use on small frames."""
        return self.apply_inverse(self.phi.toarray())


# ---------------------------------------------------------------- build

def _assemble(system: DyadicSystem, space: PointCloudSpace, C: float, h):
    rows, cols, vals, lev, cube = [], [], [], [], []
    e0 = 0
    d = space.params.d
    for j in system.levels:
        ctr = system.centers[j]
        radius = C * system.scale(j)
        amp = float(system.base) ** (j * d / 2.0)
        for k, nb in enumerate(space.balls(ctr, radius)):
            t = space.distances(ctr[k], nb) / radius
            v = amp * h(t)
            nz = v != 0
            rows.append(nb[nz])
            cols.append(np.full(int(nz.sum()), e0 + k, dtype=np.intp))
            vals.append(v[nz])
        lev.append(np.full(len(ctr), j, dtype=np.intp))
        cube.append(np.arange(len(ctr), dtype=np.intp))
        e0 += len(ctr)
    phi = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(space.n, e0))
    phi.sort_indices()
    return phi, np.concatenate(lev), np.concatenate(cube)


def _dense_gram(B: sp.csc_matrix, element_level: np.ndarray) -> np.ndarray:
    n = B.shape[0]
    gram = np.zeros((n, n))
    for j in np.unique(element_level):
        cols = np.flatnonzero(element_level == j)
        Bj = B[:, cols]
        if len(cols) <= 64:
            dense = Bj.toarray()
            gram += dense @ dense.T
        else:
            gram += (Bj @ Bj.T).toarray()
    return gram


def _extreme_eigs(solver, n: int) -> tuple[float, float]:
    """Smallest and largest eigenvalue of ``G``.

    Exact (LAPACK) for the dense solver. For the iterative solver the lower
    bound is a preconditioned LOBPCG Rayleigh quotient, which slightly
    overestimates the true minimum.
    """
    op = LinearOperator((n, n), matvec=solver.matvec, dtype=float)
    if n == 1:
        v = float(solver.matvec(np.ones(1))[0])
        return v, v
    if n <= 2:
        top = None
    else:
        top = float(eigsh(op, k=1, which="LA", v0=np.ones(n), tol=1e-10,
                          return_eigenvectors=False)[0])
    if isinstance(solver, _DenseSolver):
        low = float(sla.eigh(solver.gram, eigvals_only=True, subset_by_index=[0, 0],
                             driver="evr")[0])
        if top is None:
            top = float(np.linalg.eigvalsh(solver.gram)[-1])
        return low, top
    X = np.random.default_rng(0).standard_normal((n, 1))
    block = LinearOperator((n, n), matvec=solver.matvec,
                           matmat=lambda Y: solver.B @ (solver.Bt @ Y), dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        low = float(lobpcg(block, X, M=solver.precond, largest=False, tol=1e-9,
                           maxiter=2000)[0][0])
    return low, top


def build_frame(system: DyadicSystem, space: PointCloudSpace, C_phi_target: float = 1.5,
                profile: str = "tent", *, theta: float | None = None, solver: str = "auto",
                measure: bool = True) -> WaveletFrame:
    """Assemble ``phi``, factor the frame operator and measure the frame constants.

    Raises :class:`IncompleteFrameError` when the frame operator is singular
    or its condition number exceeds ``MAX_CONDITION``.
    """
    if system.n_points != space.n:
        raise ValueError("system and space do not match")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    if C_phi_target <= 0:
        raise ValueError("C_phi_target must be positive")
    phi, lev, cube = _assemble(system, space, C_phi_target, PROFILES[profile])
    frame = frame_from_phi(system, space, phi, lev, cube, C_phi_target, profile,
                           theta=theta, solver=solver)
    if measure:
        verify_frame(frame, space)
    return frame


def frame_from_phi(system: DyadicSystem, space: PointCloudSpace, phi: sp.csc_matrix,
                   element_level: np.ndarray, element_cube: np.ndarray, C_phi_target: float,
                   profile: str, *, theta: float | None = None,
                   solver: str = "auto") -> WaveletFrame:
    """Factor the frame operator of a given synthesis matrix."""
    if phi.shape[0] != space.n:
        raise ValueError("phi and space do not match")
    B = sp.diags(np.sqrt(space.weights)) @ phi
    use_dense = solver == "dense" or (solver == "auto" and space.n <= DENSE_LIMIT)
    if use_dense:
        slv = _DenseSolver(_dense_gram(B.tocsc(), element_level))
    else:
        slv = _IterativeSolver(B.tocsr())
    lower, upper = _extreme_eigs(slv, space.n)
    if lower <= 0 or upper / lower > MAX_CONDITION:
        raise IncompleteFrameError("incomplete frame: extend levels or refine net")
    return WaveletFrame(system=system, levels=(system.j_min, system.j_max),
                        element_level=element_level, element_cube=element_cube, phi=phi,
                        weights=np.asarray(space.weights), d=space.params.d,
                        theta=space.params.theta if theta is None else theta,
                        C_phi_target=C_phi_target, profile=profile,
                        frame_bounds=(lower, upper), solver=slv)


# ---------------------------------------------------------------- verification

def support_radii(frame: WaveletFrame, space: PointCloudSpace) -> np.ndarray:
    """Largest ``rho(x, y) * base**j`` over the support of every element."""
    out = np.zeros(frame.n_elements)
    indptr, indices = frame.phi.indptr, frame.phi.indices
    for e in range(frame.n_elements):
        j, k = int(frame.element_level[e]), int(frame.element_cube[e])
        rows = indices[indptr[e]:indptr[e + 1]]
        if len(rows):
            y = frame.system.centers[j][k]
            out[e] = space.distances(y, rows).max() * float(frame.system.base) ** j
    return out


def _smoothness(frame: WaveletFrame, space: PointCloudSpace, chunk: int = 1 << 22):
    """Smallest smoothness constant per element over the pairs that can matter.

    Pairs with ``x`` in the support and ``y`` within twice the support radius
    of the center are enumerated; farther ``y`` are covered by the certified
    bound ``max|phi| / (C (2/A - 1))**theta`` (all points are enumerated when
    ``A >= 2``).
    """
    theta, d, base = frame.theta, frame.d, float(frame.system.base)
    A = space.params.A
    C = frame.C_phi_target
    out = np.zeros(frame.n_elements)
    witness = np.zeros((frame.n_elements, 2), dtype=np.intp)
    indptr, indices, data = frame.phi.indptr, frame.phi.indices, frame.phi.data
    for j in frame.level_range:
        sl = frame.level_slice(j)
        ctr = frame.system.centers[j]
        norm = base ** (j * (d / 2.0 + theta))
        if A < 2:
            reach = space.balls(ctr, 2.0 * C * base ** (-j))
        else:
            reach = [np.arange(space.n)] * len(ctr)
        for k in range(len(ctr)):
            e = sl.start + k
            rows = indices[indptr[e]:indptr[e + 1]]
            vals = data[indptr[e]:indptr[e + 1]]
            ys = reach[k]
            fy = np.zeros(len(ys))
            pos = np.searchsorted(ys, rows)
            fy[pos] = vals
            best, wit = 0.0, (0, 0)
            step = max(1, chunk // max(len(ys), 1))
            for s in range(0, len(rows), step):
                xs = rows[s:s + step]
                dist = space.pairwise(xs, ys)
                diff = np.abs(vals[s:s + step, None] - fy[None, :])
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(dist > 0, diff / dist ** theta, 0.0)
                i = np.unravel_index(np.argmax(ratio), ratio.shape)
                if ratio[i] > best:
                    best, wit = float(ratio[i]), (int(xs[i[0]]), int(ys[i[1]]))
            if A < 2 and len(vals):
                far = np.abs(vals).max() / (C * base ** (-j) * (2.0 / A - 1.0)) ** theta
                best = max(best, far)
            out[e] = best / norm
            witness[e] = wit
    return out, witness


def multiplicity(frame: WaveletFrame) -> dict[int, int]:
    """Per level, the largest number of same-level supports containing a point."""
    csr = frame.phi.tocsr()
    out = {}
    for j in frame.level_range:
        sl = frame.level_slice(j)
        block = csr[:, sl]
        out[j] = int(np.diff(block.indptr).max()) if block.nnz else 0
    return out


def verify_frame(frame: WaveletFrame, space: PointCloudSpace) -> list[VerificationReport]:
    """Support, size, smoothness and multiplicity checks; stores the constants."""
    if frame.n_points != space.n:
        raise ValueError("frame and space do not match")
    base, d = float(frame.system.base), frame.d
    reports = []

    radii = support_radii(frame, space)
    e_sup = int(np.argmax(radii))
    support_ok = bool(np.all(radii < frame.C_phi_target))
    reports.append(VerificationReport("support", float(radii.max()), (e_sup,), support_ok,
                                      {"C_phi_target": frame.C_phi_target}))

    peak = np.abs(frame.phi).max(axis=0).toarray().ravel()
    size = peak / base ** (frame.element_level * d / 2.0)
    e_size = int(np.argmax(size))

    smooth, wit = _smoothness(frame, space)
    e_sm = int(np.argmax(smooth))
    C_phi = float(max(frame.C_phi_target, size.max(), smooth.max()))
    reports.append(VerificationReport("size", float(size.max()), (e_size,),
                                      bool(size.max() <= C_phi)))
    reports.append(VerificationReport("smoothness", float(smooth.max()),
                                      (e_sm, int(wit[e_sm, 0]), int(wit[e_sm, 1])),
                                      bool(smooth.max() <= C_phi), {"theta": frame.theta}))

    mult = multiplicity(frame)
    # levels whose support radius exceeds the diameter or falls below the point
    # spacing are saturated by the discretization and say nothing about overlap
    nn = space.nn_distance
    resolved = [m for j, m in mult.items()
                if nn < frame.C_phi_target * base ** (-j) < space.params.diam and m > 0]
    uniform = (max(resolved) <= 2 * min(resolved)) if resolved else True
    N = max(mult.values())
    reports.append(VerificationReport("multiplicity", float(N), (), uniform,
                                      {"per_level": mult, "uniform_over_resolved_levels": uniform}))

    lower, upper = frame.frame_bounds
    reports.append(VerificationReport("frame-bounds", upper / lower, (), lower > 0,
                                      {"lower": lower, "upper": upper}))

    frame.C_phi = C_phi
    frame.N_measured = N
    frame.constants = {
        "support": float(radii.max()),
        "size": float(size.max()),
        "smoothness": float(smooth.max()),
        "multiplicity_per_level": mult,
    }
    return reports


# ---------------------------------------------------------------- transforms

def analyze(frame: WaveletFrame, space: PointCloudSpace, f) -> CoefficientTable:
    """Coefficients ``<f, psi_{j,k}>`` in ``L^2(mu)``."""
    f = np.asarray(f, float)
    if frame.n_points != space.n or f.shape != (space.n,):
        raise ValueError("frame, space and function sizes do not match")
    u = frame.apply_inverse(f)
    flat = frame.phi.T @ (space.weights * u)
    return _table(frame, flat)


def _table(frame: WaveletFrame, flat: np.ndarray) -> CoefficientTable:
    return CoefficientTable(frame.levels, {j: np.array(flat[frame.level_slice(j)])
                                           for j in frame.level_range})


def synthesize(frame: WaveletFrame, coeffs: CoefficientTable) -> np.ndarray:
    """Pointwise ``sum_{j,k} c_{j,k} phi_{j,k}(x)`` with exactly rounded sums."""
    if tuple(coeffs.levels) != tuple(frame.levels):
        raise ValueError(f"coefficient levels {coeffs.levels} differ from frame {frame.levels}")
    c = coeffs.flat()
    if len(c) != frame.n_elements:
        raise ValueError("coefficient table does not match the frame's cubes")
    csr = frame.phi.tocsr()
    prod = csr.data * c[csr.indices]
    out = np.empty(frame.n_points)
    for i in range(frame.n_points):
        out[i] = math.fsum(prod[csr.indptr[i]:csr.indptr[i + 1]])
    return out


def delta_table(frame: WaveletFrame, j: int, k: int) -> CoefficientTable:
    flat = np.zeros(frame.n_elements)
    flat[frame.element(j, k)] = 1.0
    return _table(frame, flat)


# ---------------------------------------------------------------- io

def frame_header(frame: WaveletFrame) -> dict:
    return {
        "levels": list(frame.levels),
        "C_phi": frame.C_phi,
        "C_phi_target": frame.C_phi_target,
        "profile": frame.profile,
        "theta": frame.theta,
        "N_measured": frame.N_measured,
        "frame_bounds": list(frame.frame_bounds),
        "n_points": frame.n_points,
        "n_elements": frame.n_elements,
    }


def phi_csv(frame: WaveletFrame) -> str:
    """Rows ``j, k, then (index, value)`` pairs of the nonzero entries."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    indptr, indices, data = frame.phi.indptr, frame.phi.indices, frame.phi.data
    for e in range(frame.n_elements):
        row = [int(frame.element_level[e]), int(frame.element_cube[e])]
        for i, v in zip(indices[indptr[e]:indptr[e + 1]], data[indptr[e]:indptr[e + 1]]):
            row += [int(i), repr(float(v))]
        w.writerow(row)
    return buf.getvalue()


def psi_csv(frame: WaveletFrame) -> str:
    """Rows ``j, k, then psi at every point``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    psi = frame.dual_matrix()
    for e in range(frame.n_elements):
        w.writerow([int(frame.element_level[e]), int(frame.element_cube[e])]
                   + [repr(float(v)) for v in psi[:, e]])
    return buf.getvalue()


def write_frame(frame: WaveletFrame, stem, *, psi_limit: int = 4_000_000) -> list[str]:
    """Write ``stem.json``, ``stem.phi.csv`` and, when small enough, ``stem.psi.csv``."""
    stem = str(stem)
    header = frame_header(frame)
    files = [stem + ".json", stem + ".phi.csv"]
    store_psi = frame.n_points * frame.n_elements <= psi_limit
    header["psi_stored"] = store_psi
    with open(files[1], "w") as fh:
        fh.write(phi_csv(frame))
    if store_psi:
        files.append(stem + ".psi.csv")
        with open(files[2], "w") as fh:
            fh.write(psi_csv(frame))
    with open(files[0], "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=1)
    return files


def read_phi_csv(text: str, n_points: int) -> tuple[sp.csc_matrix, np.ndarray, np.ndarray]:
    rows, cols, vals, lev, cube = [], [], [], [], []
    for e, rec in enumerate(csv.reader(io.StringIO(text))):
        lev.append(int(rec[0]))
        cube.append(int(rec[1]))
        pairs = rec[2:]
        rows += [int(p) for p in pairs[0::2]]
        vals += [float(p) for p in pairs[1::2]]
        cols += [e] * (len(pairs) // 2)
    phi = sp.csc_matrix((vals, (rows, cols)), shape=(n_points, len(lev)))
    phi.sort_indices()
    return phi, np.array(lev, dtype=np.intp), np.array(cube, dtype=np.intp)


def read_frame(stem, system: DyadicSystem, space: PointCloudSpace) -> WaveletFrame:
    """Rebuild a frame written by :func:`write_frame` on its space and cubes."""
    stem = str(stem)
    with open(stem + ".json") as fh:
        header = json.load(fh)
    with open(stem + ".phi.csv") as fh:
        phi, lev, cube = read_phi_csv(fh.read(), space.n)
    if tuple(header["levels"]) != (system.j_min, system.j_max):
        raise ValueError("frame levels do not match the cube system")
    frame = frame_from_phi(system, space, phi, lev, cube, header["C_phi_target"],
                           header["profile"], theta=header["theta"])
    frame.C_phi = header["C_phi"]
    frame.N_measured = header["N_measured"]
    return frame
