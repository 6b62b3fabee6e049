"""Command-line interface and the config-driven experiment runner."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import battery as bat
from .axioms import verify_space
from .besov import BesovParams, besov_norm
from .dyadic import DyadicSystem, build_dyadic_system, finest_level, verify_dyadic
from .sampling import (
    CalibrationError,
    calibrate_kappa,
    proof_diagnostics,
    sampling_profile,
    verify_sampling_theorem,
)
from .space import GENERATORS, PointCloudSpace, discretize, load_space, space_summary
from .wavelets import (
    PROFILES,
    CoefficientTable,
    analyze,
    build_frame,
    read_frame,
    verify_frame,
    write_frame,
)

DEFAULT_CPHI = {"torus-1d": 1.5, "cantor-dset": 1.5, "anisotropic-square": 1.0}
DEFAULT_BASE = {"torus-1d": 2, "cantor-dset": 3, "anisotropic-square": 2}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    space: dict
    cubes: dict = field(default_factory=dict)
    frame: dict = field(default_factory=dict)
    battery: list = field(default_factory=bat.sampling_family)
    sampling: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config fields {sorted(extra)}")
        if "space" not in doc:
            raise ValueError("config needs a 'space' section")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        """Name resolution only; numeric checks happen in the stages."""
        gen = self.space.get("generator")
        if gen not in GENERATORS:
            raise StageError("discretize", ValueError(
                f"unknown generator {gen!r}; expected one of {GENERATORS}"))
        profile = self.frame.get("profile", "tent")
        if profile not in PROFILES:
            raise StageError("build_frame", ValueError(f"unknown profile {profile!r}"))
        for spec in self.battery:
            if spec.get("name") not in bat.REGISTRY:
                raise StageError("battery", ValueError(f"unknown test function {spec!r}"))
        mode = self.sampling.get("kappa_mode", "calibrate")
        if mode not in ("calibrate", "fixed"):
            raise StageError("sampling", ValueError(f"unknown kappa mode {mode!r}"))
        if mode == "fixed" and "kappa" not in self.sampling:
            raise StageError("sampling", ValueError("fixed kappa mode needs 'kappa'"))


def make_space(spec: dict) -> PointCloudSpace:
    return discretize(spec["generator"], spec.get("resolution"), depth=spec.get("depth"),
                      shape=spec.get("shape"), estimate=spec.get("estimate", True))


# ---------------------------------------------------------------- output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


class Outputs:
    """Writes files under one directory and keeps the manifest current."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self._add(name)
        return path

    def _add(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def adopt(self, paths):
        for p in paths:
            self._add(str(Path(p).relative_to(self.dir)))

    def manifest(self, complete: bool, stage: str | None = None, error: str | None = None):
        doc = {"complete": complete, "failed_stage": stage, "error": error,
               "files": sorted(self.files)}
        (self.dir / "MANIFEST.json").write_text(dump_json(doc))


# ---------------------------------------------------------------- pipeline

SAMPLING_COLUMNS = ["function", "p", "epsilon", "K_f", "kappa", "l", "formula_level", "clamped",
                    "error", "error_rel", "discrete_rel", "pass_error", "pass_sandwich", "status"]


def _sampling_row(rep) -> list:
    rel = (lambda v: None if v is None else v / rep.lp_f)
    return [rep.function, rep.plan.p, rep.plan.epsilon, rep.K_f, rep.plan.kappa, rep.plan.level,
            rep.plan.formula_level, rep.plan.clamped, rep.error, rel(rep.error),
            rel(rep.discrete_norm), rep.pass_error, rep.pass_sandwich, rep.status]


def run_experiment(config: ExperimentConfig) -> tuple[int, list[str]]:
    """Run every stage, writing outputs as they become available.

    Returns ``(status, files)``: 0 when every check passes, 1 when a check
    fails, 2 when a stage raises (the manifest then names the stage).
    """
    out = Outputs(config.output.get("directory", "homsamp-out"))
    stage = "validate"
    try:
        config.validate()
        stage = "discretize"
        space = make_space(config.space)
        out.write("space.json", dump_json(space.to_json()))
        gen = space.generator

        stage = "build_dyadic_system"
        base = config.cubes.get("base", DEFAULT_BASE[gen])
        c = config.cubes.get("separation", 1.0)
        j_min = config.cubes.get("j_min", 0)
        j_max = config.cubes.get("j_max")
        if j_max is None:
            j_max = finest_level(space, c, base)
        system = build_dyadic_system(space, j_min, j_max, c=c, base=base, verify=False)
        stage = "verify_dyadic"
        dy_reports = verify_dyadic(system, space)
        out.write("cubes.json", dump_json(system.to_json()))

        stage = "build_frame"
        frame = build_frame(system, space, config.frame.get("C_phi_target", DEFAULT_CPHI[gen]),
                            config.frame.get("profile", "tent"), measure=False)
        stage = "verify_frame"
        fr_reports = verify_frame(frame, space)
        out.adopt(write_frame(frame, out.dir / "frame",
                              psi_limit=config.output.get("psi_limit", 1_000_000)))
        out.write("verification.json", dump_json(
            {"dyadic": [r.to_dict() for r in dy_reports],
             "frame": [r.to_dict() for r in fr_reports]}))

        stage = "battery"
        fns = bat.build_battery(space, config.battery, system, seed=config.seed)
        family = {fn.name: fn.values for fn in fns}
        if len(family) != len(fns):
            raise ValueError("battery entries must have distinct names")

        stage = "analyze"
        coeffs = {name: analyze(frame, space, f) for name, f in family.items()}
        ps = config.sampling.get("p", [2.0])
        eps_list = config.sampling.get("epsilons", [0.5, 0.25, 0.1])
        d = space.params.d
        besov_rows = []
        profiles = {}
        for p in ps:
            bp = BesovParams.sampling_index(p, d)
            for name, f in family.items():
                prof = sampling_profile(space, system, frame, f, p, coeffs[name])
                profiles[(p, name)] = prof
                besov_rows.append([name, p, bp.s, bp.q, prof.besov_f, prof.lp_f, prof.K_f])
        out.write("besov.csv", csv_text(["function", "p", "s", "q", "besov_norm", "lp_norm",
                                         "K_f"], besov_rows))

        stage = "calibrate_kappa"
        mode = config.sampling.get("kappa_mode", "calibrate")
        K_fixed = config.sampling.get("K")
        kappas, calib = {}, {}
        for p in ps:
            if mode == "fixed":
                kappas[p] = float(config.sampling["kappa"])
                continue
            res = calibrate_kappa(space, system, frame, family, p, eps_list, K=K_fixed,
                                  profiles={n: profiles[(p, n)] for n in family})
            kappas[p] = res.kappa
            calib[str(p)] = res.to_dict()

        stage = "verify_sampling_theorem"
        reports = []
        for p in ps:
            for name, f in family.items():
                for eps in eps_list:
                    reports.append(verify_sampling_theorem(
                        space, system, frame, f, eps, kappas[p], p, K=K_fixed, name=name,
                        profile=profiles[(p, name)]))
        out.write("sampling.csv", csv_text(SAMPLING_COLUMNS, map(_sampling_row, reports)))

        stage = "proof_diagnostics"
        dspec = config.diagnostics
        dname = dspec.get("function", next(iter(family)))
        if dname not in family:
            raise ValueError(f"diagnostics function {dname!r} not in the battery")
        dl = dspec.get("level", (system.j_min + system.j_max) // 2)
        dp = dspec.get("p", ps[0])
        deps = dspec.get("epsilon", min(eps_list))
        diag = proof_diagnostics(space, system, frame, family[dname], dl, dp, deps, coeffs[dname])
        out.write("diagnostics_E.csv", csv_text(["j", "n", "E"], diag.E_rows()))
        out.write("diagnostics_cardinalities.csv",
                  csv_text(["j", "k", "lambda_count"], diag.cardinality_rows()))

        all_checks = ([r.passed for r in dy_reports] + [r.passed for r in fr_reports]
                      + [r.passed for r in reports])
        summary = {
            "space": space_summary(space),
            "cubes": {"levels": [system.j_min, system.j_max], "base": system.base,
                      "r0": system.r0_measured, "r1": system.r1_measured},
            "frame": {"C_phi": frame.C_phi, "N_measured": frame.N_measured,
                      "frame_bounds": list(frame.frame_bounds), "profile": frame.profile},
            "kappa": {str(p): kappas[p] for p in ps},
            "calibration": calib,
            "sampling": {"reports": len(reports),
                         "passed": sum(r.passed for r in reports),
                         "unresolvable": sum(r.pass_error is None for r in reports)},
            "diagnostics": {"function": dname, "level": dl, "p": dp, "epsilon": deps,
                            "R_measured": diag.R_measured,
                            "lambda_constants": diag.lambda_constants,
                            "Cp_estimate": diag.Cp_estimate, "j0": diag.j0_used,
                            "terms": diag.terms},
            "all_passed": all(all_checks),
        }
        out.write("summary.json", dump_json(summary))
        out.manifest(True)
        return (0 if summary["all_passed"] else 1), sorted(out.files)
    except CalibrationError as exc:
        out.manifest(False, stage, str(exc))
        return 2, sorted(out.files)
    except Exception as exc:  # every stage failure is reported with its stage
        if isinstance(exc, StageError):
            stage, exc = exc.stage, exc.cause
        out.manifest(False, stage, f"{type(exc).__name__}: {exc}")
        print(f"homsamp: stage {stage} failed: {exc}", file=sys.stderr)
        return 2, sorted(out.files)


# ---------------------------------------------------------------- subcommands

def _parse_function(text: str) -> dict:
    """``name`` or ``name:key=value,key=value``."""
    name, _, rest = text.partition(":")
    spec = {"name": name}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        try:
            spec[k] = int(v)
        except ValueError:
            spec[k] = float(v)
    return spec


def _load_system(path) -> DyadicSystem:
    with open(path) as fh:
        return DyadicSystem.from_json(json.load(fh))


def _emit(obj) -> None:
    sys.stdout.write(dump_json(obj))


def cmd_build_space(a) -> int:
    space = discretize(a.generator, a.resolution, depth=a.depth, shape=a.shape,
                       estimate=not a.no_estimate)
    Path(a.out).write_text(dump_json(space.to_json()))
    _emit(space_summary(space))
    return 0


def _default_radii(space: PointCloudSpace) -> np.ndarray:
    lo = max(4 * space.nn_distance, space.params.diam / 64)
    return np.geomspace(lo, 0.5 * space.params.diam, 8)


def cmd_verify(a) -> int:
    space = load_space(a.space)
    radii = a.radii if a.radii else _default_radii(space)
    reports = verify_space(space, a.budget, radii, seed=a.seed)
    _emit([r.to_dict() for r in reports])
    return 0 if all(r.passed for r in reports) else 1


def cmd_build_cubes(a) -> int:
    space = load_space(a.space)
    base = a.base or DEFAULT_BASE[space.generator]
    j_max = a.jmax if a.jmax is not None else finest_level(space, a.separation, base)
    system = build_dyadic_system(space, a.jmin, j_max, c=a.separation, base=base, verify=False)
    reports = verify_dyadic(system, space)
    Path(a.out).write_text(dump_json(system.to_json()))
    _emit([r.to_dict() for r in reports])
    return 0 if all(r.passed for r in reports) else 1


def cmd_build_frame(a) -> int:
    space = load_space(a.space)
    system = _load_system(a.cubes)
    cphi = a.cphi if a.cphi is not None else DEFAULT_CPHI[space.generator]
    frame = build_frame(system, space, cphi, a.profile, measure=False)
    reports = verify_frame(frame, space)
    write_frame(frame, a.out)
    _emit([r.to_dict() for r in reports])
    return 0 if all(r.passed for r in reports) else 1


def cmd_besov_norm(a) -> int:
    coeffs = CoefficientTable.from_csv(Path(a.coeffs).read_text())
    value = besov_norm(coeffs, BesovParams(a.s, a.p, a.q), a.d, a.base)
    print(repr(value))
    return 0


def _load_all(a):
    space = load_space(a.space)
    system = _load_system(a.cubes)
    frame = read_frame(a.frame, system, space)
    return space, system, frame


def cmd_sample(a) -> int:
    space, system, frame = _load_all(a)
    fn = bat.make_function(space, _parse_function(a.function), system, a.seed)
    if a.calibrate:
        fam = {f.name: f.values for f in bat.build_battery(space, bat.sampling_family(), system,
                                                            a.seed)}
        fam[fn.name] = fn.values
        kappa = calibrate_kappa(space, system, frame, fam, a.p, [a.eps]).kappa
    else:
        kappa = a.kappa
    rep = verify_sampling_theorem(space, system, frame, fn.values, a.eps, kappa, a.p, K=a.K,
                                  name=fn.name)
    _emit(rep.to_dict())
    return 0 if rep.passed else 1


def cmd_diagnose(a) -> int:
    space, system, frame = _load_all(a)
    fn = bat.make_function(space, _parse_function(a.function), system, a.seed)
    diag = proof_diagnostics(space, system, frame, fn.values, a.level, a.p, a.eps)
    Path(a.out + ".E.csv").write_text(csv_text(["j", "n", "E"], diag.E_rows()))
    Path(a.out + ".cardinalities.csv").write_text(
        csv_text(["j", "k", "lambda_count"], diag.cardinality_rows()))
    _emit({"R_measured": diag.R_measured, "I_max": diag.I_max,
           "lambda_constants": diag.lambda_constants, "Cp_estimate": diag.Cp_estimate,
           "j0": diag.j0_used, "terms": diag.terms, "error": diag.error})
    return 0


def cmd_run(a) -> int:
    if a.config:
        config = ExperimentConfig.load(a.config)
    else:
        space = {"generator": a.generator, "resolution": a.resolution}
        config = ExperimentConfig(space=space,
                                  frame={"profile": a.profile,
                                         **({"C_phi_target": a.cphi} if a.cphi else {})},
                                  output={"directory": a.out}, seed=a.seed)
    if a.out and a.config:
        config.output = {**config.output, "directory": a.out}
    status, files = run_experiment(config)
    _emit({"status": status, "files": files})
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homsamp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-space", help="discretize a model space")
    s.add_argument("--generator", required=True, choices=GENERATORS)
    s.add_argument("--resolution", type=int)
    s.add_argument("--depth", type=int)
    s.add_argument("--shape", type=int, nargs=2)
    s.add_argument("--no-estimate", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_space)

    s = sub.add_parser("verify", help="check the space axioms")
    s.add_argument("--space", required=True)
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--radii", type=float, nargs="*")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("build-cubes", help="build and verify a dyadic cube system")
    s.add_argument("--space", required=True)
    s.add_argument("--jmin", type=int, default=0)
    s.add_argument("--jmax", type=int)
    s.add_argument("--separation", type=float, default=1.0)
    s.add_argument("--base", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_cubes)

    s = sub.add_parser("build-frame", help="build and verify a bump frame")
    s.add_argument("--space", required=True)
    s.add_argument("--cubes", required=True)
    s.add_argument("--cphi", type=float)
    s.add_argument("--profile", default="tent", choices=sorted(PROFILES))
    s.add_argument("--out", required=True, help="file stem for .json / .phi.csv / .psi.csv")
    s.set_defaults(func=cmd_build_frame)

    s = sub.add_parser("besov-norm", help="Besov norm of a coefficient CSV")
    s.add_argument("--coeffs", required=True)
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--d", type=float, required=True)
    s.add_argument("--base", type=float, default=2.0)
    s.set_defaults(func=cmd_besov_norm)

    for name, func, help_ in (("sample", cmd_sample, "check the sampling inequality"),
                              ("diagnose", cmd_diagnose, "replay the proof's counting steps")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--space", required=True)
        s.add_argument("--cubes", required=True)
        s.add_argument("--frame", required=True, help="frame file stem")
        s.add_argument("--function", required=True, help="name or name:key=value,...")
        s.add_argument("--p", type=float, default=2.0)
        s.add_argument("--seed", type=int, default=0)
        s.set_defaults(func=func)
    sample = sub.choices["sample"]
    sample.add_argument("--eps", type=float, required=True)
    group = sample.add_mutually_exclusive_group(required=True)
    group.add_argument("--kappa", type=float)
    group.add_argument("--calibrate", action="store_true")
    sample.add_argument("--K", type=float, help="fixed class bound instead of the per-function ratio")
    diag = sub.choices["diagnose"]
    diag.add_argument("--level", type=int, required=True)
    diag.add_argument("--eps", type=float)
    diag.add_argument("--out", required=True, help="prefix for the two CSV files")

    s = sub.add_parser("run", help="full pipeline from a config")
    s.add_argument("--config")
    s.add_argument("--generator", default="torus-1d", choices=GENERATORS)
    s.add_argument("--resolution", type=int, default=1024)
    s.add_argument("--profile", default="tent", choices=sorted(PROFILES))
    s.add_argument("--cphi", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run" and not args.config and args.out is None:
        args.out = "homsamp-out"
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, CalibrationError) as exc:
        print(f"homsamp {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
