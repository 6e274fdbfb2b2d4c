"""Configuration files, the command line, and VTK / CSV output.

Config format: ``key = value`` lines, ``#`` or ``;`` comments, and optional
``[section]`` headers that only group keys (any key may appear in any
section or before the first one). Every key is listed in :data:`SCHEMA`.
"""
import argparse
import dataclasses
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .em import CompatibilityError, PhiProblem, check_compatibility, solve_phi_step
from .harness import (PRESETS, ErrorReport, ExperimentSpec, GridError, StepFailure,
                      TrajectoryCache, _n_steps, _ratio, build_setup, convergence_study,
                      run_simulation)
from .linalg import NumericError, SolverError
from .mesh import MeshError, mesh_stats, parse_medit_mesh
from .motion import region_at, transport_fixtures, verify_transport_identity


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key = key
        self.line = line


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    return None if text.strip().lower() == "none" else float(text)


# key -> (section, parser); sections only group keys in serialized output
SCHEMA = {
    "preset": ("experiment", str),
    "target_h": ("mesh", float),
    "nx": ("mesh", int),
    "ny": ("mesh", int),
    "T": ("time", float),
    "tau": ("time", float),
    "tau_ref": ("time", float),
    "tau_list": ("time", _floats),
    "tau_max": ("time", float),
    "source": ("physics", float),
    "source_region": ("physics", str),
    "current_density": ("physics", float),
    "cutoff": ("physics", float),
    "omega": ("physics", float),
    "velocity": ("physics", _floats),
    "air_velocity": ("physics", str),
    "taper_width": ("physics", float),
    "u0": ("physics", float),
    "sigma_workpiece": ("materials", float),
    "kappa_workpiece": ("materials", float),
    "alpha_workpiece": ("materials", float),
    "sigma_coil": ("materials", float),
    "kappa_coil": ("materials", float),
    "alpha_coil": ("materials", float),
    "kappa_background": ("materials", float),
    "alpha_background": ("materials", float),
    "quad_degree": ("solver", int),
    "tol": ("solver", float),
    "threads": ("solver", int),
    "output_stride": ("output", int),
    "output_dir": ("output", str),
    "vtk_stride": ("output", int),
    "cache": ("output", _bool),
    "cache_dir": ("output", str),
}
_MATERIAL_KEYS = tuple(k for k, (sec, _) in SCHEMA.items() if sec == "materials")
_CHOICES = {
    "preset": PRESETS,
    "source_region": ("all", "workpiece"),
    "air_velocity": ("auto", "rigid", "taper", "zero"),
}


@dataclass(frozen=True)
class SimulationConfig:
    """An :class:`ExperimentSpec` plus output and execution settings.

    Material entries left at ``None`` mean "table value for the preset".
    """

    spec: ExperimentSpec = ExperimentSpec()
    output_dir: str = "output"
    vtk_stride: int = 0
    threads: int = 1
    cache: bool = False
    cache_dir: str = ".inductheat_cache"

    def values(self):
        out = dataclasses.asdict(self.spec)
        out.update(output_dir=self.output_dir, vtk_stride=self.vtk_stride,
                   threads=self.threads, cache=self.cache, cache_dir=self.cache_dir)
        return out


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def serialize_config(cfg):
    """Text form that :func:`parse_config` reads back to an equal config."""
    vals = cfg.values()
    lines = []
    current = None
    for key, (section, _) in SCHEMA.items():
        value = vals[key]
        if value is None:
            continue
        if section != current:
            lines.append(f"\n[{section}]" if lines else f"[{section}]")
            current = section
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"


def parse_config(text):
    """Parse config text, fill preset defaults and check constraints."""
    raw, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", line=lineno)
        key, value = (p.strip() for p in s.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", key, lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", key, lineno)
        parser = SCHEMA[key][1]
        if key in _MATERIAL_KEYS:
            parser = _optional_float
        try:
            raw[key] = parser(value)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {err}", key, lineno) from None
        where[key] = lineno
        if key in _CHOICES and raw[key] not in _CHOICES[key]:
            raise ConfigError(f"{key} must be one of {_CHOICES[key]}, got {raw[key]!r}",
                              key, lineno)

    extra = {k: raw.pop(k) for k in ("output_dir", "vtk_stride", "threads", "cache",
                                     "cache_dir") if k in raw}
    spec = ExperimentSpec(**raw).resolved()
    cfg = SimulationConfig(spec, **extra)
    _check_constraints(cfg, where)
    return cfg


def _check_constraints(cfg, where):
    s = cfg.spec

    def fail(msg, *keys):
        lines = [where[k] for k in keys if k in where]
        raise ConfigError(msg + f" (keys: {', '.join(keys)})", keys[0],
                          min(lines) if lines else None)

    for key in ("T", "tau", "tau_max", "tol", "taper_width"):
        if not getattr(s, key) > 0:
            fail(f"{key} must be positive", key)
    if s.cutoff is not None and not s.cutoff > 0:
        fail("cutoff must be positive", "cutoff")
    if s.tau > s.tau_max:
        fail(f"tau = {s.tau:g} exceeds tau_max = {s.tau_max:g}", "tau", "tau_max")
    try:
        _n_steps(s.T, s.tau)
    except GridError as err:
        fail(str(err), "T", "tau")
    if s.tau_ref is not None:
        if not s.tau_ref > 0:
            fail("tau_ref must be positive", "tau_ref")
        for tau in (s.tau,) + tuple(s.tau_list or ()):
            key = "tau" if tau == s.tau else "tau_list"
            try:
                _ratio(tau, s.tau_ref)
            except GridError as err:
                fail(str(err), "tau_ref", key)
    for tau in s.tau_list or ():
        if tau > s.tau_max:
            fail(f"tau_list entry {tau:g} exceeds tau_max = {s.tau_max:g}",
                 "tau_list", "tau_max")
        try:
            _n_steps(s.T, tau)
        except GridError as err:
            fail(str(err), "T", "tau_list")
    if s.preset in ("disk_concentric", "disk_eccentric"):
        if not s.target_h > 0:
            fail("target_h must be positive", "target_h")
    elif s.nx < 1 or s.ny < 1:
        fail("nx and ny must be >= 1", "nx", "ny")
    if s.quad_degree not in (1, 2, 4, 6):
        fail("quad_degree must be one of 1, 2, 4, 6", "quad_degree")
    if s.output_stride < 1:
        fail("output_stride must be >= 1", "output_stride")
    if len(s.velocity) != 2:
        fail("velocity needs two components", "velocity")
    if cfg.vtk_stride < 0:
        fail("vtk_stride must be >= 0", "vtk_stride")
    if cfg.threads < 1:
        fail("threads must be >= 1", "threads")


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------- emitters

def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_vtk_step(mesh, fields, path, cell_fields=("Q",), title="inductheat"):
    """Write a legacy ASCII VTK 2.0 unstructured grid of triangles.

    ``fields`` maps names to arrays of length ``n_nodes`` (point data) or
    ``n_triangles`` (cell data). Names in ``cell_fields`` go to cell data
    when both lengths coincide. Integer arrays are written as ``int``.
    """
    n, m = mesh.n_nodes, mesh.n_triangles
    point, cell = [], []
    for name, arr in (fields or {}).items():
        arr = np.asarray(arr)
        if arr.ndim != 1 or len(arr) not in (n, m):
            raise ValueError(f"field {name!r} has shape {arr.shape}; expected ({n},) or ({m},)")
        if " " in name:
            raise ValueError(f"field name {name!r} contains a space")
        if len(arr) == m and (len(arr) != n or name in cell_fields):
            cell.append((name, arr))
        else:
            point.append((name, arr))

    out = ["# vtk DataFile Version 2.0", title.splitlines()[0][:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.points.tolist()]
    out.append(f"CELLS {m} {4 * m}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {m}")
    out += ["5"] * m

    def block(items):
        for name, arr in items:
            if np.issubdtype(arr.dtype, np.integer):
                out.append(f"SCALARS {name} int 1")
                out.append("LOOKUP_TABLE default")
                out.extend(str(int(v)) for v in arr)
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(repr(float(v)) for v in arr)

    if point:
        out.append(f"POINT_DATA {n}")
        block(point)
    if cell:
        out.append(f"CELL_DATA {m}")
        block(cell)
    _atomic_write(path, "\n".join(out) + "\n")
    return path


def write_error_csv(report, path):
    """``tau,E_u,sqrt_E_u`` rows plus a ``# slope=...,rate=...`` footer."""
    lines = ["tau,E_u,sqrt_E_u"]
    for tau, err in report.rows:
        lines.append(f"{tau:.17g},{err:.17g},{math.sqrt(err):.17g}")
    if report.rows:
        lines.append(f"# slope={report.slope:.17g},rate={report.rate:.17g},"
                     f"tau_ref={report.tau_ref:.17g}")
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_error_csv(path):
    rows, footer = [], {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "tau,E_u,sqrt_E_u":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                footer = {k: float(v) for k, v in
                          (item.split("=") for item in line[1:].strip().split(","))}
            elif line:
                tau, err, _ = line.split(",")
                rows.append((float(tau), float(err)))
    return rows, footer


@dataclass
class RunManifest:
    """Record of one CLI run; written atomically as JSON."""

    command: str
    config: dict
    versions: dict = field(default_factory=lambda: {
        "inductheat": __version__, "numpy": np.__version__,
        "scipy": __import__("scipy").__version__, "python": platform.python_version()})
    wall_time: float = 0.0
    iterations: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def write(self, path):
        _atomic_write(path, json.dumps(dataclasses.asdict(self), indent=1, default=_jsonable))
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------- commands

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser():
    p = _Parser(prog="inductheat", description="Moving-workpiece induction heating runs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one simulation"),
                        ("converge", "run a temporal convergence study"),
                        ("verify", "run the invariant checks"),
                        ("mesh-info", "print mesh statistics")):
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", help="config file")
        src.add_argument("--preset", choices=PRESETS, help="preset with default settings")
        if name == "mesh-info":
            src.add_argument("--mesh", help="Medit .mesh file")
        else:
            sp.add_argument("--output", help="output directory (overrides output_dir)")
    return p


def _config_from_args(args):
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = parse_config(f"preset = {args.preset or 'disk_concentric'}\n")
    if getattr(args, "output", None):
        cfg = dataclasses.replace(cfg, output_dir=args.output)
    return cfg


def _cmd_run(cfg, out):
    spec = cfg.spec
    setup = build_setup(spec)
    os.makedirs(cfg.output_dir, exist_ok=True)
    written = []
    n = spec.n_steps()
    digits = max(6, len(str(n)))

    def on_step(i, t, u):
        if cfg.vtk_stride and (i % cfg.vtk_stride == 0 or i == n):
            reg = region_at(setup.layout, setup.motion, setup.mesh.points, t).astype(np.int64)
            written.append(os.path.join(cfg.output_dir, f"step_{i:0{digits}d}.vtk"))
            pending.append((i, u.copy(), reg, written[-1]))

    pending = []
    start = time.perf_counter()
    cache = TrajectoryCache(cfg.cache_dir) if cfg.cache else None
    traj = run_simulation(spec, setup, cache=cache, on_step=on_step)
    for i, u, reg, path in pending:
        fields = {"u": u, "region": reg}
        if i in traj.A:
            fields["A"] = traj.A[i]
        if i in traj.Q_cell:
            fields["Q"] = traj.Q_cell[i]
        write_vtk_step(setup.mesh, fields, path, title=f"{spec.preset} t={traj.times[i]!r}")
    np.save(os.path.join(cfg.output_dir, "u_final.npy"), traj.u[-1])
    manifest = RunManifest("run", cfg.values(), wall_time=time.perf_counter() - start,
                           iterations=traj.iterations, outputs=written + ["u_final.npy"])
    manifest.write(os.path.join(cfg.output_dir, "manifest.json"))
    u = traj.u[-1]
    print(f"{spec.preset}: {traj.n_steps} steps of {spec.tau:g} s, "
          f"u in [{u.min():.6g}, {u.max():.6g}] K, {manifest.wall_time:.1f} s", file=out)
    if traj.q_max is not None:
        print(f"max cut-off Joule density {traj.q_max.max():.6g} W/m^3", file=out)
    return EXIT_OK


def _cmd_converge(cfg, out):
    start = time.perf_counter()
    cache = TrajectoryCache(cfg.cache_dir) if cfg.cache else None
    report = convergence_study(cfg.spec, cache=cache, workers=cfg.threads)
    os.makedirs(cfg.output_dir, exist_ok=True)
    csv_path = write_error_csv(report, os.path.join(cfg.output_dir, "errors.csv"))
    RunManifest("converge", cfg.values(), wall_time=time.perf_counter() - start,
                outputs=[os.path.basename(csv_path)]).write(
        os.path.join(cfg.output_dir, "manifest.json"))
    print(f"{'tau':>12} {'E_u':>14} {'sqrt(E_u)':>14}", file=out)
    for tau, err in report.rows:
        print(f"{tau:12.6g} {err:14.6e} {math.sqrt(err):14.6e}", file=out)
    print(f"slope {report.slope:.4f}  rate {report.rate:.4f}", file=out)
    return EXIT_OK


def run_verification(spec, steps=100):
    """Invariant checks: ``[(name, passed, detail), ...]``."""
    results = []
    for name, motion, layout, f in transport_fixtures():
        r = verify_transport_identity(motion, layout, f, 0.3, 1e-4, degree=6)
        results.append((f"transport:{name}", r <= 1e-3, f"residual {r:.3g}"))

    from .harness import manufactured_phi_solution
    from .mesh import generate_rect_mesh
    coil = generate_rect_mesh(1.0, 1.0, 8, 8, gamma_labels=True)
    _, _, j = manufactured_phi_solution(1.0)
    res = check_compatibility(PhiProblem(coil, 1.0, j))
    results.append(("compatibility:balanced", res <= 1e-8, f"residual {res:.3g}"))
    try:
        solve_phi_step(PhiProblem(coil, 1.0, lambda p, t: np.ones(len(p))))
        results.append(("compatibility:rejects_unbalanced", False, "accepted"))
    except CompatibilityError as err:
        results.append(("compatibility:rejects_unbalanced", True, str(err)))

    if spec.preset != "phi_validation":
        quiet = spec.with_(source=0.0, current_density=0.0)
        quiet = quiet.with_(T=steps * quiet.resolved().tau)
        traj = run_simulation(quiet, initial_u=None)
        dev = float(np.max(np.abs(traj.u - quiet.resolved().u0)))
        results.append(("constant_preservation", dev <= 1e-7, f"max deviation {dev:.3g} K"))
    return results


def _cmd_verify(cfg, out):
    results = run_verification(cfg.spec)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def _cmd_mesh_info(args, out):
    if args.mesh:
        with open(args.mesh) as fh:
            mesh = parse_medit_mesh(fh.read())
    else:
        mesh = build_setup(_config_from_args(args).spec).mesh
    for key, value in mesh_stats(mesh).items():
        print(f"{key}: {value}", file=out)
    return EXIT_OK


def main(argv=None, out=None):
    """Command-line entry point; returns the exit code."""
    out = sys.stdout if out is None else out
    err = sys.stderr
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=err)
        return EXIT_VALIDATION
    try:
        if args.command == "mesh-info":
            return _cmd_mesh_info(args, out)
        cfg = _config_from_args(args)
        if args.command == "run":
            return _cmd_run(cfg, out)
        if args.command == "converge":
            return _cmd_converge(cfg, out)
        return _cmd_verify(cfg, out)
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=err)
        return EXIT_VALIDATION
    except (NumericError, SolverError, StepFailure, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    except (ConfigError, MeshError, GridError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=err)
        return EXIT_VALIDATION


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
