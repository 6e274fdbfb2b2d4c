"""Experiment presets, the Rothe time loop, and temporal convergence studies."""
import dataclasses
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import __version__, assembly
from .em import (DEFAULT_CUTOFF, EmState, PhiProblem, SourceCurrent, cutoff,
                 joule_density, sample_fields, solve_A_step, solve_phi_step)
from .heat import (INITIAL_TEMPERATURE, TAU_MAX, EnergyDiagnostics, HeatState,
                   check_peclet, energy_diagnostics, solve_u_step)
from .linalg import DEFAULT_TOL
from .mesh import generate_disk_mesh, generate_rect_mesh
from .motion import (AIR, ALUMINIUM, COPPER, CoefficientSet, Disk, Material,
                     Rectangle, Region, RegionLayout, RigidMotion, Union,
                     VelocityField)
from .quadrature import get_rule

log = logging.getLogger(__name__)

PRESETS = ("disk_concentric", "disk_eccentric", "coupled_2d",
           "manufactured_heat", "phi_validation")
HEAT_ONLY = ("disk_concentric", "disk_eccentric", "manufactured_heat")


class GridError(ValueError):
    pass


class StepFailure(RuntimeError):
    def __init__(self, step, t, cause):
        super().__init__(f"step {step} (t={t:g}) failed: {cause}")
        self.step = step
        self.t = t
        self.cause = cause
        self.report = getattr(cause, "report", None)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a trajectory.

    ``None`` entries take the preset default (see :func:`preset_defaults`).
    Material overrides address the three regions; ``background`` is the
    region outside workpiece and coil (air, or copper in the disk presets).
    """

    preset: str = "disk_concentric"
    # mesh
    target_h: float = None
    nx: int = None
    ny: int = None
    # time grid
    T: float = None
    tau: float = None
    tau_ref: float = None
    tau_list: tuple = None
    tau_max: float = TAU_MAX
    # physics
    source: float = None
    source_region: str = None
    current_density: float = None
    cutoff: float = DEFAULT_CUTOFF
    omega: float = None
    velocity: tuple = None
    air_velocity: str = None
    taper_width: float = 0.02
    u0: float = INITIAL_TEMPERATURE
    sigma_workpiece: float = None
    kappa_workpiece: float = None
    alpha_workpiece: float = None
    sigma_coil: float = None
    kappa_coil: float = None
    alpha_coil: float = None
    kappa_background: float = None
    alpha_background: float = None
    # numerics / output
    quad_degree: int = 4
    tol: float = DEFAULT_TOL
    output_stride: int = 1

    def resolved(self):
        """Copy with every ``None`` replaced by the preset default."""
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        defaults = preset_defaults(self.preset)
        vals = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for k, v in defaults.items():
            if vals.get(k) is None:
                vals[k] = v
        if vals["tau_list"] is not None:
            vals["tau_list"] = tuple(float(x) for x in vals["tau_list"])
        if vals["velocity"] is not None:
            vals["velocity"] = tuple(float(x) for x in vals["velocity"])
        return ExperimentSpec(**vals)

    def with_(self, **kw):
        return dataclasses.replace(self, **kw)

    def n_steps(self, tau=None):
        spec = self.resolved()
        tau = spec.tau if tau is None else tau
        return _n_steps(spec.T, tau)

    def validate(self):
        spec = self.resolved()
        if not spec.tau > 0 or not spec.T > 0:
            raise ValueError("T and tau must be positive")
        if spec.tau > spec.tau_max:
            raise ValueError(f"tau={spec.tau:g} exceeds tau_max={spec.tau_max:g}")
        _n_steps(spec.T, spec.tau)
        if spec.cutoff is not None and not spec.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if spec.output_stride < 1:
            raise ValueError("output_stride must be >= 1")
        return spec

    def key(self):
        payload = json.dumps(dataclasses.asdict(self.resolved()), sort_keys=True, default=list)
        return hashlib.sha256(f"{__version__}|{payload}".encode()).hexdigest()[:20]


def _n_steps(T, tau):
    q = Fraction(T).limit_denominator(1 << 40) / Fraction(tau).limit_denominator(1 << 40)
    n = round(q)
    if n < 1 or abs(float(q) - n) > 1e-9 * max(1, n):
        raise GridError(f"T={T:g} is not an integer multiple of tau={tau:g}")
    return int(n)


def _ratio(tau, tau_ref):
    r = tau / tau_ref
    m = round(r)
    if m < 1 or abs(r - m) > 1e-9 * m:
        raise GridError(f"tau_ref={tau_ref:g} does not divide tau={tau:g}")
    return int(m)


def preset_defaults(preset):
    """Documented defaults of each preset (desk scale)."""
    common = dict(air_velocity="auto")
    if preset in ("disk_concentric", "disk_eccentric"):
        return dict(common, target_h=0.004, T=8.0, tau=2.0 ** -5, tau_ref=2.0 ** -6,
                    tau_list=tuple(2.0 ** -j for j in (2, 3, 4, 5)), source=1e6,
                    source_region="all", omega=0.125 * math.pi, velocity=(0.0, 0.0),
                    current_density=0.0, nx=0, ny=0)
    if preset == "coupled_2d":
        return dict(common, nx=200, ny=200, target_h=0.0, T=32.0, tau=0.25,
                    tau_ref=2.0 ** -4, tau_list=(0.25, 0.125), source=0.0,
                    source_region="all", omega=0.0, velocity=(0.0, 0.0046875),
                    current_density=1e7)
    if preset == "manufactured_heat":
        return dict(common, nx=32, ny=32, target_h=0.0, T=1.0, tau=2.0 ** -4,
                    tau_ref=2.0 ** -9, tau_list=tuple(2.0 ** -j for j in (3, 4, 5, 6)),
                    source=0.0, source_region="all", omega=0.0, velocity=(0.0, 0.0),
                    current_density=0.0)
    if preset == "phi_validation":
        return dict(common, nx=16, ny=16, target_h=0.0, T=1.0, tau=0.25, tau_ref=0.25,
                    tau_list=(0.25,), source=0.0, source_region="all", omega=0.0,
                    velocity=(0.0, 0.0), current_density=0.0)
    raise ValueError(f"unknown preset {preset!r}")


# ---------------------------------------------------------------- manufactured data

def manufactured_heat_solution():
    """``u = cos(pi x) cos(pi y) exp(-t)`` on the unit square with alpha = kappa = 1.

    Returns ``(u, grad_u, f)``; ``u`` satisfies the homogeneous Neumann
    condition and ``f = u_t - laplace(u) = (2 pi^2 - 1) u``.
    """
    pi = math.pi

    def u(p, t):
        return np.cos(pi * p[:, 0]) * np.cos(pi * p[:, 1]) * np.exp(-t)

    def grad_u(p, t):
        e = np.exp(-t)
        return np.column_stack([-pi * np.sin(pi * p[:, 0]) * np.cos(pi * p[:, 1]) * e,
                                -pi * np.cos(pi * p[:, 0]) * np.sin(pi * p[:, 1]) * e])

    def f(p, t):
        return (2 * pi ** 2 - 1) * u(p, t)

    return u, grad_u, f


def manufactured_phi_solution(sigma):
    """Harmonic ``phi = cosh(pi (x - 1/2)) cos(pi y)`` on the unit square.

    Zero flux on top/bottom, zero mean; returns ``(phi, grad_phi, j)`` with
    ``j = -sigma grad(phi) . n`` on the left/right edges.
    """
    pi = math.pi

    def phi(p, t=None):
        return np.cosh(pi * (p[:, 0] - 0.5)) * np.cos(pi * p[:, 1])

    def grad_phi(p, t=None):
        return np.column_stack([pi * np.sinh(pi * (p[:, 0] - 0.5)) * np.cos(pi * p[:, 1]),
                                -pi * np.cosh(pi * (p[:, 0] - 0.5)) * np.sin(pi * p[:, 1])])

    def j(p, t=None):
        nx = np.where(p[:, 0] < 0.5, -1.0, 1.0)
        return -sigma * grad_phi(p)[:, 0] * nx

    return phi, grad_phi, j


# ---------------------------------------------------------------- setup

@dataclass
class Setup:
    spec: ExperimentSpec
    mesh: object
    layout: RegionLayout
    motion: RigidMotion
    coeffs: CoefficientSet
    velocity: VelocityField
    rule: object
    current: SourceCurrent = None
    heat_source: object = None
    phi_problem: PhiProblem = None
    exact: tuple = None

    @property
    def coupled(self):
        return self.spec.preset == "coupled_2d"


@lru_cache(maxsize=8)
def _disk_mesh(radius, h):
    return generate_disk_mesh(radius, h)


@lru_cache(maxsize=8)
def _rect_mesh(w, hgt, nx, ny, x0, y0, gamma):
    return generate_rect_mesh(w, hgt, nx, ny, origin=(x0, y0), gamma_labels=gamma)


def _materials(spec, workpiece, coil, background):
    def pick(base, name):
        return Material(
            base.sigma if getattr(spec, f"sigma_{name}", None) is None else getattr(spec, f"sigma_{name}"),
            base.kappa if getattr(spec, f"kappa_{name}") is None else getattr(spec, f"kappa_{name}"),
            base.alpha if getattr(spec, f"alpha_{name}") is None else getattr(spec, f"alpha_{name}"))
    return CoefficientSet(pick(workpiece, "workpiece"), pick(coil, "coil"),
                          pick(background, "background"))


COUPLED_HALF_WIDTH = 0.25
COUPLED_COILS = (Rectangle(0.1075, -0.0025, 0.1125, 0.0025), Rectangle(-0.1125, -0.0025, -0.1075, 0.0025))
COUPLED_STRIPS = (Rectangle(0.081, -0.22, 0.092, 0.08), Rectangle(-0.092, -0.22, -0.081, 0.08))


def build_setup(spec):
    """Mesh, geometry, materials and sources for ``spec``."""
    spec = spec.resolved()
    rule = get_rule(spec.quad_degree)
    p = spec.preset
    air_mode = None if spec.air_velocity == "auto" else spec.air_velocity
    if p in ("disk_concentric", "disk_eccentric"):
        R = 0.2
        mesh = _disk_mesh(R, spec.target_h)
        wp = Disk((0.0, 0.0), 0.1) if p == "disk_concentric" else Disk((0.1, 0.0), 0.05)
        layout = RegionLayout(wp, None, Disk((0.0, 0.0), R * (1 + 1e-9)))
        motion = RigidMotion.rotation(spec.omega)
        # the rest of the disk is copper; it carries no current in these runs
        background = Material(0.0, COPPER.kappa, COPPER.alpha)
        coeffs = _materials(spec, ALUMINIUM, COPPER, background)
        if spec.source_region == "all":
            heat_source = spec.source
        elif spec.source_region == "workpiece":
            f0 = spec.source

            def heat_source(pts, t):
                return np.where(layout.workpiece.contains(motion.inverse(pts, t)), f0, 0.0)
        else:
            raise ValueError(f"unknown source_region {spec.source_region!r}")
        return Setup(spec, mesh, layout, motion, coeffs,
                     VelocityField(motion, layout, air_mode, spec.taper_width), rule,
                     heat_source=heat_source)
    if p == "coupled_2d":
        c = COUPLED_HALF_WIDTH
        mesh = _rect_mesh(2 * c, 2 * c, spec.nx, spec.ny, -c, -c, False)
        layout = RegionLayout(Union(COUPLED_STRIPS), Union(COUPLED_COILS),
                              Rectangle(-c, -c, c, c))
        motion = RigidMotion.translation(spec.velocity)
        coeffs = _materials(spec, ALUMINIUM, COPPER, AIR)
        j = spec.current_density
        current = SourceCurrent(((COUPLED_COILS[0], j), (COUPLED_COILS[1], -j)))
        return Setup(spec, mesh, layout, motion, coeffs,
                     VelocityField(motion, layout, air_mode, spec.taper_width), rule,
                     current=current)
    if p == "manufactured_heat":
        mesh = _rect_mesh(1.0, 1.0, spec.nx, spec.ny, 0.0, 0.0, False)
        unit = Material(1.0, 1.0, 1.0)
        coeffs = CoefficientSet(unit, unit, Material(0.0, 1.0, 1.0))
        layout = RegionLayout(Rectangle(0.0, 0.0, 1.0, 1.0))
        motion = RigidMotion()
        u, grad_u, f = manufactured_heat_solution()
        return Setup(spec, mesh, layout, motion, coeffs,
                     VelocityField(motion, layout, "zero"), rule, heat_source=f,
                     exact=(u, grad_u))
    if p == "phi_validation":
        mesh = _rect_mesh(1.0, 1.0, spec.nx, spec.ny, 0.0, 0.0, True)
        coeffs = _materials(spec, ALUMINIUM, COPPER, AIR)
        sigma = coeffs.coil.sigma
        phi, grad_phi, j = manufactured_phi_solution(sigma)
        layout = RegionLayout(Rectangle(0.0, 0.0, 1.0, 1.0))
        motion = RigidMotion()
        return Setup(spec, mesh, layout, motion, coeffs,
                     VelocityField(motion, layout, "zero"), rule,
                     phi_problem=PhiProblem(mesh, sigma, j), exact=(phi, grad_phi))
    raise ValueError(f"unknown preset {p!r}")


# ---------------------------------------------------------------- trajectory

@dataclass
class RotheTrajectory:
    """Step values of a run on a uniform time grid.

    ``u`` holds every step (row 0 is the initial datum). ``A``, ``Q_cell``
    (cell-averaged cut-off Joule density) and ``phi`` are stored every
    ``output_stride`` steps, keyed by step index. Per-step Joule extrema
    are always kept.
    """

    times: np.ndarray
    u: np.ndarray
    A: dict = field(default_factory=dict)
    Q_cell: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)
    q_raw_max: np.ndarray = None
    q_max: np.ndarray = None
    q_min: np.ndarray = None
    q_coil_mean: np.ndarray = None
    diagnostics: list = field(default_factory=list)
    iterations: dict = field(default_factory=dict)
    spec: ExperimentSpec = None
    wall_time: float = 0.0

    @property
    def tau(self):
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self):
        return len(self.times) - 1


def run_simulation(spec, setup=None, initial_u=None, cache=None, on_step=None):
    """Run the backward-Euler chain for ``spec``.

    Per step ``i``: regions and coefficients at ``t_i``, then (coupled
    preset) the vector potential, the Joule density and its cut-off, then
    the temperature. ``initial_u`` overrides the constant initial datum
    with a nodal vector or a callable. ``on_step(i, t_i, u_i)`` is called
    after every step.
    """
    spec = spec.validate()
    if cache is not None and initial_u is None:
        hit = cache.get(spec)
        if hit is not None:
            return hit
    setup = build_setup(spec) if setup is None else setup
    mesh, rule = setup.mesh, setup.rule
    n = spec.n_steps()
    tau = spec.tau
    times = np.arange(n + 1) * tau
    start = time.perf_counter()

    if setup.spec.preset == "phi_validation":
        traj = RotheTrajectory(times, np.zeros((n + 1, mesh.n_nodes)), spec=spec)
        for i in range(1, n + 1):
            try:
                phi = solve_phi_step(setup.phi_problem, times[i], rule, spec.tol)
            except Exception as err:
                raise StepFailure(i, times[i], err) from err
            if i % spec.output_stride == 0 or i == n:
                traj.phi[i] = phi
        traj.wall_time = time.perf_counter() - start
        return traj

    setup.layout.validate(setup.motion, np.linspace(0.0, spec.T, 101))

    if initial_u is None:
        if setup.exact is not None:
            u_exact = setup.exact[0]
            heat = HeatState.initial(mesh, lambda p: u_exact(p, 0.0))
        else:
            heat = HeatState.initial(mesh, spec.u0)
    elif callable(initial_u):
        heat = HeatState.initial(mesh, initial_u)
    else:
        u0 = np.array(initial_u, dtype=float)
        heat = HeatState(u0, u0.copy())

    U = np.empty((n + 1, mesh.n_nodes))
    U[0] = heat.u_curr
    traj = RotheTrajectory(times, U, spec=spec)
    em = EmState.initial(mesh.n_nodes) if setup.coupled else None
    if setup.coupled:
        traj.A[0] = em.A_curr.copy()
        traj.q_raw_max = np.zeros(n + 1)
        traj.q_max = np.zeros(n + 1)
        traj.q_min = np.zeros(n + 1)
        traj.q_coil_mean = np.zeros(n + 1)
    diag = EnergyDiagnostics()
    iters = {"A": [], "u": []}

    for i in range(1, n + 1):
        t_i = float(times[i])
        try:
            sample = sample_fields(mesh, rule, setup.layout, setup.motion, setup.coeffs,
                                   t_i, setup.velocity)
            if i == 1:
                check_peclet(mesh, rule, sample)
            if setup.coupled:
                A_i, rep = solve_A_step(mesh, setup.motion, setup.layout, setup.coeffs, em,
                                        setup.current, tau, t_i, rule, spec.tol, sample,
                                        return_report=True)
                iters["A"].append(rep.iterations)
                em = em.advance(A_i, t_i)
                raw = joule_density(mesh, em, setup.current, setup.motion, setup.layout,
                                    setup.coeffs, tau, t_i, rule, sample)
                source = cutoff(raw, spec.cutoff)
                traj.q_raw_max[i] = raw.max()
                traj.q_max[i] = source.max()
                traj.q_min[i] = float(source.Q.min())
                coil = sample.regions == Region.COIL
                w = mesh.element_geometry(rule).qweights
                traj.q_coil_mean[i] = (float(np.sum(source.Q[coil] * w[coil]) / np.sum(w[coil]))
                                       if np.any(coil) else 0.0)
            else:
                source = setup.heat_source
            u_i, rep = solve_u_step(mesh, setup.motion, setup.layout, setup.coeffs, heat,
                                    source, tau, t_i, rule, spec.tol, sample,
                                    tau_max=spec.tau_max, return_report=True)
            iters["u"].append(rep.iterations)
        except Exception as err:
            raise StepFailure(i, t_i, err) from err
        heat = heat.advance(u_i, t_i)
        U[i] = u_i
        diag = energy_diagnostics(mesh, rule, setup.coeffs, setup.layout, setup.motion,
                                  u_i, t_i, diag, tau, sample=sample)
        traj.diagnostics.append(diag)
        if setup.coupled and (i % spec.output_stride == 0 or i == n):
            traj.A[i] = em.A_curr.copy()
            traj.Q_cell[i] = source.cell_average(rule)
        if on_step is not None:
            on_step(i, t_i, u_i)

    traj.iterations = {k: np.array(v, dtype=np.int64) for k, v in iters.items() if v}
    traj.wall_time = time.perf_counter() - start
    log.info("%s: %d steps of %g s in %.1f s", spec.preset, n, tau, traj.wall_time)
    if cache is not None and initial_u is None:
        cache.put(spec, traj)
    return traj


# ---------------------------------------------------------------- errors

def relative_error(coarse, ref, mesh, rule=None):
    """Squared-norm ratio of the piecewise-constant-in-time interpolants.

    ``sum_k tau_ref ||u_c(t_k) - u_ref,k||_H1^2 / sum_k tau_ref ||u_ref,k||_H1^2``
    over the fine steps ``k = 1..n_ref``, where ``u_c(t_k)`` is the coarse
    value on the coarse interval ``(t_{i-1}, t_i]`` containing ``t_k``.
    """
    rule = get_rule(4) if rule is None else rule
    if coarse.u.shape[1] != ref.u.shape[1] or ref.u.shape[1] != mesh.n_nodes:
        raise GridError("trajectories live on different meshes")
    if abs(coarse.times[-1] - ref.times[-1]) > 1e-9 * max(1.0, ref.times[-1]):
        raise GridError("trajectories cover different time ranges")
    m = _ratio(coarse.tau, ref.tau)
    M, K = assembly._unit_matrices(mesh, rule)
    H = M + K
    num = den = 0.0
    for k in range(1, ref.n_steps + 1):
        ur = ref.u[k]
        d = coarse.u[-(-k // m)] - ur
        num += float(d @ (H @ d))
        den += float(ur @ (H @ ur))
    num *= ref.tau
    den *= ref.tau
    if den == 0.0:
        raise ZeroDivisionError("reference trajectory has zero norm")
    return num / den


def nodal_time_error(coarse, ref, mesh, rule=None):
    """``sqrt(sum_i tau ||u_c,i - u_ref(t_i)||_H1^2)`` at the coarse time points."""
    rule = get_rule(4) if rule is None else rule
    m = _ratio(coarse.tau, ref.tau)
    M, K = assembly._unit_matrices(mesh, rule)
    H = M + K
    total = 0.0
    for i in range(1, coarse.n_steps + 1):
        d = coarse.u[i] - ref.u[i * m]
        total += float(d @ (H @ d))
    return math.sqrt(coarse.tau * total)


def fit_rate(rows):
    """Least-squares slope of ``log E`` against ``log tau``."""
    rows = list(rows)
    if len(rows) < 2:
        raise ValueError("need at least two rows to fit a rate")
    tau = np.array([r[0] for r in rows], dtype=float)
    err = np.array([r[1] for r in rows], dtype=float)
    if np.any(tau <= 0) or np.any(err <= 0):
        raise ValueError("fit_rate needs positive tau and E values")
    x, y = np.log(tau), np.log(err)
    x0 = x - x.mean()
    denom = x0 @ x0
    if denom == 0:
        raise ValueError("all tau values are equal")
    return float(x0 @ (y - y.mean()) / denom)


@dataclass
class ErrorReport:
    """Rows ``(tau, E_u)`` sorted by tau and the fitted log-log slope.

    ``E_u`` is a ratio of squared norms, so ``rate = slope / 2`` is the
    order of the method in the norm itself.
    """

    rows: list
    tau_ref: float
    slope: float = math.nan

    def __post_init__(self):
        self.rows = sorted((float(t), float(e)) for t, e in self.rows)
        positive = [r for r in self.rows if r[1] > 0]
        if math.isnan(self.slope) and len(positive) >= 2:
            self.slope = fit_rate(positive)

    @property
    def rate(self):
        return self.slope / 2.0

    fitted_rate = rate


def convergence_study(spec, tau_list=None, cache=None, workers=1):
    """Run the reference and every coarse step size; fill an :class:`ErrorReport`."""
    spec = spec.validate()
    tau_list = spec.tau_list if tau_list is None else tuple(tau_list)
    tau_ref = spec.tau_ref
    if any(t < tau_ref for t in tau_list):
        raise GridError("tau_ref must be the smallest step")
    for tau in tau_list:
        _ratio(tau, tau_ref)
        _n_steps(spec.T, tau)
        if tau > spec.tau_max:
            raise ValueError(f"tau={tau:g} in the study exceeds tau_max={spec.tau_max:g}")
    setup = build_setup(spec)
    ref = run_simulation(spec.with_(tau=tau_ref), setup, cache=cache)

    def one(tau):
        if tau == tau_ref:
            return tau, 0.0
        traj = run_simulation(spec.with_(tau=tau), setup, cache=cache)
        return tau, relative_error(traj, ref, setup.mesh, setup.rule)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one, tau_list))
    else:
        rows = [one(t) for t in tau_list]
    return ErrorReport(rows, tau_ref)


# ---------------------------------------------------------------- cache

class TrajectoryCache:
    """Directory of ``<key>.npz`` trajectories with a JSON manifest."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.manifest_path = os.path.join(directory, "manifest.json")

    def _manifest(self):
        if not os.path.exists(self.manifest_path):
            return {}
        with open(self.manifest_path) as fh:
            return json.load(fh)

    def _write_manifest(self, data):
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.manifest_path)

    def get(self, spec):
        key = spec.key()
        path = os.path.join(self.directory, f"{key}.npz")
        if key not in self._manifest() or not os.path.exists(path):
            return None
        with np.load(path) as z:
            traj = RotheTrajectory(z["times"], z["u"], spec=spec.resolved())
            for name in ("q_raw_max", "q_max", "q_min", "q_coil_mean"):
                if name in z:
                    setattr(traj, name, z[name])
            for name in z.files:
                for prefix, target in (("A_", traj.A), ("Q_", traj.Q_cell)):
                    if name.startswith(prefix):
                        target[int(name[len(prefix):])] = z[name]
        return traj

    def put(self, spec, traj):
        key = spec.key()
        arrays = {"times": traj.times, "u": traj.u}
        for name in ("q_raw_max", "q_max", "q_min", "q_coil_mean"):
            if getattr(traj, name) is not None:
                arrays[name] = getattr(traj, name)
        arrays.update({f"A_{k}": v for k, v in traj.A.items()})
        arrays.update({f"Q_{k}": v for k, v in traj.Q_cell.items()})
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".npz")
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, os.path.join(self.directory, f"{key}.npz"))
        manifest = self._manifest()
        manifest[key] = {
            "spec": dataclasses.asdict(spec.resolved()),
            "grid": {"T": float(traj.times[-1]), "tau": traj.tau, "n_steps": traj.n_steps},
            "fields": sorted(arrays),
        }
        self._write_manifest(manifest)
