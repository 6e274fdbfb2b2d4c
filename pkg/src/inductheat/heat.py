"""Backward-Euler convection-diffusion step for the temperature."""
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import assembly
from .em import JouleField, sample_fields
from .linalg import DEFAULT_TOL, NumericError, SolverError, bicgstab_solve, cg_solve
from .quadrature import DEFAULT_RULE

TAU_MAX = 0.25
INITIAL_TEMPERATURE = 298.0


@dataclass
class HeatState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    t_prev: float = 0.0
    t_curr: float = 0.0

    @classmethod
    def initial(cls, mesh, u0=INITIAL_TEMPERATURE, t0=0.0):
        """Nodal interpolant of a constant or callable initial temperature."""
        if callable(u0):
            u = assembly.interpolate(mesh, u0)
        else:
            u = np.full(mesh.n_nodes, float(u0))
        return cls(u, u.copy(), t0, t0)

    def advance(self, u_new, t_new):
        return HeatState(self.u_curr, u_new, self.t_curr, t_new)


def _source_values(mesh, rule, source, t):
    if source is None:
        return None
    if isinstance(source, JouleField):
        vals = source.Q
    else:
        geom = mesh.element_geometry(rule)
        vals = assembly.coefficient_values(geom, source, t)
    if not np.all(np.isfinite(vals)):
        raise NumericError("NaN in heat source")
    return vals


def solve_u_step(mesh, motion, layout, coeffs, state, source, tau, t_i,
                 rule=DEFAULT_RULE, tol=DEFAULT_TOL, sample=None, velocity=None,
                 tau_max=TAU_MAX, return_report=False):
    """Advance the temperature by one step.

    Solves ``[M_alpha/tau + C_{alpha v} + K_kappa] u_i = M_alpha/tau u_{i-1} + b``
    with the natural (homogeneous Neumann) boundary condition. ``source``
    is a cut-off :class:`~inductheat.em.JouleField`, a callable
    ``f(points, t)``, a scalar, or ``None``. Coefficients and the velocity
    are taken at ``t_i``; convection is kept in the non-conservative form
    ``(alpha v . grad u, w)``.
    """
    if not 0 < tau <= tau_max:
        raise ValueError(f"time step {tau:g} outside (0, tau_max={tau_max:g}]")
    if sample is None:
        sample = sample_fields(mesh, rule, layout, motion, coeffs, t_i, velocity)
    M = assembly.assemble_weighted_mass(mesh, rule, sample.alpha)
    K = assembly.assemble_weighted_stiffness(mesh, rule, sample.kappa)
    av = sample.alpha[:, :, None] * sample.velocity
    moving = bool(np.any(av))
    S = M / tau + K
    if moving:
        S = S + assembly.assemble_convection(mesh, rule, av)
    rhs = M @ state.u_curr / tau
    fq = _source_values(mesh, rule, source, t_i)
    if fq is not None:
        rhs = rhs + assembly.assemble_load(mesh, rule, fq)
    solver = bicgstab_solve if moving else cg_solve
    u, report = solver(S, rhs, tol=tol, x0=state.u_curr)
    if not report.converged:
        raise SolverError(f"heat solve failed at t={t_i:g}", report)
    return (u, report) if return_report else u


def check_peclet(mesh, rule, sample, limit=2.0):
    """Warn when the largest element Peclet number exceeds ``limit``."""
    w = rule.weights
    av = np.einsum("mqd,q->md", sample.alpha[:, :, None] * sample.velocity, w)
    kappa = sample.kappa @ w
    return assembly.warn_if_convection_dominated(mesh, av, kappa, limit)


@dataclass
class EnergyDiagnostics:
    """Running quantities bounded by the a priori estimate for the temperature."""

    l2_norm: float = 0.0
    weighted_heat: float = 0.0
    grad_energy_accum: float = 0.0
    max_l2_norm: float = 0.0
    steps: int = 0


def energy_diagnostics(mesh, rule, coeffs, layout, motion, u_i, t_i, running=None,
                       tau=0.0, bound=math.inf, sample=None):
    """Update the running diagnostics with ``u_i`` and warn past ``bound``.

    Returns a new :class:`EnergyDiagnostics`; ``running`` is not modified.
    """
    running = EnergyDiagnostics() if running is None else running
    if sample is None:
        sample = sample_fields(mesh, rule, layout, motion, coeffs, t_i)
    geom = mesh.element_geometry(rule)
    l2 = math.sqrt(max(assembly.l2_norm_sq(mesh, rule, u_i), 0.0))
    uq = assembly.evaluate_at_qp(mesh, rule, u_i)
    heat = float(np.sum(sample.alpha * uq * geom.qweights))
    _, K = assembly._unit_matrices(mesh, rule)
    grad_sq = max(float(u_i @ (K @ u_i)), 0.0)
    out = replace(running, l2_norm=l2, weighted_heat=heat,
                  grad_energy_accum=running.grad_energy_accum + tau * grad_sq,
                  max_l2_norm=max(running.max_l2_norm, l2), steps=running.steps + 1)
    if not all(math.isfinite(v) for v in (l2, heat, out.grad_energy_accum)):
        warnings.warn(f"non-finite energy diagnostics at t={t_i:g}", RuntimeWarning)
    elif max(out.max_l2_norm ** 2, out.grad_energy_accum) > bound:
        warnings.warn(f"energy diagnostics exceed bound {bound:g} at t={t_i:g}",
                      RuntimeWarning)
    return out
