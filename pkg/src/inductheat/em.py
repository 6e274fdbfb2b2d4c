"""Electromagnetic half-steps in the transverse-magnetic 2D reduction.

The vector potential is ``A = (0, 0, a(x, y))``. Then ``curl curl A``
becomes ``-laplace(a)``, the gauge condition holds trivially, the
tangential boundary condition becomes ``a = 0`` and the z-component of
``v x curl A`` is ``-v . grad a``. The coil source ``-sigma grad(phi)`` is
z-directed and enters as a prescribed current density ``j_s``.
"""
from dataclasses import dataclass

import numpy as np

from . import assembly
from .linalg import (DEFAULT_TOL, SolverError, bicgstab_solve, cg_solve,
                     solve_with_mean_constraint)
from .mesh import GAMMA_IN, GAMMA_OUT
from .motion import Region, region_at
from .quadrature import DEFAULT_RULE

COMPATIBILITY_TOL = 1e-8
DEFAULT_CUTOFF = 1e9


class CompatibilityError(ValueError):
    """Boundary current data with nonzero net flux."""


# ---------------------------------------------------------------- scalar potential

@dataclass
class PhiProblem:
    """Pure-Neumann potential problem on the coil cross-section.

    ``j(points, t)`` is the normal current density on ``gamma_in`` and
    ``gamma_out`` edges (positive = leaving through the boundary).
    """

    coil_mesh: object
    sigma_coil: float
    j: object
    gamma_in: int = GAMMA_IN
    gamma_out: int = GAMMA_OUT

    def flux(self, t, absolute=False):
        total = np.zeros(self.coil_mesh.n_nodes)
        for label in (self.gamma_in, self.gamma_out):
            if absolute:
                def g(p):
                    return np.abs(self.j(p, t))
            else:
                def g(p):
                    return self.j(p, t)
            total += assembly.assemble_boundary_flux(self.coil_mesh, label, g)
        return total


def check_compatibility(problem, t=0.0):
    """``|int_Gamma j ds| / int_Gamma |j| ds`` (0 when ``j`` vanishes)."""
    denom = problem.flux(t, absolute=True).sum()
    if denom == 0.0:
        return 0.0
    return abs(problem.flux(t).sum()) / denom


def solve_phi_step(problem, t=0.0, rule=DEFAULT_RULE, tol=DEFAULT_TOL):
    """Nodal potential with vanishing lumped mean.

    Solves ``sigma (grad phi, grad psi) + <j, psi>_Gamma = 0`` for all
    ``psi`` in the zero-mean P1 space.
    """
    res = check_compatibility(problem, t)
    if res > COMPATIBILITY_TOL:
        raise CompatibilityError(f"net boundary current ratio {res:.3g} exceeds "
                                 f"{COMPATIBILITY_TOL:g}")
    mesh = problem.coil_mesh
    K = problem.sigma_coil * assembly.assemble_weighted_stiffness(mesh, rule)
    b = -problem.flux(t)
    m = assembly.lumped_mass(mesh, rule)
    phi, _, _ = solve_with_mean_constraint(K, b, m, tol=tol)
    return phi


# ---------------------------------------------------------------- vector potential

@dataclass
class EmState:
    A_prev: np.ndarray
    A_curr: np.ndarray
    t_prev: float = 0.0
    t_curr: float = 0.0

    @classmethod
    def initial(cls, n_nodes, t0=0.0):
        z = np.zeros(n_nodes)
        return cls(z, z.copy(), t0, t0)

    def advance(self, A_new, t_new):
        return EmState(self.A_curr, A_new, self.t_curr, t_new)


@dataclass(frozen=True)
class SourceCurrent:
    """Signed out-of-plane current densities (A/m^2) on coil sub-shapes.

    ``parts`` is a sequence of ``(shape, density)``; ``time_factor(t)``
    scales all densities (constant 1 by default).
    """

    parts: tuple = ()
    time_factor: object = None

    def __call__(self, pts, t):
        out = np.zeros(len(pts))
        for shape, density in self.parts:
            out[shape.contains(pts)] = density
        if self.time_factor is not None:
            out *= self.time_factor(t)
        return out

    def net_current(self, t=0.0):
        scale = 1.0 if self.time_factor is None else self.time_factor(t)
        return scale * sum(d * s.area for s, d in self.parts)

    def imbalance(self, t=0.0):
        """Net over total current; the 2D analogue of the compatibility condition."""
        total = sum(abs(d) * s.area for s, d in self.parts)
        return 0.0 if total == 0 else abs(self.net_current(t)) / total

    def scaled(self, factor):
        return SourceCurrent(tuple((s, factor * d) for s, d in self.parts), self.time_factor)


@dataclass
class FieldSample:
    """Regions, materials and velocity at all quadrature points at one time."""

    t: float
    regions: np.ndarray  # (m, nq)
    sigma: np.ndarray
    kappa: np.ndarray
    alpha: np.ndarray
    velocity: np.ndarray  # (m, nq, 2)


def sample_fields(mesh, rule, layout, motion, coeffs, t, velocity=None):
    """Evaluate the characteristic functions and coefficients at time ``t``.

    ``velocity`` is a callable ``v(points, t, regions)``; by default the
    rigid velocity restricted to the workpiece.
    """
    geom = mesh.element_geometry(rule)
    pts = geom.flat_points
    reg = region_at(layout, motion, pts, t)
    if velocity is None:
        v = motion.rigid_velocity(pts)
        v[reg != Region.WORKPIECE] = 0.0
    else:
        v = velocity(pts, t, reg)
    shape = geom.qweights.shape
    return FieldSample(t, reg.reshape(shape),
                       coeffs.lookup(reg, "sigma").reshape(shape),
                       coeffs.lookup(reg, "kappa").reshape(shape),
                       coeffs.lookup(reg, "alpha").reshape(shape),
                       v.reshape(shape + (2,)))


def solve_A_step(mesh, motion, layout, coeffs, state, source, tau, t_i,
                 rule=DEFAULT_RULE, tol=DEFAULT_TOL, sample=None, return_report=False):
    """One backward-Euler step of the eddy-current equation for ``a = A_z``.

    Solves ``[M_sigma/tau + K_{1/mu0} + C_{sigma v}] a_i = M_sigma/tau a_{i-1}
    + b_{j_s}`` with ``a_i = 0`` on the mesh boundary. ``C`` carries the
    workpiece transport term ``sigma (v . grad a, phi)`` and is nonzero only
    where the workpiece is at ``t_i``.
    """
    if not tau > 0:
        raise ValueError("time step must be positive")
    if sample is None:
        sample = sample_fields(mesh, rule, layout, motion, coeffs, t_i)
    M = assembly.assemble_weighted_mass(mesh, rule, sample.sigma)
    K = assembly.assemble_weighted_stiffness(mesh, rule, 1.0 / coeffs.mu0)
    wp = (sample.regions == Region.WORKPIECE)[:, :, None]
    sv = np.where(wp, sample.sigma[:, :, None] * sample.velocity, 0.0)
    moving = bool(np.any(sv))
    S = M / tau + K
    if moving:
        S = S + assembly.assemble_convection(mesh, rule, sv)
    rhs = M @ state.A_curr / tau + assembly.assemble_load(mesh, rule, source, t_i)
    S, rhs = assembly.apply_dirichlet(S, rhs, mesh.boundary_nodes(), 0.0)
    solver = bicgstab_solve if moving else cg_solve
    A, report = solver(S, rhs, tol=tol)
    if not report.converged:
        raise SolverError(f"vector-potential solve failed at t={t_i:g}", report)
    return (A, report) if return_report else A


def solve_magnetostatic(mesh, coeffs, source, t=0.0, rule=DEFAULT_RULE, tol=DEFAULT_TOL):
    """Direct solve of ``K_{1/mu0} a = b_{j_s}`` with ``a = 0`` on the boundary."""
    K = assembly.assemble_weighted_stiffness(mesh, rule, 1.0 / coeffs.mu0)
    b = assembly.assemble_load(mesh, rule, source, t)
    K, b = assembly.apply_dirichlet(K, b, mesh.boundary_nodes(), 0.0)
    A, report = cg_solve(K, b, tol=tol)
    if not report.converged:
        raise SolverError("magnetostatic solve failed", report)
    return A


# ---------------------------------------------------------------- Joule heat

@dataclass
class JouleField:
    """Joule power density (W/m^3) per quadrature point, shape ``(m, nq)``.

    ``r`` is the cut-off level once :func:`cutoff` has been applied.
    """

    Q: np.ndarray
    r: float = None

    def max(self):
        return float(self.Q.max()) if self.Q.size else 0.0

    def cell_average(self, rule=DEFAULT_RULE):
        return self.Q @ rule.weights


def joule_density(mesh, state, source, motion, layout, coeffs, tau, t_i,
                  rule=DEFAULT_RULE, sample=None):
    """Untruncated Joule density ``sigma |dA/dt + chi grad(phi) - v x curl A|^2``.

    In the 2D reduction: workpiece ``sigma (da + v . grad a)^2``, coil
    ``sigma (da - j_s / sigma)^2``, air ``0``, where ``da`` is the backward
    difference quotient and ``grad a`` is taken from ``state.A_curr``.
    """
    if sample is None:
        sample = sample_fields(mesh, rule, layout, motion, coeffs, t_i)
    geom = mesh.element_geometry(rule)
    dA = assembly.evaluate_at_qp(mesh, rule, (state.A_curr - state.A_prev) / tau)
    grad = assembly.gradient_per_element(mesh, rule, state.A_curr)
    vgrad = np.einsum("mqd,md->mq", sample.velocity, grad)
    js = np.asarray(source(geom.flat_points, t_i)).reshape(dA.shape)
    Q = np.zeros_like(dA)
    wp = sample.regions == Region.WORKPIECE
    coil = sample.regions == Region.COIL
    Q[wp] = sample.sigma[wp] * (dA[wp] + vgrad[wp]) ** 2
    Q[coil] = sample.sigma[coil] * (dA[coil] - js[coil] / sample.sigma[coil]) ** 2
    return JouleField(Q)


def cutoff(Q, r):
    """Pointwise ``min(r, Q)``; accepts a :class:`JouleField` or an array."""
    if not r > 0:
        raise ValueError("cut-off level must be positive")
    if isinstance(Q, JouleField):
        return JouleField(np.minimum(Q.Q, r), r)
    return np.minimum(Q, r)
