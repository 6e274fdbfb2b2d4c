"""
Sanity checks on the building blocks
====================================

Three small experiments. The first is the Reynolds transport identity on
moving disks. The second is the Neumann problem for the coil potential. The
last is the steady state of the vector potential under a static current.
"""

#%%
import math

import numpy as np

from inductheat import assembly
from inductheat.em import (CompatibilityError, EmState, PhiProblem, solve_A_step,
                           solve_magnetostatic, solve_phi_step)
from inductheat.harness import ExperimentSpec, build_setup, manufactured_phi_solution
from inductheat.mesh import generate_rect_mesh
from inductheat.motion import MU0, RigidMotion, transport_fixtures, verify_transport_identity
from inductheat.quadrature import DEFAULT_RULE

for name, motion, layout, f in transport_fixtures():
    print(f"{name:18s} residual {verify_transport_identity(motion, layout, f, 0.3, 1e-4):.2e}")

#%%
# phi on the unit square. The data is balanced, so the solution exists up to
# a constant, which the zero-mean constraint fixes.
phi_exact, grad_exact, j = manufactured_phi_solution(1.0)
for n in (8, 16, 32):
    m = generate_rect_mesh(1.0, 1.0, n, n, gamma_labels=True)
    phi = solve_phi_step(PhiProblem(m, 1.0, j))
    print(n, "H1 error", assembly.h1_error(m, DEFAULT_RULE, phi, phi_exact, grad_exact))

try:
    solve_phi_step(PhiProblem(m, 1.0, lambda p, t: np.ones(len(p))))
except CompatibilityError as err:
    print("rejected:", err)

#%%
# Without motion the eddy currents decay on the scale mu0*sigma*L^2 and A
# settles to the magnetostatic field.
setup = build_setup(ExperimentSpec("coupled_2d", nx=60, ny=60))
static = solve_magnetostatic(setup.mesh, setup.coeffs, setup.current, 0.0, setup.rule)
scale = MU0 * 59.6e6 * 0.3 ** 2
state = EmState.initial(setup.mesh.n_nodes)
tau = scale / 400
for i in range(1, 41):
    a = solve_A_step(setup.mesh, RigidMotion(), setup.layout, setup.coeffs, state,
                     setup.current, tau, i * tau, setup.rule)
    state = state.advance(a, i * tau)
    if i % 8 == 0:
        rel = math.sqrt(assembly.h1_norm_sq(setup.mesh, setup.rule, a - static)
                        / assembly.h1_norm_sq(setup.mesh, setup.rule, static))
        print(f"t = {i * tau:7.2f} s  relative H1 distance {rel:.2e}")
