"""
Induction heating of strips moving past a coil
==============================================

Two small copper coils carry opposite currents of 1e7 A/m^2. Two aluminium
strips slide along the y axis beside them. Eddy currents in the strips
produce Joule heat, which the heat equation then spreads.
"""

#%%
import numpy as np

from inductheat.harness import ExperimentSpec, build_setup, run_simulation
from inductheat.motion import Region, region_at

# the preset grid (nx = 200) is aligned with the 5 mm coils; coarser grids cut through them
spec = ExperimentSpec("coupled_2d", T=2.0).resolved()
setup = build_setup(spec)
print(setup.mesh, "velocity", spec.velocity)

#%%
traj = run_simulation(spec, setup)
print("coil mean Q / (j^2/sigma):", traj.q_coil_mean[1:] / (spec.current_density ** 2 / 59.6e6))
print("largest Joule density per step:", traj.q_raw_max[1:])

#%%
# Where does the heat go? Compare the mean rise in each region.
cent = setup.mesh.points[setup.mesh.triangles].mean(axis=1)
reg = region_at(setup.layout, setup.motion, cent, spec.T)
rise = traj.u[-1][setup.mesh.triangles].mean(axis=1) - spec.u0
for r in Region:
    sel = reg == r
    if sel.any():
        print(f"{r.name:10s} mean rise {rise[sel].mean():.3e} K  max {rise[sel].max():.3e} K")

#%%
# With a cut-off r the heat source is min(r, Q). The raw maximum is
# unchanged while the applied one is clipped.
clipped = run_simulation(spec.with_(T=1.0, cutoff=1e5), setup=None)
print("raw", clipped.q_raw_max[1:], "applied", clipped.q_max[1:])
print("temperature drop from clipping:",
      float(np.max(traj.u[4] - clipped.u[4])), "K")
