import numpy as np
import pytest

from inductheat import assembly
from inductheat.harness import (ErrorReport, ExperimentSpec, GridError, RotheTrajectory,
                                StepFailure, TrajectoryCache, build_setup, convergence_study,
                                fit_rate, preset_defaults, relative_error, run_simulation)
from inductheat.mesh import generate_rect_mesh
from inductheat.quadrature import DEFAULT_RULE

SMALL_DISK = ExperimentSpec("disk_concentric", target_h=0.02, T=1.0, tau=0.25,
                            tau_ref=2 ** -4, tau_list=(0.25, 0.125))
SMALL_COUPLED = ExperimentSpec("coupled_2d", nx=40, ny=40, T=0.5, tau=0.25)


def constant_traj(value, n_nodes, tau, T=1.0):
    n = round(T / tau)
    return RotheTrajectory(np.arange(n + 1) * tau, np.full((n + 1, n_nodes), float(value)))


@pytest.fixture(scope="module")
def square():
    return generate_rect_mesh(1, 1, 4, 4)


def test_relative_error_self_is_zero(square):
    ref = constant_traj(2.0, square.n_nodes, 0.125)
    assert relative_error(ref, ref, square, DEFAULT_RULE) == 0.0


def test_relative_error_constants(square):
    a, b = 3.0, 2.0
    e = relative_error(constant_traj(a, square.n_nodes, 0.5),
                       constant_traj(b, square.n_nodes, 0.125), square, DEFAULT_RULE)
    assert e == pytest.approx((a - b) ** 2 / b ** 2, rel=1e-13)


def test_relative_error_zero_reference(square):
    with pytest.raises(ZeroDivisionError):
        relative_error(constant_traj(1.0, square.n_nodes, 0.5),
                       constant_traj(0.0, square.n_nodes, 0.25), square, DEFAULT_RULE)


def test_relative_error_grid_mismatch(square):
    with pytest.raises(GridError):
        relative_error(constant_traj(1.0, square.n_nodes, 0.3, 0.9),
                       constant_traj(1.0, square.n_nodes, 0.2, 0.8), square)
    with pytest.raises(GridError):
        relative_error(constant_traj(1.0, square.n_nodes, 0.375, 0.75),
                       constant_traj(1.0, square.n_nodes, 0.25, 0.75), square)


def test_relative_error_uses_covering_interval(square):
    # coarse value on (t_{i-1}, t_i] is the value at t_i
    ref = constant_traj(1.0, square.n_nodes, 0.25)
    coarse = constant_traj(1.0, square.n_nodes, 0.5)
    coarse.u[1] = 2.0
    e = relative_error(coarse, ref, square)
    assert e == pytest.approx(0.5, rel=1e-13)


@pytest.mark.parametrize("rows,slope", [
    ([(1, 1), (0.5, 0.25)], 2.0),
    ([(1, 3), (0.5, 3), (0.25, 3)], 0.0),
    ([(1, 1), (0.5, 0.5), (0.25, 0.25)], 1.0),
])
def test_fit_rate(rows, slope):
    assert fit_rate(rows) == pytest.approx(slope, abs=1e-12)


@pytest.mark.parametrize("rows", [[(1, 1)], [(1, 0), (0.5, 1)], [(1, 1), (-0.5, 1)]])
def test_fit_rate_errors(rows):
    with pytest.raises(ValueError):
        fit_rate(rows)


def test_error_report_sorted_and_rate():
    r = ErrorReport([(0.5, 0.25), (1.0, 1.0), (0.25, 0.0625)], tau_ref=0.125)
    assert [t for t, _ in r.rows] == [0.25, 0.5, 1.0]
    assert r.slope == pytest.approx(2.0) and r.rate == pytest.approx(1.0)
    assert r.fitted_rate == r.rate


def test_synthetic_first_order(square):
    ref = constant_traj(1.0, square.n_nodes, 2 ** -6)
    w = np.sin(square.points[:, 0])
    rows = []
    for j in (2, 3, 4):
        tau = 2.0 ** -j
        c = constant_traj(1.0, square.n_nodes, tau)
        c.u += tau * w
        rows.append((tau, relative_error(c, ref, square)))
    assert ErrorReport(rows, 2 ** -6).rate == pytest.approx(1.0, abs=1e-12)


def test_spec_defaults_and_validation():
    s = ExperimentSpec().resolved()
    assert s.preset == "disk_concentric" and s.T == 8.0 and s.tau_ref == 2 ** -6
    assert s.tau_list == tuple(2.0 ** -j for j in (2, 3, 4, 5))
    with pytest.raises(ValueError):
        ExperimentSpec("nope").resolved()
    with pytest.raises(GridError):
        ExperimentSpec(T=1.0, tau=0.15).validate()
    with pytest.raises(ValueError):
        ExperimentSpec(tau=0.5).validate()
    assert ExperimentSpec(T=1.0, tau=0.25).n_steps() == 4


def test_spec_key_stable():
    assert ExperimentSpec().key() == ExperimentSpec().resolved().key()
    assert ExperimentSpec().key() != ExperimentSpec(source=2e6).key()


@pytest.mark.parametrize("preset", ["disk_concentric", "disk_eccentric", "coupled_2d",
                                    "manufactured_heat", "phi_validation"])
def test_presets_build(preset):
    d = preset_defaults(preset)
    assert d["tau"] <= 0.25
    spec = ExperimentSpec(preset)
    if preset.startswith("disk"):
        spec = spec.with_(target_h=0.05)
    elif preset == "coupled_2d":
        spec = spec.with_(nx=20, ny=20)
    setup = build_setup(spec)
    assert setup.mesh.n_nodes > 0


def test_disk_desk_scale_triangle_count():
    setup = build_setup(ExperimentSpec("disk_concentric"))
    assert 1e4 <= setup.mesh.n_triangles <= 4e4


def test_constant_chain():
    traj = run_simulation(SMALL_DISK.with_(source=0.0))
    assert np.all(traj.u == 298.0)
    assert traj.n_steps == 4 and len(traj.diagnostics) == 4


def test_zero_cascade():
    traj = run_simulation(SMALL_COUPLED.with_(current_density=0.0))
    assert all(np.all(a == 0) for a in traj.A.values())
    assert np.all(traj.q_raw_max == 0)
    assert np.all(traj.u == 298.0)


def test_coupled_records_fields():
    traj = run_simulation(SMALL_COUPLED.with_(output_stride=2))
    assert sorted(traj.A) == [0, 2]
    assert sorted(traj.Q_cell) == [2]
    assert traj.q_raw_max[1] > 0
    assert traj.u[-1].max() > 298.0
    assert set(traj.iterations) == {"A", "u"}


def test_determinism():
    a = run_simulation(SMALL_DISK)
    b = run_simulation(SMALL_DISK)
    np.testing.assert_array_equal(a.u, b.u)


def test_heat_gain_matches_supply():
    A = 2.422e6
    spec = SMALL_DISK.with_(alpha_workpiece=A, alpha_background=A)
    setup = build_setup(spec)
    traj = run_simulation(spec, setup)
    lumped = assembly.lumped_mass(setup.mesh, setup.rule)
    gains = A * np.diff(traj.u @ lumped)
    supplied = spec.resolved().tau * 1e6 * setup.mesh.areas.sum()
    assert np.all(gains > 0)
    np.testing.assert_allclose(gains, supplied, rtol=1e-6)


def test_convergence_study_small():
    report = convergence_study(SMALL_DISK.with_(tau_list=(0.25, 0.125, 2 ** -4)))
    assert report.rows[0] == (2 ** -4, 0.0)
    errs = [e for _, e in report.rows]
    assert errs == sorted(errs)
    assert 0.7 <= ErrorReport(report.rows[1:], report.tau_ref).rate <= 1.5


def test_convergence_study_rejects_small_tau():
    with pytest.raises(GridError):
        convergence_study(SMALL_DISK.with_(tau_list=(2 ** -5,)))


def test_concurrent_study_matches_serial():
    spec = SMALL_DISK
    a = convergence_study(spec, workers=1)
    b = convergence_study(spec, workers=2)
    assert a.rows == b.rows


def test_cache_roundtrip(tmp_path):
    cache = TrajectoryCache(str(tmp_path))
    spec = SMALL_COUPLED
    first = run_simulation(spec, cache=cache)
    assert (tmp_path / "manifest.json").exists()
    again = cache.get(spec)
    np.testing.assert_array_equal(again.u, first.u)
    np.testing.assert_array_equal(again.q_max, first.q_max)
    assert sorted(again.A) == sorted(first.A)
    assert cache.get(spec.with_(tau=0.125)) is None


def test_step_failure_carries_index():
    spec = SMALL_DISK.with_(tol=1e-10)
    with pytest.raises(StepFailure) as err:
        run_simulation(spec, initial_u=np.full(build_setup(spec).mesh.n_nodes, np.nan))
    assert err.value.step == 1


def phi_h1_error(n):
    spec = ExperimentSpec("phi_validation", nx=n, ny=n)
    setup = build_setup(spec)
    traj = run_simulation(spec, setup)
    assert sorted(traj.phi) == [1, 2, 3, 4]
    return assembly.h1_error(setup.mesh, DEFAULT_RULE, traj.phi[4], *setup.exact)


def test_phi_validation_preset_first_order():
    ratio = phi_h1_error(8) / phi_h1_error(16)
    assert 1.8 <= ratio <= 2.2


def heat_l2_error(n):
    spec = ExperimentSpec("manufactured_heat", nx=n, ny=n, T=0.25, tau=2 ** -8)
    setup = build_setup(spec)
    traj = run_simulation(spec, setup)
    return assembly.l2_error(setup.mesh, DEFAULT_RULE, traj.u[-1], setup.exact[0], 0.25)


def test_manufactured_heat_second_order_in_space():
    ratio = heat_l2_error(16) / heat_l2_error(32)
    assert 3.5 <= ratio <= 4.5
