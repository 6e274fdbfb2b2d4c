import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from inductheat import assembly
from inductheat.mesh import GAMMA_IN, GAMMA_OUT, Mesh, generate_disk_mesh, generate_rect_mesh
from inductheat.motion import (CoefficientSet, Disk, RegionLayout, RigidMotion, region_at)
from inductheat.quadrature import CENTROID, DEFAULT_RULE, DEGREE2, DEGREE6

TRI = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


def dense(A):
    return A.toarray()


def test_unit_mass():
    M = dense(assembly.assemble_weighted_mass(TRI))
    np.testing.assert_allclose(24 * M, [[2, 1, 1], [1, 2, 1], [1, 1, 2]], atol=1e-14)


def test_unit_stiffness():
    K = dense(assembly.assemble_weighted_stiffness(TRI))
    np.testing.assert_allclose(2 * K, [[2, -1, -1], [-1, 1, 0], [-1, 0, 1]], atol=1e-14)


def test_zero_weight():
    assert np.all(dense(assembly.assemble_weighted_mass(TRI, w=0.0)) == 0)


def test_mass_row_sums_give_area():
    m = generate_disk_mesh(1.0, 0.2)
    M = assembly.assemble_weighted_mass(m)
    assert M.sum() == pytest.approx(m.areas.sum(), rel=1e-13)


def test_mass_spd_and_symmetric():
    m = generate_rect_mesh(1, 1, 4, 4)
    M = dense(assembly.assemble_weighted_mass(m))
    assert np.abs(M - M.T).max() <= 1e-15
    assert np.linalg.eigvalsh(M).min() > 0


def test_stiffness_kernel_and_symmetry_with_jumps():
    m = generate_disk_mesh(0.2, 0.02)
    layout = RegionLayout(Disk((0.1, 0), 0.05), domain=Disk((0, 0), 0.2 + 1e-9))
    coeffs = CoefficientSet()
    motion = RigidMotion.rotation(0.4)

    def kappa(pts, t):
        return coeffs.lookup(region_at(layout, motion, pts, t), "kappa")

    K = assembly.assemble_weighted_stiffness(m, DEFAULT_RULE, kappa, 1.3)
    assert np.abs(K @ np.ones(m.n_nodes)).max() <= 1e-12 * np.abs(K.data).max()
    assert np.abs(dense(K) - dense(K).T).max() <= 1e-15 * np.abs(K.data).max()


def test_convection_zero_and_constant_kernel():
    m = generate_rect_mesh(1, 1, 4, 4)
    assert assembly.assemble_convection(m, DEFAULT_RULE, (0.0, 0.0)).count_nonzero() == 0
    C = assembly.assemble_convection(m, DEFAULT_RULE, (0.3, -1.2))
    assert np.abs(C @ np.ones(m.n_nodes)).max() <= 1e-14


def test_convection_row_is_test_index():
    # b = (1, 0): C_kl = int (d psi_l/dx) psi_k; on the unit triangle d psi_1/dx = 1
    C = dense(assembly.assemble_convection(TRI, DEFAULT_RULE, (1.0, 0.0)))
    np.testing.assert_allclose(C[:, 1], [1 / 6] * 3, atol=1e-15)
    np.testing.assert_allclose(C[:, 0], [-1 / 6] * 3, atol=1e-15)


def test_convection_skew_for_rotation():
    m = generate_disk_mesh(0.2, 0.01)

    def v(pts, t):
        return np.column_stack([-pts[:, 1], pts[:, 0]])

    C = assembly.assemble_convection(m, DEFAULT_RULE, v)
    x = np.exp(-np.sum(m.points ** 2, axis=1) / 0.01) * (1 + m.points[:, 0])
    assert abs(x @ (C @ x)) <= 1e-12 * np.abs(C).sum() * np.abs(x).max() ** 2


def test_load_unit():
    np.testing.assert_allclose(assembly.assemble_load(TRI), [1 / 6] * 3, atol=1e-15)
    assert np.all(assembly.assemble_load(TRI, DEFAULT_RULE, 0.0) == 0)


def test_load_sum_is_integral():
    m = generate_rect_mesh(1, 1, 6, 6)
    b = assembly.assemble_load(m, DEGREE6, lambda p, t: p[:, 0] ** 2 * p[:, 1])
    assert b.sum() == pytest.approx(1 / 6, rel=1e-13)


def test_boundary_flux_single_edge():
    m = generate_rect_mesh(1, 1, 1, 1, gamma_labels=True)
    b = assembly.assemble_boundary_flux(m, GAMMA_IN, 1.0)
    left = np.flatnonzero(m.points[:, 0] == 0)
    np.testing.assert_allclose(b[left], 0.5)
    assert b.sum() == pytest.approx(1.0)
    assert np.all(assembly.assemble_boundary_flux(m, GAMMA_OUT, 0.0) == 0)
    with pytest.raises(KeyError):
        assembly.assemble_boundary_flux(m, 42, 1.0)


def test_boundary_flux_integral():
    m = generate_rect_mesh(1, 1, 5, 7, gamma_labels=True)
    b = assembly.assemble_boundary_flux(m, GAMMA_OUT, lambda p: p[:, 1] ** 3)
    assert b.sum() == pytest.approx(0.25, rel=1e-12)


def test_dirichlet_all_and_none():
    m = generate_rect_mesh(1, 1, 3, 3)
    K = assembly.assemble_weighted_stiffness(m) + assembly.assemble_weighted_mass(m)
    b = np.ones(m.n_nodes)
    A2, b2 = assembly.apply_dirichlet(K, b, np.arange(m.n_nodes), 0.0)
    np.testing.assert_array_equal(np.linalg.solve(dense(A2), b2), 0.0)
    A3, b3 = assembly.apply_dirichlet(K, b, [], 0.0)
    np.testing.assert_array_equal(dense(A3), dense(K))
    np.testing.assert_array_equal(b3, b)


def test_dirichlet_chain():
    # 1D Laplacian on 3 nodes, ends fixed to 0, unit load: 2 u1 = 1
    A = sp.csr_array(np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    A2, b2 = assembly.apply_dirichlet(A, np.ones(3), [0, 2], 0.0)
    np.testing.assert_allclose(np.linalg.solve(dense(A2), b2), [0, 0.5, 0])
    assert np.abs(dense(A2) - dense(A2).T).max() == 0


def test_dirichlet_nonzero_value():
    A = sp.csr_array(np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    A2, b2 = assembly.apply_dirichlet(A, np.zeros(3), [0, 2], np.array([1.0, 3.0]))
    np.testing.assert_allclose(np.linalg.solve(dense(A2), b2), [1, 2, 3])


def test_norms():
    m = generate_rect_mesh(1, 1, 16, 16)
    z = np.zeros(m.n_nodes)
    assert assembly.l2_norm_sq(m, DEFAULT_RULE, z) == 0 == assembly.h1_norm_sq(m, DEFAULT_RULE, z)
    c = np.full(m.n_nodes, 3.0)
    assert assembly.l2_norm_sq(m, DEFAULT_RULE, c) == pytest.approx(9.0)
    assert assembly.h1_norm_sq(m, DEFAULT_RULE, c) == pytest.approx(9.0)
    x = m.points[:, 0].copy()
    assert assembly.h1_norm_sq(m, DEFAULT_RULE, x) == pytest.approx(4 / 3, rel=1e-12)


def test_additive_over_partition():
    m = generate_rect_mesh(2, 1, 4, 2)
    left = m.triangles[m.points[m.triangles].mean(axis=1)[:, 0] < 1]
    right = m.triangles[m.points[m.triangles].mean(axis=1)[:, 0] >= 1]
    whole = dense(assembly.assemble_weighted_mass(m, DEGREE2))
    parts = np.zeros_like(whole)
    for tris in (left, right):
        used = np.unique(tris)
        sub = Mesh(m.points[used], np.searchsorted(used, tris))
        M = dense(assembly.assemble_weighted_mass(sub, DEGREE2))
        parts[np.ix_(used, used)] += M
    np.testing.assert_allclose(parts, whole, atol=1e-15)


def test_depends_only_on_quadrature_values():
    m = generate_rect_mesh(1, 1, 4, 4)
    geom = m.element_geometry(DEFAULT_RULE)

    def smooth(p, t):
        return 1 + p[:, 0] * p[:, 1]

    vals = smooth(geom.flat_points, 0.0).reshape(geom.qweights.shape)
    np.testing.assert_array_equal(dense(assembly.assemble_weighted_mass(m, DEFAULT_RULE, smooth)),
                                  dense(assembly.assemble_weighted_mass(m, DEFAULT_RULE, vals)))


def test_errors_and_interpolation():
    m = generate_rect_mesh(1, 1, 8, 8)
    x = assembly.interpolate(m, lambda p: 2 * p[:, 0] - p[:, 1])
    assert assembly.l2_error(m, DEFAULT_RULE, x, lambda p: 2 * p[:, 0] - p[:, 1]) <= 1e-14
    grad = assembly.gradient_per_element(m, DEFAULT_RULE, x)
    np.testing.assert_allclose(grad, np.tile([2.0, -1.0], (m.n_triangles, 1)), atol=1e-12)
    e = assembly.h1_error(m, DEFAULT_RULE, x, lambda p: 2 * p[:, 0] - p[:, 1],
                          lambda p: np.tile([2.0, -1.0], (len(p), 1)))
    assert e <= 1e-12


def test_bad_coefficient_shape():
    m = generate_rect_mesh(1, 1, 2, 2)
    with pytest.raises(ValueError):
        assembly.assemble_weighted_mass(m, DEFAULT_RULE, np.ones((3, 3)))


def test_peclet_warning():
    m = generate_rect_mesh(1, 1, 2, 2)
    av = np.tile([100.0, 0.0], (m.n_triangles, 1))
    with pytest.warns(RuntimeWarning):
        pe = assembly.warn_if_convection_dominated(m, av, np.ones(m.n_triangles))
    assert pe == pytest.approx(100 * math.sqrt(2) / 2 / 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assembly.warn_if_convection_dominated(m, av * 1e-3, np.ones(m.n_triangles))


def test_centroid_rule_mass_is_rank_deficient_but_total_correct():
    M = dense(assembly.assemble_weighted_mass(TRI, CENTROID))
    assert M.sum() == pytest.approx(0.5)
