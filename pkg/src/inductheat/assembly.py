"""P1 assembly of weighted mass, stiffness, convection and load terms.

Coefficients are sampled at quadrature points, so a material interface
crossing an element is seen through its quadrature points only. A
coefficient argument may be ``None`` (unit weight), a scalar, an array of
per-quadrature-point values with shape ``(n_triangles, n_qp[, 2])``, or a
callable ``f(points, t)`` taking an ``(N, 2)`` array of points.
"""
import warnings

import numpy as np
import scipy.sparse as sp

from .quadrature import DEFAULT_RULE, gauss_legendre


class _Pattern:
    """CSR sparsity of the P1 matrix and scatter map from element entries."""

    def __init__(self, mesh):
        n = mesh.n_nodes
        t = mesh.triangles
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        keys = rows * n + cols
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = len(uniq)
        self.n = n

    def build(self, local):
        """Sum local ``(m, 3, 3)`` matrices into a CSR array."""
        data = np.bincount(self.scatter, weights=local.reshape(-1), minlength=self.nnz)
        return sp.csr_array((data, self.indices.copy(), self.indptr.copy()),
                            shape=(self.n, self.n))


def _pattern(mesh):
    pat = mesh._geometry.get("pattern")
    if pat is None:
        pat = mesh._geometry["pattern"] = _Pattern(mesh)
    return pat


def coefficient_values(geom, w, t, vector=False):
    """Evaluate a coefficient argument at the quadrature points of ``geom``."""
    shape = geom.qweights.shape + ((2,) if vector else ())
    if w is None:
        return np.ones(shape)
    if callable(w):
        vals = np.asarray(w(geom.flat_points, t), dtype=float)
        return vals.reshape(shape)
    vals = np.asarray(w, dtype=float)
    if vals.ndim == 0 or (vector and vals.shape == (2,)):
        return np.broadcast_to(vals, shape)
    if vals.shape != shape:
        raise ValueError(f"coefficient array has shape {vals.shape}, expected {shape}")
    return vals


def assemble_weighted_mass(mesh, rule=DEFAULT_RULE, w=None, t=0.0):
    """``M_kl = sum_q w(x_q) psi_k(x_q) psi_l(x_q) weight_q``."""
    geom = mesh.element_geometry(rule)
    wq = coefficient_values(geom, w, t) * geom.qweights
    local = np.einsum("mq,qk,ql->mkl", wq, geom.basis, geom.basis)
    return _pattern(mesh).build(local)


def assemble_weighted_stiffness(mesh, rule=DEFAULT_RULE, w=None, t=0.0):
    """``K_kl = sum_q w(x_q) grad psi_k . grad psi_l weight_q``."""
    geom = mesh.element_geometry(rule)
    wsum = np.sum(coefficient_values(geom, w, t) * geom.qweights, axis=1)
    local = wsum[:, None, None] * np.einsum("mkd,mld->mkl", geom.grads, geom.grads)
    return _pattern(mesh).build(local)


def assemble_convection(mesh, rule=DEFAULT_RULE, vec_w=None, t=0.0):
    """``C_kl = sum_q (b(x_q) . grad psi_l) psi_k weight_q`` (row = test)."""
    geom = mesh.element_geometry(rule)
    bq = coefficient_values(geom, vec_w, t, vector=True) * geom.qweights[:, :, None]
    # (m, q, l): b . grad psi_l at each point
    bg = np.einsum("mqd,mld->mql", bq, geom.grads)
    local = np.einsum("mql,qk->mkl", bg, geom.basis)
    return _pattern(mesh).build(local)


def assemble_load(mesh, rule=DEFAULT_RULE, f=None, t=0.0):
    """``b_k = sum_q f(x_q) psi_k(x_q) weight_q``."""
    geom = mesh.element_geometry(rule)
    fq = coefficient_values(geom, f, t) * geom.qweights
    local = fq @ geom.basis  # (m, 3)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def assemble_boundary_flux(mesh, label, g):
    """``b_k = int_{edges with label} g psi_k ds`` with 2-point Gauss per edge.

    ``g(points)`` is evaluated on an ``(N, 2)`` array of edge points; a
    scalar is accepted as a constant.
    """
    edges = mesh.edges_with_label(label)
    s, ws = gauss_legendre(2)
    a, b = mesh.points[edges[:, 0]], mesh.points[edges[:, 1]]
    length = np.hypot(*(b - a).T)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]  # (e, 2, 2)
    if callable(g):
        gv = np.asarray(g(pts.reshape(-1, 2)), dtype=float).reshape(len(edges), 2)
    else:
        gv = np.full((len(edges), 2), float(g))
    wq = gv * ws[None, :] * length[:, None]
    vals = np.column_stack([wq @ (1 - s), wq @ s])
    return np.bincount(edges.ravel(), weights=vals.ravel(), minlength=mesh.n_nodes)


def apply_dirichlet(A, b, nodes, value=0.0):
    """Impose ``x[nodes] = value`` keeping symmetry (column elimination).

    Returns new ``(A, b)``; the inputs are not modified.
    """
    n = A.shape[0]
    nodes = np.asarray(nodes, dtype=np.int64)
    b = np.array(b, dtype=float)
    if len(nodes) == 0:
        return A.copy(), b
    vals = np.broadcast_to(np.asarray(value, dtype=float), nodes.shape)
    fixed = np.zeros(n, dtype=bool)
    fixed[nodes] = True
    xfix = np.zeros(n)
    xfix[nodes] = vals
    b -= A @ xfix
    keep = sp.diags_array((~fixed).astype(float))
    A2 = (keep @ A @ keep + sp.diags_array(fixed.astype(float))).tocsr()
    A2.sort_indices()
    b[nodes] = vals
    return A2, b


def lumped_mass(mesh, rule=DEFAULT_RULE):
    """Row sums of the unit mass matrix, i.e. ``int psi_k``."""
    return assemble_load(mesh, rule, None)


def _unit_matrices(mesh, rule):
    key = ("unit", id(rule))
    if key not in mesh._geometry:
        mesh._geometry[key] = (assemble_weighted_mass(mesh, rule),
                               assemble_weighted_stiffness(mesh, rule))
    return mesh._geometry[key]


def l2_norm_sq(mesh, rule=DEFAULT_RULE, x=None):
    M, _ = _unit_matrices(mesh, rule)
    return float(x @ (M @ x))


def h1_norm_sq(mesh, rule=DEFAULT_RULE, x=None):
    M, K = _unit_matrices(mesh, rule)
    return float(x @ (M @ x) + x @ (K @ x))


def interpolate(mesh, f, t=None):
    """Nodal interpolant of ``f(points)`` (or ``f(points, t)``)."""
    return np.asarray(f(mesh.points) if t is None else f(mesh.points, t), dtype=float)


def evaluate_at_qp(mesh, rule, x):
    """P1 field values at quadrature points, shape ``(m, nq)``."""
    geom = mesh.element_geometry(rule)
    return x[mesh.triangles] @ geom.basis.T


def gradient_per_element(mesh, rule, x):
    """Constant P1 gradients, shape ``(m, 2)``."""
    geom = mesh.element_geometry(rule)
    return np.einsum("mk,mkd->md", x[mesh.triangles], geom.grads)


def l2_error(mesh, rule, x, exact, t=None):
    """``||x_h - exact||_{L2}`` by quadrature."""
    geom = mesh.element_geometry(rule)
    pts = geom.flat_points
    ex = (exact(pts) if t is None else exact(pts, t)).reshape(geom.qweights.shape)
    diff = evaluate_at_qp(mesh, rule, x) - ex
    return float(np.sqrt(np.sum(diff ** 2 * geom.qweights)))


def h1_error(mesh, rule, x, exact, grad_exact, t=None):
    """``||x_h - exact||_{H1}`` by quadrature; ``grad_exact`` returns ``(N, 2)``."""
    geom = mesh.element_geometry(rule)
    pts = geom.flat_points
    gex = (grad_exact(pts) if t is None else grad_exact(pts, t)).reshape(geom.qweights.shape + (2,))
    gdiff = gradient_per_element(mesh, rule, x)[:, None, :] - gex
    semi = np.sum(np.sum(gdiff ** 2, axis=2) * geom.qweights)
    return float(np.sqrt(l2_error(mesh, rule, x, exact, t) ** 2 + semi))


def element_peclet(mesh, alpha_v, kappa):
    """Per-element Peclet number ``|alpha v| h / (2 kappa)`` from centroid data."""
    lengths = np.stack([np.hypot(*(mesh.points[mesh.triangles[:, i]]
                                   - mesh.points[mesh.triangles[:, (i + 1) % 3]]).T)
                        for i in range(3)], axis=1).max(axis=1)
    speed = np.hypot(alpha_v[:, 0], alpha_v[:, 1])
    return speed * lengths / (2.0 * kappa)


def warn_if_convection_dominated(mesh, alpha_v, kappa, limit=2.0):
    pe = float(np.max(element_peclet(mesh, alpha_v, kappa)))
    if pe > limit:
        warnings.warn(f"max element Peclet number {pe:.3g} exceeds {limit}; "
                      "the unstabilised Galerkin convection term may oscillate",
                      RuntimeWarning, stacklevel=2)
    return pe
