"""Sparse storage and Krylov solvers.

Matrices are ``scipy.sparse.csr_array`` with canonical (sorted, summed)
indices; the solvers are plain numpy loops with Jacobi preconditioning.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-10


class NumericError(ArithmeticError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def csr_from_triplets(n_rows, n_cols, triplets):
    """Build a CSR matrix from ``(i, j, value)`` triplets, summing duplicates.

    ``triplets`` may be a list of tuples or a tuple of three arrays
    ``(rows, cols, values)``.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    elif len(triplets) == 0:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    else:
        arr = np.asarray(triplets, dtype=float)
        rows, cols, vals = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError("triplet index out of range")
    A = sp.coo_array((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_structurally_symmetric(A):
    if A.shape[0] != A.shape[1]:
        return False
    P = (A != 0).astype(np.int8)
    return (P != P.T).nnz == 0


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def _precond(A, kind):
    if kind in (None, "none"):
        return None
    if kind != "jacobi":
        raise ValueError(f"unknown preconditioner {kind!r}")
    d = A.diagonal().astype(float)
    d[d == 0.0] = 1.0
    return 1.0 / d


def _check_finite(*vecs):
    for v in vecs:
        if not np.all(np.isfinite(v)):
            raise NumericError("NaN or Inf encountered in solver")


def cg_solve(A, b, tol=DEFAULT_TOL, max_iter=None, precond="jacobi", x0=None):
    """Preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||b - A x|| <= tol ||b||``. Non-convergence is reported,
    not raised.
    """
    b = np.asarray(b, dtype=float)
    _check_finite(b)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = _precond(A, precond)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    r = b - A @ x
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    z = r if dinv is None else dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise NumericError("matrix is not positive definite")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        _check_finite(x)
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            # guard against drift of the recursive residual
            rel = np.linalg.norm(b - A @ x) / bnorm
            if rel <= tol:
                return x, SolveReport(it, rel, True)
        z = r if dinv is None else dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(max_iter, rel, False)


def bicgstab_solve(A, b, tol=DEFAULT_TOL, max_iter=None, precond="jacobi", x0=None):
    """Right-preconditioned BiCGStab for general nonsingular ``A``.

    On breakdown (``rho`` or ``omega`` ~ 0) the iteration restarts once from
    the current iterate; a second breakdown raises :class:`SolverError`.
    """
    b = np.asarray(b, dtype=float)
    _check_finite(b)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = _precond(A, precond)

    def M(v):
        return v if dinv is None else dinv * v

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    restarts = 0
    it = 0
    r = b - A @ x
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    while True:
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        breakdown = False
        while it < max_iter:
            it += 1
            rho_new = r_hat @ r
            if abs(rho_new) < 1e-300 or abs(omega) < 1e-300:
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            ph = M(p)
            v = A @ ph
            denom = r_hat @ v
            if abs(denom) < 1e-300:
                breakdown = True
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) / bnorm <= tol:
                x += alpha * ph
                rel = np.linalg.norm(b - A @ x) / bnorm
                if rel <= tol:
                    return x, SolveReport(it, rel, True)
                r = b - A @ x
                breakdown = True
                break
            sh = M(s)
            t = A @ sh
            tt = t @ t
            if tt == 0.0:
                breakdown = True
                break
            omega = (t @ s) / tt
            x += alpha * ph + omega * sh
            r = s - omega * t
            _check_finite(x)
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                rel = np.linalg.norm(b - A @ x) / bnorm
                if rel <= tol:
                    return x, SolveReport(it, rel, True)
                r = b - A @ x
        if not breakdown:
            return x, SolveReport(it, rel, False)
        if restarts >= 1:
            raise SolverError("BiCGStab breakdown after restart",
                              SolveReport(it, rel, False))
        restarts += 1
        r = b - A @ x
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x, SolveReport(it, rel, True)


def solve_with_mean_constraint(A, b, m, tol=DEFAULT_TOL, max_iter=None):
    """Solve ``A x = b - lam m`` subject to ``m . x = 0``.

    ``A`` is singular symmetric with kernel spanned by constants (pure
    Neumann); the bordered system ``[[A, m], [m^T, 0]]`` is solved with
    BiCGStab. Returns ``(x, lam, report)``.
    """
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    n = len(b)
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n), 0.0, SolveReport(0, 0.0, True)
    col = sp.csr_array(m.reshape(-1, 1))
    B = sp.block_array([[A, col], [col.T, None]], format="csr")
    rhs = np.append(b, 0.0)
    y, report = bicgstab_solve(B, rhs, tol=tol, max_iter=max_iter, precond="jacobi")
    if not report.converged:
        raise SolverError("bordered solve did not converge", report)
    x, lam = y[:n], float(y[n])
    # A @ 1 = 0, so a constant shift clears the rounding-level constraint
    # defect without touching the residual
    x -= (m @ x) / m.sum() if m.sum() != 0 else 0.0
    return x, lam, report
