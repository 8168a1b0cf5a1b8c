"""P1 finite-element operators with vertex (trapezoidal) quadrature.

Operators are plain ``scipy.sparse`` CSR matrices and nodal fields are 1-D
numpy arrays of length ``mesh.n_total``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import compute_node_geometry, triangle_areas

__all__ = [
    "SolverError",
    "ConvergenceError",
    "p1_gradients",
    "assemble_stiffness",
    "assemble_lumped_mass",
    "assemble_derivative_forms",
    "DirichletSolver",
    "solve_dirichlet",
    "smallest_laplacian_eigenvalue",
    "field_norms",
    "l2_norm",
]


class SolverError(RuntimeError):
    """A linear system could not be solved (singular or not converged)."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None, last_value=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.last_value = last_value


def p1_gradients(mesh):
    """Per-triangle areas and constant gradients of the three hat functions.

    Returns
    -------
    area : (T,) array
    grad : (T, 3, 2) array, ``grad[t, a]`` is the gradient of the basis
        function of local vertex ``a`` on triangle ``t``.
    """
    p = mesh.nodes[mesh.triangles]
    area = triangle_areas(mesh.nodes, mesh.triangles)
    grad = np.empty((len(area), 3, 2))
    for a in range(3):
        b, c = p[:, (a + 1) % 3], p[:, (a + 2) % 3]
        grad[:, a, 0] = b[:, 1] - c[:, 1]
        grad[:, a, 1] = c[:, 0] - b[:, 0]
    grad /= (2.0 * area)[:, None, None]
    return area, grad


def _assemble(mesh, local):
    """Sum per-triangle 3x3 blocks ``local[t, a, b]`` into an N x N matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_total
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh):
    """Exact P1 stiffness matrix ``K[a, b] = int grad(phi_a) . grad(phi_b)``."""
    area, grad = p1_gradients(mesh)
    local = area[:, None, None] * np.einsum("tai,tbi->tab", grad, grad)
    return _assemble(mesh, local)


def assemble_lumped_mass(mesh, geometry=None):
    """Diagonal mass matrix from vertex quadrature, entry j = ``|theta_j| / 3``."""
    if geometry is None:
        geometry = compute_node_geometry(mesh)
    return sp.diags(geometry.support_area / 3.0, format="csr")


def assemble_derivative_forms(mesh):
    """Mixed gradient forms used by Hessian recovery.

    Returns ``(Kxx, Kxy, Kyy, Cx, Cy)`` where
    ``Kij[a, b] = int d_i(phi_b) d_j(phi_a)`` and
    ``Ci[a, b] = int d_i(phi_b) phi_a`` (exact, since ``d_i phi_b`` is
    constant per triangle and ``int_T phi_a = |T|/3``).
    """
    area, grad = p1_gradients(mesh)
    w = area[:, None, None]
    gx, gy = grad[:, :, 0], grad[:, :, 1]
    kxx = _assemble(mesh, w * gx[:, :, None] * gx[:, None, :])
    kyy = _assemble(mesh, w * gy[:, :, None] * gy[:, None, :])
    # row a (test), column b (trial): d_x(phi_b) d_y(phi_a)
    kxy = _assemble(mesh, w * gy[:, :, None] * gx[:, None, :])
    third = (area / 3.0)[:, None, None]
    ones = np.ones((1, 3, 1))
    cx = _assemble(mesh, third * ones * gx[:, None, :])
    cy = _assemble(mesh, third * ones * gy[:, None, :])
    return kxx, kxy, kyy, cx, cy


class DirichletSolver:
    """Factorize the interior block of ``A`` once, solve for many right-hand sides.

    Parameters
    ----------
    A : sparse (N, N) matrix, SPD on the interior block
    mesh : Triangulation
    method : {"direct", "cg"}
        ``"direct"`` uses a sparse LU factorization; if that fails (or for
        ``"cg"``) conjugate gradients with relative residual 1e-12 are used.
    """

    def __init__(self, A, mesh, method="direct"):
        A = sp.csr_matrix(A)
        ni = mesh.n_interior
        self.mesh = mesh
        self.A = A
        self.A_ii = A[:ni, :ni].tocsc()
        self.A_ib = A[:ni, ni:]
        self._lu = None
        if ni == 0:
            return
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown method {method!r}")
        if method == "direct":
            try:
                self._lu = spla.splu(self.A_ii)
            except RuntimeError as exc:
                raise SolverError(f"singular interior block: {exc}") from exc
            except MemoryError:
                method = "cg"
        self.method = method

    def solve_interior(self, b):
        """Solve ``A_ii x = b``."""
        if self._lu is not None:
            x = self._lu.solve(b)
            if not np.all(np.isfinite(x)):
                raise SolverError("singular interior block")
            return x
        x, info = spla.cg(self.A_ii, b, rtol=1e-12, atol=0.0, maxiter=10 * len(b))
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
        return x

    def solve(self, rhs, boundary_values):
        rhs = np.asarray(rhs, float)
        g = np.asarray(boundary_values, float)
        ni = self.mesh.n_interior
        u = np.empty(self.mesh.n_total)
        u[ni:] = g[ni:]
        if ni:
            u[:ni] = self.solve_interior(rhs[:ni] - self.A_ib @ u[ni:])
        return u


def solve_dirichlet(A, rhs, boundary_values, mesh):
    """Solve ``A u = rhs`` on interior nodes with ``u = boundary_values`` on the boundary.

    Only interior rows of ``rhs`` are used.  Raises :class:`SolverError` when
    the interior block is singular.
    """
    return DirichletSolver(A, mesh).solve(rhs, boundary_values)


def smallest_laplacian_eigenvalue(mesh, geometry=None, rtol=1e-8, max_iterations=1000):
    """Smallest eigenvalue of ``K x = lambda M x`` on interior nodes.

    Inverse power iteration with the lumped mass matrix; the eigenvalue is
    the Rayleigh quotient of the current iterate.
    """
    if mesh.n_interior < 1:
        raise ValueError("mesh has no interior nodes")
    if geometry is None:
        geometry = compute_node_geometry(mesh)
    ni = mesh.n_interior
    K = assemble_stiffness(mesh)[:ni, :ni].tocsc()
    m = geometry.support_area[:ni] / 3.0
    lu = spla.splu(K)
    x = np.ones(ni)
    x /= np.sqrt(x @ (m * x))
    lam = (x @ (K @ x)) / (x @ (m * x))
    for _ in range(max_iterations):
        y = lu.solve(m * x)
        x = y / np.sqrt(y @ (m * y))
        new = (x @ (K @ x)) / (x @ (m * x))
        if abs(new - lam) <= rtol * abs(new):
            return float(new)
        lam = new
    raise ConvergenceError(
        f"inverse iteration did not converge in {max_iterations} iterations",
        last_iterate=x,
        last_value=float(lam),
    )


def l2_norm(e, geometry):
    """Trapezoidal L2 norm ``sqrt(sum_j |theta_j|/3 e_j^2)``."""
    return float(np.sqrt(np.sum(geometry.support_area / 3.0 * np.square(e))))


def field_norms(e, mesh, geometry=None, stiffness=None):
    """Trapezoidal L2, nodal max and H1-seminorm of a nodal field."""
    e = np.asarray(e, float)
    if e.shape != (mesh.n_total,):
        raise ValueError(f"field has shape {e.shape}, expected ({mesh.n_total},)")
    if geometry is None:
        geometry = compute_node_geometry(mesh)
    if stiffness is None:
        stiffness = assemble_stiffness(mesh)
    return {
        "l2": l2_norm(e, geometry),
        "linf": float(np.max(np.abs(e))) if e.size else 0.0,
        "h1_semi": float(np.sqrt(max(e @ (stiffness @ e), 0.0))),
    }
