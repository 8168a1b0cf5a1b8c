"""Discrete Hessian of a P1 field.

Three stages, each usable on its own:

1. :func:`recover_interior` -- integration by parts against interior hat
   functions with a lumped left-hand side; boundary values are zero.
2. :func:`repair_boundary` -- recompute boundary values so that the normal
   derivative of each component vanishes.
3. :func:`tikhonov_regularize` -- smooth with ``(eps K + M) D~ = M D``.

On the regular square mesh only stage 1 is used.  :class:`HessianRecovery`
chains the stages with all matrices factorized once per mesh.
"""
from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import SolverError, assemble_derivative_forms, assemble_stiffness

__all__ = [
    "HessianField",
    "HessianConfig",
    "HessianRecovery",
    "recover_interior",
    "repair_boundary",
    "tikhonov_regularize",
    "hessian_pointwise",
    "hessian_eigenvalues",
]

COMPONENTS = ("d11", "d12", "d22")


@dataclasses.dataclass(frozen=True)
class HessianField:
    """Nodal second derivatives; ``d21`` is ``d12`` by construction."""

    d11: np.ndarray
    d12: np.ndarray
    d22: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(getattr(self, c)) for c in COMPONENTS}
        if len(shapes) != 1:
            raise ValueError(f"Hessian components differ in shape: {shapes}")

    @property
    def laplacian(self):
        return self.d11 + self.d22

    @property
    def determinant(self):
        return self.d11 * self.d22 - self.d12**2

    def map(self, fn):
        return HessianField(*(fn(getattr(self, c)) for c in COMPONENTS))

    @classmethod
    def constant(cls, n, d11, d12, d22):
        return cls(np.full(n, float(d11)), np.full(n, float(d12)), np.full(n, float(d22)))


@dataclasses.dataclass(frozen=True)
class HessianConfig:
    """Recovery mode.

    ``epsilon = 0`` with ``boundary_repair=False`` is the regular-mesh mode.
    Unstructured meshes use boundary repair with ``epsilon ~ h**2``.
    """

    epsilon: float = 0.0
    boundary_repair: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.epsilon == 0 and self.boundary_repair:
            raise ValueError("epsilon = 0 is only allowed without boundary repair")

    @classmethod
    def regular(cls):
        return cls(0.0, False)

    @classmethod
    def unstructured(cls, h, scale=1.0):
        return cls(scale * h * h, True)

    @classmethod
    def for_mesh(cls, mesh, regular=None):
        """Regular-mesh mode for generated unit-square meshes, unstructured otherwise."""
        if regular is None:
            regular = mesh.domain_tag == "unit-square"
        return cls.regular() if regular else cls.unstructured(mesh.h)


def _lumped(geometry):
    return geometry.support_area / 3.0


class _InteriorOperators:
    def __init__(self, mesh):
        kxx, kxy, kyy, cx, cy = assemble_derivative_forms(mesh)
        self.kxx = kxx
        self.kyy = kyy
        self.kxy_sym = 0.5 * (kxy + kxy.T).tocsr()
        self.cx = cx
        self.cy = cy


def _recover(ops, psi, mesh, geometry):
    m = _lumped(geometry)
    ni = mesh.n_interior
    out = []
    for op in (ops.kxx, ops.kxy_sym, ops.kyy):
        d = np.zeros(mesh.n_total)
        d[:ni] = -(op @ psi)[:ni] / m[:ni]
        out.append(d)
    return HessianField(*out)


def recover_interior(psi, mesh, geometry):
    """Interior Hessian from the weak identity, lumped left-hand side.

    ``D_ij(Q_k) = -(3 / (2 |theta_k|)) int (d_i psi d_j phi_k + d_j psi d_i phi_k)``
    for interior ``k``; boundary entries are zero.
    """
    psi = np.asarray(psi, float)
    if psi.shape != (mesh.n_total,):
        raise ValueError(f"psi has shape {psi.shape}, expected ({mesh.n_total},)")
    return _recover(_InteriorOperators(mesh), psi, mesh, geometry)


class _BoundarySystem:
    """Zero-Neumann condition ``b1 n1 + b2 n2 = 0`` at every boundary node.

    Row ``k`` is ``sum_j P_j int (n1 d_x phi_j + n2 d_y phi_j) phi_k``; the
    positive factor ``3/|theta_k|`` is dropped since the right side is zero.
    """

    def __init__(self, ops, mesh, geometry):
        ni = mesh.n_interior
        n1 = geometry.boundary_normal[:, 0]
        n2 = geometry.boundary_normal[:, 1]
        rows = (sp.diags(n1) @ ops.cx[ni:] + sp.diags(n2) @ ops.cy[ni:]).tocsr()
        self.A_bi = rows[:, :ni]
        A_bb = rows[:, ni:].tocsc()
        self.lu = self._factor(A_bb)

    @staticmethod
    def _factor(A):
        try:
            lu = spla.splu(A)
            if _well_posed(lu, A):
                return lu
        except RuntimeError:
            pass
        shift = 1e-10 * np.abs(A.diagonal()).max()
        try:
            lu = spla.splu((A + shift * sp.identity(A.shape[0])).tocsc())
        except RuntimeError as exc:
            raise SolverError(f"boundary Neumann system is singular: {exc}") from exc
        if not _well_posed(lu, A):
            raise SolverError("boundary Neumann system is singular")
        return lu

    def solve(self, interior_values):
        return self.lu.solve(-(self.A_bi @ interior_values))


def _well_posed(lu, A):
    u = np.abs(lu.U.diagonal())
    return bool(np.all(np.isfinite(u)) and u.min() > 1e-14 * max(u.max(), 1e-300))


def repair_boundary(field, psi, mesh, geometry):
    """Replace boundary values of each component by the zero-Neumann extension.

    Interior values are unchanged.  ``psi`` is accepted for interface symmetry
    with :func:`recover_interior`; the repair only reads ``field``.
    """
    system = _BoundarySystem(_InteriorOperators(mesh), mesh, geometry)
    return _repair(system, field, mesh)


def _repair(system, field, mesh):
    ni = mesh.n_interior

    def fix(d):
        out = np.array(d, float)
        out[ni:] = system.solve(out[:ni])
        return out

    return field.map(fix)


class _Smoother:
    def __init__(self, mesh, geometry, epsilon, stiffness=None):
        if stiffness is None:
            stiffness = assemble_stiffness(mesh)
        self.m = _lumped(geometry)
        A = (epsilon * stiffness + sp.diags(self.m)).tocsc()
        self.lu = spla.splu(A)

    def __call__(self, d):
        return self.lu.solve(self.m * d)


def tikhonov_regularize(field, config, mesh, geometry):
    """Solve ``(eps K + M) D~ = M D`` on all nodes for each component.

    Natural (zero-flux) boundary condition; ``eps = 0`` returns ``field``.
    """
    if config.epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if config.epsilon == 0:
        return field
    return field.map(_Smoother(mesh, geometry, config.epsilon))


class HessianRecovery:
    """Reusable recovery pipeline for one mesh and configuration."""

    def __init__(self, mesh, geometry, config=None, stiffness=None):
        self.mesh = mesh
        self.geometry = geometry
        self.config = HessianConfig.for_mesh(mesh) if config is None else config
        self._ops = _InteriorOperators(mesh)
        self._boundary = None
        self._smoother = None
        if self.config.boundary_repair:
            self._boundary = _BoundarySystem(self._ops, mesh, geometry)
        if self.config.epsilon > 0:
            self._smoother = _Smoother(mesh, geometry, self.config.epsilon, stiffness)

    def __call__(self, psi):
        field = _recover(self._ops, np.asarray(psi, float), self.mesh, self.geometry)
        if self._boundary is not None:
            field = _repair(self._boundary, field, self.mesh)
        if self._smoother is not None:
            field = field.map(self._smoother)
        return field


def hessian_eigenvalues(d11, d12, d22):
    """Eigenvalues ``lambda1 >= lambda2`` of the symmetric 2x2 Hessian.

    Uses the discriminant in the form ``(d11 - d22)**2 + 4 d12**2``, which is
    ``(trace)**2 - 4 det`` rewritten to stay nonnegative.
    """
    trace = np.add(d11, d22)
    root = np.sqrt(np.square(np.subtract(d11, d22)) + 4.0 * np.square(d12))
    return 0.5 * (trace + root), 0.5 * (trace - root)


def hessian_pointwise(field, node):
    """Laplacian, determinant and ordered eigenvalues at a single node."""
    d11 = float(field.d11[node])
    d12 = float(field.d12[node])
    d22 = float(field.d22[node])
    lam1, lam2 = hessian_eigenvalues(d11, d12, d22)
    return {
        "laplacian": d11 + d22,
        "determinant": d11 * d22 - d12 * d12,
        "lambda1": float(lam1),
        "lambda2": float(lam2),
    }
