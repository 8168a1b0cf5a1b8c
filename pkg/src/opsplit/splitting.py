"""Lie splitting of the relaxed flow ``u_t - Lap u = F(w)``, ``w_t + gamma (w - u) = 0``.

Each iteration takes one backward-Euler step for ``u`` with ``w`` frozen, then
relaxes ``w`` towards the new ``u`` with the exact exponential solution.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fem import DirichletSolver, assemble_stiffness, l2_norm, smallest_laplacian_eigenvalue
from .hessian import HessianConfig, HessianRecovery
from .problems import (
    MONGE_AMPERE,
    PUCCI,
    SEMILINEAR,
    monge_ampere_rhs,
    pucci_rhs,
    semilinear_rhs,
)

__all__ = [
    "SplittingConfig",
    "IterationRecord",
    "IterationLog",
    "ContractionDiagnostic",
    "SplittingResult",
    "initialize",
    "substep_u",
    "substep_w",
    "run",
    "contraction_diagnostic",
    "DIVERGENCE_THRESHOLD",
]

DIVERGENCE_THRESHOLD = 1e6

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
DIVERGED = "diverged"


@dataclasses.dataclass(frozen=True)
class SplittingConfig:
    """Time step, relaxation rate and stopping rule.

    ``gamma=None`` means "use the smallest Dirichlet eigenvalue of the mesh";
    ``hessian=None`` picks the recovery mode from the mesh.
    """

    tau: float = 1.0
    gamma: Optional[float] = None
    stop_tol: float = 1e-9
    max_iterations: int = 10000
    hessian: Optional[HessianConfig] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    n: int
    increment_l2: float
    err_l2: Optional[float] = None
    err_linf: Optional[float] = None
    clamped: int = 0


@dataclasses.dataclass
class IterationLog:
    records: list = dataclasses.field(default_factory=list)
    status: str = "running"

    def append(self, record):
        if self.records and record.n <= self.records[-1].n:
            raise ValueError("iteration numbers must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self):
        return self.records[-1].n if self.records else 0

    @property
    def increments(self):
        return np.array([r.increment_l2 for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "increment_l2", "err_l2", "err_linf"])
            for r in self.records:
                writer.writerow([
                    r.n,
                    repr(r.increment_l2),
                    "" if r.err_l2 is None else repr(r.err_l2),
                    "" if r.err_linf is None else repr(r.err_linf),
                ])

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(IterationRecord(
                    int(row["n"]),
                    float(row["increment_l2"]),
                    float(row["err_l2"]) if row["err_l2"] else None,
                    float(row["err_linf"]) if row["err_linf"] else None,
                ))
        return log


@dataclasses.dataclass(frozen=True)
class ContractionDiagnostic:
    c: float
    C1: float
    L: float
    satisfied: bool


@dataclasses.dataclass
class SplittingResult:
    u: np.ndarray
    w: np.ndarray
    log: IterationLog
    gamma: float
    clamp_events: int = 0

    def __iter__(self):
        # allows ``u, w, log = run(...)``
        return iter((self.u, self.w, self.log))


def contraction_diagnostic(config, C1, L):
    """Contraction factor of the semilinear iteration and its sufficient conditions.

    ``c = max{(2 - e) / (1 + tau/C1**2), e + (2 - e) L tau / (1 + tau/C1**2)}``
    with ``e = exp(-gamma tau)``; ``satisfied`` is
    ``4 L < gamma < 1/C1**2 and tau < 1/gamma``.
    """
    if not C1 > 0:
        raise ValueError("C1 must be positive")
    if L < 0:
        raise ValueError("L must be nonnegative")
    gamma = config.gamma
    if gamma is None:
        raise ValueError("contraction_diagnostic needs an explicit gamma")
    tau = config.tau
    e = math.exp(-gamma * tau)
    shrink = 1.0 / (1.0 + tau / C1**2)
    c = max((2.0 - e) * shrink, e + (2.0 - e) * shrink * L * tau)
    satisfied = 4.0 * L < gamma < 1.0 / C1**2 and tau < 1.0 / gamma
    return ContractionDiagnostic(float(c), float(C1), float(L), bool(satisfied))


class _Operators:
    """Per-mesh matrices shared by initialization and the u-substep."""

    def __init__(self, mesh, geometry, tau):
        self.mesh = mesh
        self.geometry = geometry
        self.m = geometry.support_area / 3.0
        self.K = assemble_stiffness(mesh)
        self.tau = tau
        self.step = DirichletSolver(sp.diags(self.m) + tau * self.K, mesh)
        self._laplace = None

    @property
    def laplace(self):
        if self._laplace is None:
            self._laplace = DirichletSolver(self.K, self.mesh)
        return self._laplace

    def advance(self, u_n, rhs_field, g):
        rhs = self.m * (np.asarray(u_n, float) + self.tau * np.asarray(rhs_field, float))
        return self.step.solve(rhs, g)


def _initialize(problem, ops):
    g = problem.boundary_values(ops.mesh)
    if problem.kind == MONGE_AMPERE:
        # Lap u0 = f, i.e. -Lap u0 = -f, with u0 = g on the boundary;
        # f is only sampled inside (it may blow up on the boundary)
        ni = ops.mesh.n_interior
        load = np.zeros(ops.mesh.n_total)
        load[:ni] = -ops.m[:ni] * problem.f(ops.mesh.nodes[:ni])
        u0 = ops.laplace.solve(load, g)
    else:
        u0 = ops.laplace.solve(np.zeros(ops.mesh.n_total), g)
    return u0, u0.copy()


def initialize(problem, mesh, geometry):
    """Harmonic extension of ``g`` (Poisson with source ``f`` for Monge-Ampere).

    Returns ``(u0, w0)`` with ``w0 = u0``.
    """
    return _initialize(problem, _Operators(mesh, geometry, 1.0))


def substep_u(u_n, rhs_field, config, mesh, geometry, g):
    """One backward-Euler step: ``(M + tau K) u = M u_n + tau M rhs`` with ``u = g`` on the boundary.

    ``g`` is either a callable or a nodal vector whose boundary entries are used.
    """
    if callable(g):
        values = np.zeros(mesh.n_total)
        values[mesh.boundary] = g(mesh.nodes[mesh.boundary])
        g = values
    return _Operators(mesh, geometry, config.tau).advance(u_n, rhs_field, g)


def substep_w(w_n, u_np1, config, gamma=None, tau=None):
    """Exact relaxation ``w = e^{-gamma tau} w_n + (1 - e^{-gamma tau}) u``.

    ``gamma`` and ``tau`` override the config values (``tau=0`` is allowed
    here and returns ``w_n``).
    """
    gamma = config.gamma if gamma is None else gamma
    tau = config.tau if tau is None else tau
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if gamma is None:
        raise ValueError("gamma is not set")
    w_n = np.asarray(w_n, float)
    u_np1 = np.asarray(u_np1, float)
    if w_n.shape != u_np1.shape:
        raise ValueError("w_n and u_np1 differ in shape")
    decay = math.exp(-gamma * tau)
    return decay * w_n + (1.0 - decay) * u_np1


class _RightHandSide:
    def __init__(self, problem, mesh, geometry, config, stiffness):
        self.problem = problem
        self.mesh = mesh
        self.recovery = None
        if problem.kind != SEMILINEAR:
            hcfg = config.hessian or HessianConfig.for_mesh(mesh)
            self.recovery = HessianRecovery(mesh, geometry, hcfg, stiffness)

    def __call__(self, w):
        """Return ``(rhs, clamped_count)``."""
        if self.problem.kind == SEMILINEAR:
            return semilinear_rhs(w, self.problem, self.mesh), 0
        H = self.recovery(w)
        if self.problem.kind == MONGE_AMPERE:
            return monge_ampere_rhs(H, self.problem, self.mesh, return_clamped=True)
        assert self.problem.kind == PUCCI
        return pucci_rhs(H, self.problem, self.mesh), 0


def run(problem, mesh, geometry, config=None, initial=None, callback=None):
    """Iterate the splitting scheme until ``||u^{n+1} - u^n||_0 < stop_tol``.

    Parameters
    ----------
    problem : ProblemSpec
    mesh, geometry : Triangulation, NodeGeometry
    config : SplittingConfig, optional
    initial : (u0, w0), optional
        Overrides the default initialization.
    callback : callable, optional
        Called as ``callback(n, u, w)`` after every iteration.

    Returns
    -------
    SplittingResult
        Unpacks as ``u, w, log``.  The last iterate is returned whatever the
        terminal status; ``log.status`` tells which.
    """
    config = config or SplittingConfig()
    ops = _Operators(mesh, geometry, config.tau)
    gamma = config.gamma
    if gamma is None:
        gamma = smallest_laplacian_eigenvalue(mesh, geometry)
    if initial is None:
        u, w = _initialize(problem, ops)
    else:
        u = np.array(initial[0], float)
        w = np.array(initial[1], float)
    g = problem.boundary_values(mesh)
    exact = problem.exact_values(mesh)
    rhs_of = _RightHandSide(problem, mesh, geometry, config, ops.K)
    decay = math.exp(-gamma * config.tau)

    log = IterationLog()
    clamp_total = 0
    for n in range(1, config.max_iterations + 1):
        rhs, clamped = rhs_of(w)
        clamp_total += clamped
        u_new = ops.advance(u, rhs, g)
        w = decay * w + (1.0 - decay) * u_new
        increment = l2_norm(u_new - u, geometry)
        u = u_new
        err_l2 = err_linf = None
        if exact is not None:
            err_l2 = l2_norm(u - exact, geometry)
            err_linf = float(np.max(np.abs(u - exact)))
        log.append(IterationRecord(n, increment, err_l2, err_linf, clamped))
        if callback is not None:
            callback(n, u, w)
        if not math.isfinite(increment) or increment > DIVERGENCE_THRESHOLD:
            log.status = DIVERGED
            break
        if increment < config.stop_tol:
            log.status = CONVERGED
            break
    else:
        log.status = MAX_ITERATIONS
    return SplittingResult(u, w, log, float(gamma), clamp_total)
