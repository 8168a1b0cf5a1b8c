"""Problem families and the benchmark registry.

All data functions take an ``(N, 2)`` array of points and return ``(N,)``
arrays.  Semilinear sources take ``(x, u)``.
"""
from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SEMILINEAR",
    "MONGE_AMPERE",
    "PUCCI",
    "ProblemSpec",
    "semilinear_rhs",
    "monge_ampere_rhs",
    "pucci_rhs",
    "registry",
    "get_problem",
    "problem_names",
]

SEMILINEAR = "Semilinear"
MONGE_AMPERE = "MongeAmpere"
PUCCI = "Pucci"
KINDS = (SEMILINEAR, MONGE_AMPERE, PUCCI)


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    name: str
    kind: str
    g: Callable
    f: Optional[Callable] = None
    exact: Optional[Callable] = None
    alpha: Optional[float] = None
    lipschitz: Optional[float] = None
    domain_tag: str = "unit-square"
    degenerate: bool = False
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == PUCCI:
            if self.alpha is None or not self.alpha > 1:
                raise ValueError(f"Pucci problems need alpha > 1, got {self.alpha!r}")
        elif self.f is None:
            raise ValueError(f"{self.kind} problem {self.name!r} needs a source f")

    def boundary_values(self, mesh):
        """Nodal vector with ``g`` on boundary nodes and zeros inside."""
        out = np.zeros(mesh.n_total)
        out[mesh.boundary] = self.g(mesh.nodes[mesh.boundary])
        return out

    def exact_values(self, mesh):
        if self.exact is None:
            return None
        return self.exact(mesh.nodes)


def _check_kind(spec, kind):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} problem, got {spec.kind} ({spec.name})")


def semilinear_rhs(w, spec, mesh):
    """Nodal values ``f(Q_j, w(Q_j))``."""
    _check_kind(spec, SEMILINEAR)
    return np.asarray(spec.f(mesh.nodes, np.asarray(w, float)), float)


def monge_ampere_rhs(H, spec, mesh, return_clamped=False):
    """``-sqrt((d11 + d22)**2 - 4 det + 4 f)`` at interior nodes.

    Negative radicands are clamped to zero.  Boundary entries are zero; they
    never enter the update since boundary values of ``u`` are prescribed.
    With ``return_clamped`` the number of clamped nodes is returned as well.
    """
    _check_kind(spec, MONGE_AMPERE)
    ni = mesh.n_interior
    d11, d12, d22 = H.d11[:ni], H.d12[:ni], H.d22[:ni]
    f = spec.f(mesh.nodes[:ni])
    radicand = (d11 + d22) ** 2 - 4.0 * (d11 * d22 - d12 * d12) + 4.0 * f
    negative = radicand < 0
    out = np.zeros(mesh.n_total)
    out[:ni] = -np.sqrt(np.where(negative, 0.0, radicand))
    if return_clamped:
        return out, int(negative.sum())
    return out


def pucci_rhs(H, spec, mesh):
    """``(alpha - 1)/(alpha + 1) * sqrt((d11 - d22)**2 + 4 d12**2)`` at interior nodes."""
    _check_kind(spec, PUCCI)
    ni = mesh.n_interior
    d11, d12, d22 = H.d11[:ni], H.d12[:ni], H.d22[:ni]
    out = np.zeros(mesh.n_total)
    factor = (spec.alpha - 1.0) / (spec.alpha + 1.0)
    out[:ni] = factor * np.sqrt((d11 - d22) ** 2 + 4.0 * d12 * d12)
    return out


# --- benchmark data -------------------------------------------------------

def _semilinear_cos(L=0.5):
    def g(x):
        return np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])

    def f(x, u):
        gx = g(x)
        return L * np.abs(u) + 2.0 * np.pi**2 * gx - L * np.abs(gx)

    return ProblemSpec(
        "semilinear-cos", SEMILINEAR, g, f, exact=g, lipschitz=float(L),
        params={"L": float(L)},
    )


def _ma_quadratic(beta=1.0):
    def u(x):
        return 8.0 * (beta * (x[:, 0] - 0.5) ** 2 + (x[:, 1] - 0.5) ** 2 / beta) - 1.0

    def f(x):
        return np.full(len(x), 256.0)

    return ProblemSpec("ma-quadratic", MONGE_AMPERE, u, f, exact=u, params={"beta": float(beta)})


def _ma_exp():
    def u(x):
        return np.exp(0.5 * np.sum(x * x, axis=1))

    def f(x):
        r2 = np.sum(x * x, axis=1)
        return (1.0 + r2) * np.exp(r2)

    return ProblemSpec("ma-exp", MONGE_AMPERE, u, f, exact=u)


def _ma_obstacle():
    x0 = np.array([0.5, 0.5])

    def dist(x):
        return np.hypot(x[:, 0] - x0[0], x[:, 1] - x0[1])

    def u(x):
        return 0.5 * np.maximum(dist(x) - 0.2, 0.0) ** 2

    def f(x):
        r = dist(x)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, np.maximum(1.0 - 0.2 / np.where(r > 0, r, 1.0), 0.0), 0.0)

    return ProblemSpec("ma-obstacle", MONGE_AMPERE, u, f, exact=u, degenerate=True)


def _ma_singular():
    def r2(x):
        return (x[:, 0] - 0.5) ** 2 + (x[:, 1] - 0.5) ** 2

    def u(x):
        return -0.5 * np.sqrt(np.maximum(1.0 - 4.0 * r2(x), 0.0))

    def f(x):
        return 4.0 / (1.0 - 4.0 * r2(x)) ** 2

    def g(x):
        return np.zeros(len(x))

    return ProblemSpec(
        "ma-singular", MONGE_AMPERE, g, f, exact=u, domain_tag="half-unit-disk"
    )


def _ma_no_classical():
    def zero(x):
        return np.zeros(len(x))

    def one(x):
        return np.ones(len(x))

    return ProblemSpec("ma-no-classical", MONGE_AMPERE, zero, one)


def _pucci_smooth(alpha=2.0):
    def u(x):
        rho = np.hypot(x[:, 0] + 1.0, x[:, 1] + 1.0)
        return -(rho ** (1.0 - alpha))

    return ProblemSpec(
        "pucci-smooth", PUCCI, u, exact=u, alpha=float(alpha), params={"alpha": float(alpha)}
    )


def sine_ramp(t, delta):
    """Smoothed indicator of ``(1/4, 3/4)`` along a side: 0 inside, 1 outside."""
    t = np.asarray(t, float)
    out = np.ones_like(t)
    lo = np.abs(t - 0.25) <= delta
    hi = np.abs(t - 0.75) <= delta
    mid = (t >= 0.25 + delta) & (t <= 0.75 - delta)
    out[mid] = 0.0
    out[lo] = 0.5 * (1.0 - np.sin(0.5 * np.pi * (t[lo] - 0.25) / delta))
    out[hi] = 0.5 * (1.0 + np.sin(0.5 * np.pi * (t[hi] - 0.75) / delta))
    return out


def _pucci_indicator(alpha=2.0, delta=1.0 / 16.0):
    def g(x, tol=1e-12):
        # horizontal sides are parametrised by x1, vertical sides by x2
        horizontal = (np.abs(x[:, 1]) < tol) | (np.abs(x[:, 1] - 1.0) < tol)
        t = np.where(horizontal, x[:, 0], x[:, 1])
        return sine_ramp(t, delta)

    return ProblemSpec(
        "pucci-indicator", PUCCI, g, alpha=float(alpha),
        params={"alpha": float(alpha), "delta": float(delta)},
    )


_FACTORIES = {
    "semilinear-cos": (_semilinear_cos, ("L",)),
    "ma-quadratic": (_ma_quadratic, ("beta",)),
    "ma-exp": (_ma_exp, ()),
    "ma-obstacle": (_ma_obstacle, ()),
    "ma-singular": (_ma_singular, ()),
    "ma-no-classical": (_ma_no_classical, ()),
    "pucci-smooth": (_pucci_smooth, ("alpha",)),
    "pucci-indicator": (_pucci_indicator, ("alpha", "delta")),
}


def problem_names():
    return list(_FACTORIES)


def get_problem(name, **params):
    """Build a registered problem; ``params`` override its defaults.

    Parameters that the problem does not use (e.g. ``beta`` for ``ma-exp``)
    are ignored when ``None``, rejected otherwise.
    """
    try:
        factory, accepted = _FACTORIES[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; valid names: {', '.join(_FACTORIES)}"
        ) from None
    params = {k: v for k, v in params.items() if v is not None}
    unknown = set(params) - set(accepted)
    if unknown:
        raise ValueError(f"problem {name!r} does not take parameters {sorted(unknown)}")
    return factory(**params)


def registry():
    """The eight benchmark problems with their default parameters."""
    return {name: get_problem(name) for name in _FACTORIES}
