"""Convergence studies, cross-sections, CSV output and the command line.

Typical use::

    plan = StudyPlan("ma-exp", mesh_family="regular", h_values=[1/20, 1/40, 1/80])
    report = run_study(plan)
    print(report.format_table())
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .fem import SolverError, ConvergenceError
from .hessian import HessianConfig
from .mesh import (
    MeshError,
    compute_node_geometry,
    generate_eye_domain,
    generate_half_unit_disk,
    generate_regular_square,
    load_mesh,
    triangle_areas,
)
from .problems import get_problem, problem_names
from .splitting import SplittingConfig, run

__all__ = [
    "StudyPlan",
    "LevelRecord",
    "RunReport",
    "parse_h",
    "infer_h",
    "build_mesh",
    "run_study",
    "solve_level",
    "compute_rate",
    "parse_line",
    "cross_section",
    "write_field",
    "read_field",
    "cli",
    "main",
]

MESH_FAMILIES = ("regular", "disk", "eye")


def parse_h(text):
    """Parse ``1/N`` or a decimal into a float mesh size."""
    text = str(text).strip()
    try:
        value = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse mesh size {text!r}") from None
    if not value > 0:
        raise ValueError(f"mesh size must be positive, got {text!r}")
    return value


def _format_h(h):
    n = 1.0 / h
    if abs(n - round(n)) < 1e-9:
        return f"1/{int(round(n))}"
    return repr(h)


def build_mesh(family, h):
    """Mesh of the given family at nominal size ``h``.

    ``family`` is ``regular``, ``disk``, ``eye`` or ``file:PATTERN`` where
    ``PATTERN`` may contain ``{n}`` (replaced by ``round(1/h)``).
    """
    if family == "regular":
        return generate_regular_square(int(round(1.0 / h)))
    if family == "disk":
        return generate_half_unit_disk(int(round(0.5 / h)))
    if family == "eye":
        return generate_eye_domain(int(round(1.0 / h)))
    if family.startswith("file:"):
        path = family[5:].replace("{n}", str(int(round(1.0 / h))))
        return load_mesh(path)
    raise ValueError(f"unknown mesh family {family!r}")


@dataclasses.dataclass
class StudyPlan:
    """One problem solved on a sequence of meshes.

    ``epsilon_scale`` sets the Tikhonov parameter ``epsilon = scale * h**2``
    on non-regular meshes; ``regular_hessian`` forces the recovery mode.
    """

    problem: str
    params: dict = dataclasses.field(default_factory=dict)
    mesh_family: str = "regular"
    h_values: list = dataclasses.field(default_factory=list)
    tau: float = 1.0
    gamma: Optional[float] = None
    stop_tol: float = 1e-9
    max_iterations: int = 10000
    epsilon_scale: float = 1.0
    regular_hessian: Optional[bool] = None
    out_dir: Optional[str] = None
    write_fields: bool = False

    def __post_init__(self):
        self.h_values = [float(h) for h in self.h_values]
        if not self.h_values:
            raise ValueError("a study needs at least one mesh size")
        if any(b >= a for a, b in zip(self.h_values, self.h_values[1:])):
            raise ValueError("mesh sizes must be strictly decreasing")

    def hessian_config(self, h):
        regular = self.regular_hessian
        if regular is None:
            regular = self.mesh_family == "regular"
        if regular:
            return HessianConfig.regular()
        return HessianConfig.unstructured(h, self.epsilon_scale)

    def splitting_config(self, h):
        return SplittingConfig(
            tau=self.tau,
            gamma=self.gamma,
            stop_tol=self.stop_tol,
            max_iterations=self.max_iterations,
            hessian=self.hessian_config(h),
        )


@dataclasses.dataclass
class LevelRecord:
    h: float
    iterations: int = 0
    status: str = ""
    err_l2: Optional[float] = None
    err_linf: Optional[float] = None
    rate_l2: Optional[float] = None
    rate_linf: Optional[float] = None
    min_value: Optional[float] = None
    cpu_seconds: Optional[float] = None
    clamp_events: int = 0
    gamma: Optional[float] = None
    error: str = ""


REPORT_COLUMNS = [f.name for f in dataclasses.fields(LevelRecord)]
_INT_COLUMNS = {"iterations", "clamp_events"}
_STR_COLUMNS = {"status", "error"}


@dataclasses.dataclass
class RunReport:
    levels: list = dataclasses.field(default_factory=list)
    metadata: dict = dataclasses.field(default_factory=dict)

    def column(self, name):
        return [getattr(level, name) for level in self.levels]

    def fill_rates(self):
        """Empirical orders between consecutive successful levels."""
        for prev, cur in zip(self.levels, self.levels[1:]):
            for norm in ("l2", "linf"):
                a, b = getattr(prev, f"err_{norm}"), getattr(cur, f"err_{norm}")
                rate = None
                if a is not None and b is not None and a > 0 and b > 0:
                    rate = compute_rate(a, b, prev.h, cur.h)
                setattr(cur, f"rate_{norm}", rate)

    def write_csv(self, path_or_buffer, include_cpu=True):
        own = isinstance(path_or_buffer, (str, os.PathLike))
        fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
        try:
            for key, value in self.metadata.items():
                fh.write(f"# {key} = {value}\n")
            columns = REPORT_COLUMNS
            if len(self.levels) < 2:
                columns = [c for c in columns if not c.startswith("rate_")]
            writer = csv.writer(fh)
            writer.writerow(columns)
            for level in self.levels:
                row = []
                for name in columns:
                    value = getattr(level, name)
                    if name == "cpu_seconds" and not include_cpu:
                        value = None
                    if value is None:
                        row.append("")
                    elif isinstance(value, float):
                        row.append(repr(value))
                    else:
                        row.append(str(value))
                writer.writerow(row)
        finally:
            if own:
                fh.close()

    @classmethod
    def read_csv(cls, path_or_buffer):
        if isinstance(path_or_buffer, (str, os.PathLike)):
            text = Path(path_or_buffer).read_text()
        else:
            text = path_or_buffer.read()
        metadata = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                metadata[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
        levels = []
        for row in csv.DictReader(body):
            kwargs = {}
            for name in REPORT_COLUMNS:
                raw = row.get(name, "")
                if name in _STR_COLUMNS:
                    kwargs[name] = raw
                elif raw == "":
                    kwargs[name] = 0 if name in _INT_COLUMNS else None
                elif name in _INT_COLUMNS:
                    kwargs[name] = int(raw)
                else:
                    kwargs[name] = float(raw)
            levels.append(LevelRecord(**kwargs))
        return cls(levels, metadata)

    def format_table(self):
        lines = [
            f"{'h':>8} {'iter':>6} {'L2 error':>11} {'rate':>6} "
            f"{'Linf error':>11} {'rate':>6} {'min':>10} {'status':>14}"
        ]

        def num(v, fmt):
            return f"{v:{fmt}}" if v is not None else "-"

        for lv in self.levels:
            lines.append(
                f"{_format_h(lv.h):>8} {lv.iterations:>6} {num(lv.err_l2, '.3e'):>11} "
                f"{num(lv.rate_l2, '.2f'):>6} {num(lv.err_linf, '.3e'):>11} "
                f"{num(lv.rate_linf, '.2f'):>6} {num(lv.min_value, '.5f'):>10} {lv.status:>14}"
            )
        return "\n".join(lines)


def compute_rate(err_coarse, err_fine, h_coarse, h_fine):
    """Empirical order ``log(e_c / e_f) / log(h_c / h_f)``."""
    for name, v in (("err_coarse", err_coarse), ("err_fine", err_fine),
                    ("h_coarse", h_coarse), ("h_fine", h_fine)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    if not h_coarse > h_fine:
        raise ValueError("h_coarse must exceed h_fine")
    return math.log(err_coarse / err_fine) / math.log(h_coarse / h_fine)


def solve_level(problem, mesh, config):
    """Solve on one mesh; returns ``(LevelRecord, SplittingResult, geometry)``."""
    geometry = compute_node_geometry(mesh)
    start = time.perf_counter()
    result = run(problem, mesh, geometry, config)
    elapsed = time.perf_counter() - start
    record = LevelRecord(
        h=float(mesh.h),
        iterations=result.log.iterations,
        status=result.log.status,
        min_value=float(result.u.min()),
        cpu_seconds=elapsed,
        clamp_events=result.clamp_events,
        gamma=result.gamma,
    )
    if result.log.records and result.log.records[-1].err_l2 is not None:
        record.err_l2 = result.log.records[-1].err_l2
        record.err_linf = result.log.records[-1].err_linf
    return record, result, geometry


def _metadata(plan, problem):
    # strings, so that a report read back from CSV compares equal
    meta = {"problem": plan.problem}
    meta.update((k, repr(v)) for k, v in sorted(problem.params.items()))
    meta.update(mesh=plan.mesh_family, tau=repr(plan.tau), stop_tol=repr(plan.stop_tol))
    if plan.gamma is not None:
        meta["gamma"] = repr(plan.gamma)
    return meta


def run_study(plan, on_level=None):
    """Solve ``plan.problem`` on every mesh size and collect errors and rates.

    A failing level is recorded (``status="failed"``) and the study moves on.
    With ``plan.out_dir`` set, ``report.csv`` and per-level iteration
    histories are written there.
    """
    problem = get_problem(plan.problem, **plan.params)
    out = Path(plan.out_dir) if plan.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = RunReport(metadata=_metadata(plan, problem))
    for h in plan.h_values:
        try:
            mesh = build_mesh(plan.mesh_family, h)
            record, result, geometry = solve_level(problem, mesh, plan.splitting_config(h))
            record.h = h
            if out is not None:
                tag = _format_h(h).replace("/", "_")
                result.log.write_csv(out / f"history_h{tag}.csv")
                if plan.write_fields:
                    write_field(out / f"field_h{tag}.csv", mesh, result.u, result.w)
        except (SolverError, ConvergenceError, MeshError, ValueError, np.linalg.LinAlgError) as exc:
            record = LevelRecord(h=h, status="failed", error=" ".join(str(exc).split()))
        report.levels.append(record)
        if on_level is not None:
            on_level(record)
    report.fill_rates()
    if out is not None:
        report.write_csv(out / "report.csv")
    return report


def _node_count(family, n):
    if family == "regular":
        return (n + 1) ** 2
    if family == "disk":
        return 1 + 3 * n * (n + 1)
    # eye: two cusp nodes plus m + 1 nodes per inner column
    x1 = np.arange(1, n) / n
    m = np.maximum(2, np.round(2 * x1 * (1 - x1) * n).astype(int))
    return 2 + int(np.sum(m + 1))


def infer_h(family, n_nodes, max_n=4096):
    """Nominal ``h`` of the generated mesh with ``n_nodes`` nodes."""
    if family not in MESH_FAMILIES:
        raise ValueError(f"cannot infer h for mesh {family!r}; pass --h")
    lo = 4 if family == "eye" else 2
    for n in range(lo, max_n + 1):
        count = _node_count(family, n)
        if count == n_nodes:
            return 0.5 / n if family == "disk" else 1.0 / n
        if count > n_nodes:
            break
    raise ValueError(f"no {family} mesh has {n_nodes} nodes")


# --- cross-sections --------------------------------------------------------

def parse_line(text):
    """``"x2=0.5"``, ``"x1=0.25"`` or ``"x1=x2"`` -> ``(point, direction)``."""
    t = text.replace(" ", "").lower()
    if t in ("x1=x2", "x2=x1"):
        return np.array([0.0, 0.0]), np.array([1.0, 1.0])
    lhs, _, rhs = t.partition("=")
    try:
        c = float(Fraction(rhs))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse line {text!r}") from None
    if lhs == "x2":
        return np.array([0.0, c]), np.array([1.0, 0.0])
    if lhs == "x1":
        return np.array([c, 0.0]), np.array([0.0, 1.0])
    raise ValueError(f"cannot parse line {text!r}")


def _line_interval(mesh, point, direction, tol=1e-12):
    """Parameter range of the line inside the mesh (Cyrus-Beck per triangle)."""
    p = mesh.nodes[mesh.triangles]
    lo = np.full(len(p), -np.inf)
    hi = np.full(len(p), np.inf)
    ok = np.ones(len(p), bool)
    scale = np.sqrt(np.abs(triangle_areas(mesh.nodes, mesh.triangles)))
    for a in range(3):
        e = p[:, (a + 1) % 3] - p[:, a]
        r = point - p[:, a]
        num = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
        den = e[:, 0] * direction[1] - e[:, 1] * direction[0]
        tiny = np.abs(den) <= tol * scale
        ok &= ~tiny | (num >= -tol * scale**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -num / den
        lo = np.where(~tiny & (den > 0), np.maximum(lo, t), lo)
        hi = np.where(~tiny & (den < 0), np.minimum(hi, t), hi)
    ok &= lo <= hi + tol
    if not ok.any():
        return None
    return float(lo[ok].min()), float(hi[ok].max())


def _locate(mesh, pts, tol=1e-10):
    """Containing triangle and barycentric weights for each point (or -1)."""
    p = mesh.nodes[mesh.triangles]
    v0 = p[:, 0]
    e1 = p[:, 1] - v0
    e2 = p[:, 2] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tri = np.full(len(pts), -1)
    bary = np.zeros((len(pts), 3))
    for i, x in enumerate(pts):
        r = x - v0
        l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
        l0 = 1.0 - l1 - l2
        worst = np.minimum(np.minimum(l0, l1), l2)
        k = int(np.argmax(worst))
        if worst[k] >= -tol:
            tri[i] = k
            bary[i] = (l0[k], l1[k], l2[k])
    return tri, bary


def cross_section(u, mesh, line, n_samples=101):
    """Sample the P1 field ``u`` at equispaced points along a line.

    Parameters
    ----------
    u : (N,) array
    mesh : Triangulation
    line : str or (point, direction)
        Strings as accepted by :func:`parse_line`.
    n_samples : int

    Returns
    -------
    (M, 2) array of ``(arc_length, value)``; arc length is measured from the
    point where the line enters the mesh.  Points outside the mesh are
    dropped; an empty array means the line misses the domain.
    """
    if isinstance(line, str):
        line = parse_line(line)
    point, direction = (np.asarray(v, float) for v in line)
    direction = direction / np.hypot(*direction)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    interval = _line_interval(mesh, point, direction)
    if interval is None:
        import warnings

        warnings.warn("line does not intersect the mesh", RuntimeWarning, stacklevel=2)
        return np.empty((0, 2))
    t0, t1 = interval
    s = np.linspace(0.0, t1 - t0, n_samples)
    pts = point + (t0 + s)[:, None] * direction
    tri, bary = _locate(mesh, pts)
    inside = tri >= 0
    vals = np.einsum("ij,ij->i", bary[inside], np.asarray(u)[mesh.triangles[tri[inside]]])
    return np.column_stack([s[inside], vals])


# --- field files -----------------------------------------------------------

def write_field(path, mesh, u, w=None):
    """CSV ``node_index, x, y, u, w`` in mesh order."""
    w = u if w is None else w
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index", "x", "y", "u", "w"])
        for k, ((x, y), uk, wk) in enumerate(zip(mesh.nodes, u, w)):
            writer.writerow([k, repr(float(x)), repr(float(y)), repr(float(uk)), repr(float(wk))])


def read_field(path):
    """Returns ``(xy, u, w)`` ordered by node index."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"node_index", "x", "y", "u", "w"} <= set(rows[0]):
        raise ValueError(f"{path}: not a field dump (need node_index, x, y, u, w)")
    rows.sort(key=lambda r: int(r["node_index"]))
    xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    u = np.array([float(r["u"]) for r in rows])
    w = np.array([float(r["w"]) for r in rows])
    return xy, u, w


# --- command line ----------------------------------------------------------

def _read_config(path):
    values = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{no}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _mesh_arg(text):
    if text in MESH_FAMILIES or text.startswith("file:"):
        return text
    raise argparse.ArgumentTypeError(f"mesh must be one of {MESH_FAMILIES} or file:PATH")


def _h_list(text):
    try:
        return [parse_h(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_solver_flags(p, multi_h):
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--problem", choices=problem_names())
    p.add_argument("--mesh", type=_mesh_arg, help="regular | disk | eye | file:PATH")
    p.add_argument("--h", type=_h_list, help="mesh sizes, e.g. 1/20,1/40" if multi_h else "mesh size, e.g. 1/80")
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--L", dest="L", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps-scale", dest="eps_scale", type=float,
                   help="Tikhonov epsilon = scale * h^2 on non-regular meshes")
    p.add_argument("--out", help="output directory")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="opsplit", description="Operator-splitting solvers for nonlinear elliptic problems."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_solver_flags(sub.add_parser("solve", help="solve one problem on one mesh"), False)
    _add_solver_flags(sub.add_parser("study", help="mesh-refinement convergence study"), True)
    sec = sub.add_parser("section", help="cross-section of a field dump")
    sec.add_argument("--in", dest="infile", required=True)
    sec.add_argument("--mesh", type=_mesh_arg, required=True)
    sec.add_argument("--h", type=_h_list, help="mesh size; inferred from the node count if omitted")
    sec.add_argument("--line", required=True, help='"x2=0.5", "x1=0.5" or "x1=x2"')
    sec.add_argument("--samples", type=int, default=101)
    sec.add_argument("--out", help="output CSV (default: stdout)")
    sub.add_parser("list-problems", help="print registered problem names")
    return parser


_CONFIG_TYPES = {
    "problem": str, "mesh": _mesh_arg, "h": _h_list, "tau": float, "gamma": float,
    "tol": float, "max_iter": int, "alpha": float, "beta": float, "L": float,
    "delta": float, "eps_scale": float, "out": str,
}


def _merge_config(parser, args):
    if not getattr(args, "config", None):
        return args
    try:
        values = _read_config(args.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    except ValueError as exc:
        parser.error(str(exc))
    for key, raw in values.items():
        if key not in _CONFIG_TYPES:
            parser.error(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            try:
                setattr(args, key, _CONFIG_TYPES[key](raw))
            except (ValueError, argparse.ArgumentTypeError) as exc:
                parser.error(f"config key {key}: {exc}")
    return args


def _plan_from_args(parser, args):
    if args.problem is None or args.problem not in problem_names():
        parser.error(f"--problem is required; choose from {', '.join(problem_names())}")
    if args.mesh is None or not args.h:
        parser.error("--mesh and --h are required")
    params = {"alpha": args.alpha, "beta": args.beta, "L": args.L, "delta": args.delta}
    try:
        get_problem(args.problem, **params)
    except (ValueError, KeyError) as exc:
        parser.error(str(exc))
    kwargs = {k: v for k, v in dict(
        tau=args.tau, gamma=args.gamma, stop_tol=args.tol, max_iterations=args.max_iter,
        epsilon_scale=args.eps_scale,
    ).items() if v is not None}
    try:
        return StudyPlan(
            args.problem,
            params={k: v for k, v in params.items() if v is not None},
            mesh_family=args.mesh,
            h_values=args.h,
            out_dir=args.out,
            **kwargs,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _prepare_out(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write-test"
    probe.write_text("")
    probe.unlink()
    return path


def _cmd_solve(plan, stdout):
    if len(plan.h_values) != 1:
        raise ValueError("solve takes a single --h value; use study for several")
    h = plan.h_values[0]
    out = _prepare_out(plan.out_dir or ".")
    problem = get_problem(plan.problem, **plan.params)
    mesh = build_mesh(plan.mesh_family, h)
    record, result, _ = solve_level(problem, mesh, plan.splitting_config(h))
    record.h = h
    report = RunReport([record], _metadata(plan, problem))
    write_field(out / "field.csv", mesh, result.u, result.w)
    result.log.write_csv(out / "history.csv")
    report.write_csv(out / "report.csv")
    print(report.format_table(), file=stdout)
    return 0 if record.status == "converged" else 1


def _cmd_study(plan, stdout):
    _prepare_out(plan.out_dir or ".")
    if plan.out_dir is None:
        plan.out_dir = "."
    report = run_study(plan)
    print(report.format_table(), file=stdout)
    return 0 if all(lv.status == "converged" for lv in report.levels) else 1


def _cmd_section(args, stdout):
    xy, u, _ = read_field(args.infile)
    h = args.h[0] if args.h else infer_h(args.mesh, len(xy))
    mesh = build_mesh(args.mesh, h)
    if xy.shape != mesh.nodes.shape or not np.allclose(xy, mesh.nodes, atol=1e-12):
        raise ValueError("field dump does not match the requested mesh")
    data = cross_section(u, mesh, args.line, args.samples)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["s", "value"])
    for s, v in data:
        writer.writerow([repr(float(s)), repr(float(v))])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        stdout.write(buf.getvalue())
    return 0


def cli(argv=None, stdout=None):
    """Entry point; returns the process exit status."""
    stdout = stdout or sys.stdout
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-problems":
        for name in problem_names():
            print(name, file=stdout)
        return 0
    try:
        if args.command == "section":
            return _cmd_section(args, stdout)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        args = _merge_config(sub, args)
        plan = _plan_from_args(sub, args)
        if args.command == "solve":
            return _cmd_solve(plan, stdout)
        return _cmd_study(plan, stdout)
    except OSError as exc:
        print(f"opsplit: error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, ConvergenceError, MeshError, ValueError) as exc:
        print(f"opsplit: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())
