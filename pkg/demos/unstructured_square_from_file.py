"""Solve on an unstructured mesh read from the native text format.

The mesh is a Delaunay triangulation of jittered grid points, written to a
temporary file and read back, the same path a mesh from an external
generator would take.
"""
import tempfile
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from opsplit import HessianConfig, SplittingConfig, compute_node_geometry, get_problem, load_mesh, run


def jittered_square(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, n + 1)
    x, y = np.meshgrid(t, t)
    pts = np.column_stack([x.ravel(), y.ravel()])
    on_edge = (np.isclose(pts, 0) | np.isclose(pts, 1)).any(axis=1)
    pts[~on_edge] += rng.uniform(-0.25, 0.25, (np.sum(~on_edge), 2)) / n
    return pts, on_edge, Delaunay(pts).simplices


def write_native(path, pts, flags, tris):
    with open(path, "w") as fh:
        fh.write("# jittered Delaunay mesh of the unit square\n")
        fh.write(f"{len(pts)} {len(tris)}\n")
        for (x, y), f in zip(pts, flags):
            fh.write(f"{float(x)!r} {float(y)!r} {int(f)}\n")
        for i, j, k in tris:
            fh.write(f"{i} {j} {k}\n")


problem = get_problem("ma-exp")
with tempfile.TemporaryDirectory() as tmp:
    for n in (10, 20, 40):
        path = Path(tmp) / f"square{n}.txt"
        write_native(path, *jittered_square(n))
        mesh = load_mesh(path)
        geo = compute_node_geometry(mesh)
        cfg = SplittingConfig(hessian=HessianConfig.unstructured(1 / n))
        res = run(problem, mesh, geo, cfg)
        last = res.log.records[-1]
        print(f"n={n:3d}  nodes={mesh.n_total:5d}  iterations={res.log.iterations:3d}  "
              f"L2={last.err_l2:.3e}  Linf={last.err_linf:.3e}")
