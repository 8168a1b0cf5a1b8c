"""Pucci problem with smoothed indicator boundary data.

The solution along x1 = 1/2 rises with alpha: a larger alpha weights the
largest Hessian eigenvalue more, which pushes the profile up.
"""
import numpy as np

from opsplit import compute_node_geometry, cross_section, generate_regular_square, get_problem, run

mesh = generate_regular_square(40)
geo = compute_node_geometry(mesh)

profiles = {}
for alpha in (1.1, 2.0, 3.0):
    res = run(get_problem("pucci-indicator", alpha=alpha), mesh, geo)
    profiles[alpha] = cross_section(res.u, mesh, "x1=0.5", 11)
    print(f"alpha={alpha}: {res.log.status} after {res.log.iterations} iterations")

s = profiles[1.1][:, 0]
print("\n   x2  " + "  ".join(f"a={a:<4}" for a in profiles))
for i, si in enumerate(s):
    print(f"{si:5.2f}  " + "  ".join(f"{profiles[a][i, 1]:6.3f}" for a in profiles))

assert np.all(profiles[2.0][:, 1] >= profiles[1.1][:, 1] - 1e-3)
