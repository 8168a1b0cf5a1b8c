"""Mesh-refinement tables for two smooth problems on the regular square mesh.

Both columns should shrink by about 4x per halving of h (second order).
Run: python3 demos/convergence_table.py
"""
from opsplit import StudyPlan, run_study

for name, params in [("semilinear-cos", {"L": 0.5}), ("ma-exp", {})]:
    plan = StudyPlan(name, params, "regular", [1 / 10, 1 / 20, 1 / 40, 1 / 80])
    report = run_study(plan)
    print(f"\n{name} {params or ''}")
    print(report.format_table())

# gamma defaults to the smallest Dirichlet eigenvalue of the mesh
print(f"\ngamma used at h=1/80: {report.levels[-1].gamma:.4f}")
