"""Monge-Ampere on the two curved domains.

On the disk the exact solution has an unbounded gradient at the boundary, so
the rates drop below 2.  On the eye-shaped domain f = 1, g = 0 has no
classical solution; the computed minimum settles near -0.054.
Curved meshes use boundary repair and Tikhonov smoothing with eps = h^2.
"""
from opsplit import StudyPlan, run_study

disk = run_study(StudyPlan("ma-singular", mesh_family="disk", h_values=[1 / 20, 1 / 40, 1 / 80]))
print("ma-singular, half-unit disk")
print(disk.format_table())

eye = run_study(StudyPlan("ma-no-classical", mesh_family="eye", h_values=[1 / 10, 1 / 20, 1 / 40, 1 / 80]))
print("\nma-no-classical, eye-shaped domain")
print(eye.format_table())
