"""Holonomy of a small square of connections against the Coulomb curvature.

Run:  python demos/holonomy_square.py   (about 20 seconds)
"""
import numpy as np

from coulomb_lab import ConnectionState, build_grid, certify_horizontal, curvature_holonomy_study, flat_metric
from coulomb_lab import horizontal_project
from coulomb_lab.studies import random_conductor, random_modes

grid = build_grid(flat_metric(), 12, 13)
A = ConnectionState.flat(grid, tol=1e-12)
rng = np.random.default_rng(0)
pair = []
for _ in range(2):
    h = horizontal_project(A, random_conductor(grid, random_modes(rng, 9), 1), tol=1e-12).form
    pair.append(certify_horizontal(A, h * (1.0 / h.sup())))

study = curvature_holonomy_study(A, *pair, eps_list=(0.2, 0.1, 0.05), steps=16)
for e, err in zip(study.eps, study.coeff_error):
    print(f"eps = {e:5.3f}   relative discrepancy {err:.3e}")
print(f"fitted order {study.order:.3f}; sup |R| = {study.curvature_norm:.3e}")
