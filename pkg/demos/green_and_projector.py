"""Solve a Dirichlet problem on the warped slab and split a 1-form.

Run:  python demos/green_and_projector.py
"""
import numpy as np

from coulomb_lab import ConnectionState, FormField, build_grid, horizontal_project, warped_metric
from coulomb_lab.forms import covariant_d0_adjoint, inner0
from coulomb_lab.solver import green_arrays
from coulomb_lab.studies import random_conductor, random_modes

grid = build_grid(warped_metric((0.0, 1.0)), 16, 17)
print(f"grid {grid.shape}, h_lat = {grid.h_lat:.4f}, h_norm = {grid.h_norm:.4f}")

# a small random connection
rng = np.random.default_rng(1)
eta = random_conductor(grid, random_modes(rng, 9), 1)
A = ConnectionState(grid, 0.3 * eta.data / eta.sup(), tol=1e-11)

f = random_conductor(grid, random_modes(rng, 3), 0).data
u, rep = green_arrays(A, f, tol=1e-11)
r = A.apply(u) - f
print(f"Green solve: {rep.iterations} CG iterations, relative residual "
      f"{np.sqrt(A.inner(r, r) / A.inner(f, f)):.2e}")

omega = random_conductor(grid, random_modes(rng, 9), 1)
P = horizontal_project(A, omega, tol=1e-11).data
div = covariant_d0_adjoint(grid, A.eta_array, P)
print(f"|omega| = {omega.norm():.3f}, |P omega| = {FormField(1, P, grid).norm():.3f}, "
      f"|d*_A P omega| = {np.sqrt(inner0(grid, div, div)):.2e}")
