"""Oracle-assignment recovery: least squares with the true labels, per-shell error.

Usage::

    python scripts/known_assignments.py [--images 2000 8000] [--Q 3]

For each image count, fits the hyper-volume from noiseless projections of
the "cat" preset at their true (rotation, t) and prints the per-shell
relative error against the truth-fitted coefficients.  A control run uses
circles generated by the truth-fitted model itself, which isolates solver
accuracy from the phantom's content beyond degree ``Q`` in ``t``.
"""

import argparse

import numpy as np

from hypermol.hypervolume import ShellGrid, instance_at
from hypermol.imaging import CircleStack, polar_fourier_batch, project_circles_batch
from hypermol.parambasis import BasisKind, ParamBasisSpec
from hypermol.phantom import load_preset, phantom_projection_image, phantom_to_hypervolume
from hypermol.reconstruct import solve_known_assignments
from hypermol.sphharm import Rotation, random_euler


def per_shell_error(rec, truth, grid):
    return np.array([np.linalg.norm(rec.data[:, grid.shell_slice(k)] - truth.data[:, grid.shell_slice(k)]) / np.linalg.norm(truth.data[:, grid.shell_slice(k)]) for k in range(1, grid.K + 1)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, nargs="+", default=[2000])
    ap.add_argument("--Q", type=int, default=3)
    ap.add_argument("--N", type=int, default=33)
    args = ap.parse_args()
    cat = load_preset("cat")
    grid = ShellGrid.make(12, 2.5)
    basis = ParamBasisSpec(BasisKind.LEGENDRE, args.Q)
    truth = phantom_to_hypervolume(cat, grid, basis)
    np.set_printoptions(precision=1, linewidth=200)
    for n in args.images:
        rng = np.random.default_rng(4)
        eul = random_euler(rng, n)
        ts = rng.uniform(size=n)
        imgs = np.array([phantom_projection_image(cat, Rotation(*e), t, args.N) for e, t in zip(eul, ts)])
        rec = solve_known_assignments(polar_fourier_batch(imgs, grid, 1 / args.N), eul, ts, grid, basis, ridge=1e-8)
        print(f"{n} images, phantom data:      {per_shell_error(rec, truth, grid)}", flush=True)
        flat = grid.circles_from_padded(project_circles_batch(truth, eul, ts))
        model = CircleStack(grid, flat, np.array([instance_at(truth, t).dc for t in ts]))
        rec = solve_known_assignments(model, eul, ts, grid, basis, ridge=1e-8)
        print(f"{n} images, model-consistent:  {per_shell_error(rec, truth, grid)}", flush=True)


if __name__ == "__main__":
    main()
