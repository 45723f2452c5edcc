"""Fast built-in property checks behind ``hypermol selftest``."""

from __future__ import annotations

import numpy as np

from .formats import decode_volume, encode_volume
from .hypervolume import HyperVolumeCoeffs, ShellGrid
from .imaging import project_circle_coeffs
from .parambasis import BasisKind, ParamBasisSpec, eval_param_basis, gauss_legendre_01
from .reconstruct import objective_and_gradient
from .sphharm import Rotation, rotate_sh_array, sph_harm_table, sphere_quadrature, wigner_D


def _random_hv(rng, grid, basis) -> HyperVolumeCoeffs:
    data = rng.standard_normal((basis.Q + 1, grid.size)) + 1j * rng.standard_normal((basis.Q + 1, grid.size))
    return HyperVolumeCoeffs(grid, basis, data, rng.standard_normal(basis.Q + 1))


def run_selftest(seed: int = 0) -> list[str]:
    """Run every check; returns descriptions of the failures (empty when all pass)."""
    rng = np.random.default_rng(seed)
    failures = []

    def check(name, ok):
        if not ok:
            failures.append(name)

    L = 6
    th, ph, w = sphere_quadrature(L)
    Y = sph_harm_table(L, th, ph)
    gram = Y.conj().T @ (w[:, None] * Y)
    check("spherical harmonics orthonormal", np.allclose(gram, np.eye(len(gram)), atol=1e-12))

    rot = Rotation.random(rng)
    D = wigner_D(4, rot).matrix
    check("Wigner block unitary", np.allclose(D @ D.conj().T, np.eye(9), atol=1e-12))

    coeffs = rng.standard_normal((L + 1) ** 2) + 0j
    back = rotate_sh_array(rotate_sh_array(coeffs, L, *rot.angles), L, *rot.inverse().angles)
    check("rotation round trip", np.allclose(back, coeffs, atol=1e-12))

    nodes, wts = gauss_legendre_01(16)
    P = eval_param_basis(ParamBasisSpec(BasisKind.LEGENDRE, 3), nodes)
    check("Legendre basis orthonormal", np.allclose(P.T @ (wts[:, None] * P), np.eye(4), atol=1e-12))

    grid = ShellGrid.make(4, 2.0)
    basis = ParamBasisSpec(BasisKind.LEGENDRE, 2)
    hv = _random_hv(rng, grid, basis)
    check("HVVOL1 round trip", encode_volume(decode_volume(encode_volume(hv))) == encode_volume(hv))

    img = project_circle_coeffs(hv, rot, 0.3)
    cost, grad = objective_and_gradient(hv, img, rot, 0.3)
    check("self-consistent image has zero cost", cost < 1e-20 and np.abs(grad).max() < 1e-10)

    other = _random_hv(rng, grid, basis)
    c0, g = objective_and_gradient(other, img, rot, 0.3)
    i = int(rng.integers(grid.size))
    eps = 1e-6
    bumped = other.copy()
    bumped.data[0, i] += eps
    c1, _ = objective_and_gradient(bumped, img, rot, 0.3)
    bumped.data[0, i] -= 2 * eps
    c2, _ = objective_and_gradient(bumped, img, rot, 0.3)
    fd = (c1 - c2) / (2 * eps)
    check("gradient matches finite difference", abs(fd - g[i].real) <= 1e-5 * max(1.0, abs(fd)))
    return failures
