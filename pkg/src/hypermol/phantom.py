"""Gaussian-blob hyper-object phantoms with closed-form transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypervolume import HyperVolumeCoeffs, ShellGrid, grid_axis
from .parambasis import ParamBasisSpec, eval_param_basis, gauss_legendre_01
from .sphharm import Rotation, project_to_sh_array, sphere_quadrature

MASS_FACTOR_3D = (2.0 * np.pi) ** 1.5


@dataclass(frozen=True)
class GaussianBlobPhantom:
    """Isotropic Gaussian blobs whose centers are cubic polynomials in ``t``.

    Attributes
    ----------
    amplitudes : (J,) peak densities, > 0
    sigmas : (J,) standard deviations in box units, > 0
    trajectories : (J, 4, 3) center polynomial coefficients, ``c_j(t) = sum_d traj[j, d] t^d``
    """

    amplitudes: np.ndarray
    sigmas: np.ndarray
    trajectories: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        sig = np.asarray(self.sigmas, dtype=float).reshape(-1)
        traj = np.asarray(self.trajectories, dtype=float)
        if traj.ndim == 2:
            traj = traj[:, None, :]
        if traj.shape[1] < 4:
            traj = np.concatenate([traj, np.zeros((traj.shape[0], 4 - traj.shape[1], 3))], axis=1)
        if not (len(amps) == len(sig) == traj.shape[0]) or traj.shape[1:] != (4, 3):
            raise ValueError("inconsistent blob table")
        if np.any(amps <= 0) or np.any(sig <= 0):
            raise ValueError("amplitudes and sigmas must be positive")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "trajectories", traj)

    @property
    def n_blobs(self) -> int:
        return len(self.amplitudes)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.amplitudes * MASS_FACTOR_3D * self.sigmas**3))

    def centers(self, t) -> np.ndarray:
        """Blob centers at ``t``, shape ``t.shape + (J, 3)``."""
        t = np.asarray(t, dtype=float)
        powers = t[..., None] ** np.arange(4)
        return np.einsum("...d,jdc->...jc", powers, self.trajectories)

    def max_radius(self, samples: int = 101) -> float:
        return float(np.linalg.norm(self.centers(np.linspace(0, 1, samples)), axis=-1).max())

    def is_static(self) -> bool:
        return bool(np.all(self.trajectories[:, 1:] == 0))

    def density(self, points: np.ndarray, t: float) -> np.ndarray:
        """Real-space density at ``points`` (..., 3)."""
        c = self.centers(t)
        d2 = np.sum((points[..., None, :] - c) ** 2, axis=-1)
        return np.sum(self.amplitudes * np.exp(-d2 / (2 * self.sigmas**2)), axis=-1)


def phantom_ft(ph: GaussianBlobPhantom, t, omega) -> np.ndarray:
    """Fourier transform ``sum_j a_j (2pi)^1.5 s_j^3 exp(-s_j^2 |w|^2 / 2 - i <w, c_j(t)>)``.

    ``omega`` has shape ``(..., 3)``; ``t`` must broadcast against ``omega[..., 0]``.
    """
    omega = np.asarray(omega, dtype=float)
    c = ph.centers(t)
    w2 = np.sum(omega**2, axis=-1)[..., None]
    mass = ph.amplitudes * MASS_FACTOR_3D * ph.sigmas**3
    phase = np.einsum("...c,...jc->...j", omega, np.broadcast_to(c, omega.shape[:-1] + c.shape[-2:]))
    return np.sum(mass * np.exp(-0.5 * ph.sigmas**2 * w2 - 1j * phase), axis=-1)


def phantom_projection_image(ph: GaussianBlobPhantom, rot: Rotation, t: float, N: int, pixel_size: float | None = None) -> np.ndarray:
    """Line integrals of ``rot o V[t]`` along x3, sampled at pixel centers.

    ``image[a, b]`` is the value at ``(x1, x2) = (x[a], x[b])``.
    """
    pixel_size = 1.0 / N if pixel_size is None else pixel_size
    x = grid_axis(N, pixel_size)
    centers = ph.centers(t) @ rot.matrix().T  # rotated centers R c_j
    img = np.zeros((N, N))
    for a, s, c in zip(ph.amplitudes, ph.sigmas, centers):
        g1 = np.exp(-((x - c[0]) ** 2) / (2 * s * s))
        g2 = np.exp(-((x - c[1]) ** 2) / (2 * s * s))
        img += a * np.sqrt(2 * np.pi) * s * np.outer(g1, g2)
    return img


def shell_fit_band(grid: ShellGrid, k: int, radius: float) -> int:
    return int(grid.p[k - 1] + np.ceil(grid.radii[k - 1] * radius) + 12)


def phantom_shells_at(ph: GaussianBlobPhantom, grid: ShellGrid, t) -> tuple[np.ndarray, np.ndarray]:
    """Exact shell projections of instances at ``t`` (array): coefficients and zero frequency."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    radius = ph.max_radius()
    out = np.zeros((len(t), grid.size), dtype=complex)
    for k in range(1, grid.K + 1):
        L_fit = shell_fit_band(grid, k, radius)
        th, ph_, _ = sphere_quadrature(L_fit)
        u = np.stack([np.sin(th) * np.cos(ph_), np.sin(th) * np.sin(ph_), np.cos(th)], axis=-1)
        omega = grid.radii[k - 1] * u
        vals = np.stack([phantom_ft(ph, ti, omega) for ti in t])
        out[:, grid.shell_slice(k)] = project_to_sh_array(vals, grid.p[k - 1], L_fit)
    dc = np.array([phantom_ft(ph, ti, np.zeros(3)).real for ti in t])
    return out, dc


def phantom_to_hypervolume(ph: GaussianBlobPhantom, grid: ShellGrid, basis: ParamBasisSpec, n_t: int | None = None) -> HyperVolumeCoeffs:
    """Least-squares fit of the phantom in the tensor basis (L2 over shells and t)."""
    n_t = basis.Q + 24 if n_t is None else n_t
    if ph.is_static():
        nodes, weights = np.array([0.5]), np.array([1.0])
    else:
        nodes, weights = gauss_legendre_01(n_t)
    coeffs, dc = phantom_shells_at(ph, grid, nodes)
    P = eval_param_basis(basis, nodes)
    gram = P.T @ (weights[:, None] * P)
    rhs = P.T @ (weights[:, None] * coeffs)
    rhs_dc = P.T @ (weights * dc)
    if ph.is_static():
        data = np.zeros((basis.Q + 1, grid.size), dtype=complex)
        data[0] = coeffs[0] / P[0, 0]
        dcs = np.zeros(basis.Q + 1)
        dcs[0] = dc[0] / P[0, 0]
        return HyperVolumeCoeffs(grid, basis, data, dcs)
    return HyperVolumeCoeffs(grid, basis, np.linalg.solve(gram, rhs), np.linalg.solve(gram, rhs_dc))


# ---------------------------------------------------------------------------
# presets


def _cat_table(motion: float = 1.0) -> GaussianBlobPhantom:
    """A cat that uncurls: compact at ``t = 0``, stretched out at ``t = 1``.

    Head, ears, tail and legs move outward from the body along gently bowed
    paths, so the extent of every projection changes with ``t`` whatever the
    viewing direction.  ``motion`` scales every displacement.
    """
    rows = [
        # amplitude, sigma, curled center, stretched center, bow (mid-path offset)
        (0.6, 0.050, (0.00, 0.00, 0.00), (0.00, 0.00, 0.00), (0, 0, 0)),  # body
        (1.0, 0.060, (-0.05, 0.02, 0.02), (-0.25, 0.00, 0.06), (0, 0, 0.03)),  # head
        (1.0, 0.040, (-0.06, 0.05, 0.05), (-0.27, 0.06, 0.17), (0, 0, 0.03)),  # left ear
        (1.0, 0.040, (-0.06, -0.02, 0.06), (-0.27, -0.06, 0.17), (0, 0, 0.03)),  # right ear
        (1.0, 0.050, (0.05, -0.03, 0.01), (0.27, 0.00, 0.10), (0, 0.04, 0)),  # tail
        (1.0, 0.045, (-0.03, 0.04, -0.04), (-0.15, 0.09, -0.21), (0, 0, 0)),  # front legs
        (1.0, 0.045, (-0.03, -0.04, -0.04), (-0.15, -0.09, -0.21), (0, 0, 0)),
        (1.0, 0.045, (0.04, 0.04, -0.04), (0.15, 0.09, -0.21), (0, 0, 0)),  # hind legs
        (1.0, 0.045, (0.04, -0.04, -0.04), (0.15, -0.09, -0.21), (0, 0, 0)),
    ]
    amps = np.array([r[0] for r in rows])
    sig = np.array([r[1] for r in rows])
    traj = np.zeros((len(rows), 4, 3))
    for j, (_, _, c0, c1, bow) in enumerate(rows):
        c0, c1, bow = np.array(c0), np.array(c1), np.array(bow)
        # c(t) = c0 + motion * ((c1 - c0) t + 4 bow t (1 - t))
        traj[j, 0] = c0
        traj[j, 1] = motion * (c1 - c0 + 4 * bow)
        traj[j, 2] = -4 * motion * bow
    return GaussianBlobPhantom(amps, sig, traj)


PRESETS = {
    "cat": _cat_table,
    "blob": lambda: GaussianBlobPhantom([1.0], [0.08], np.zeros((1, 4, 3))),
}


def load_preset(name: str) -> GaussianBlobPhantom:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown phantom preset {name!r}; choose from {sorted(PRESETS)}") from None
