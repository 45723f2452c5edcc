"""Forward model, noise and polar Fourier preprocessing of images.

Image circle ``k`` has radius ``r_k`` and is expanded as
``I_hat(r_k, phi) = sum_{|m| <= p(k)} alpha[k, m] exp(i m phi)``.
The projection-slice relation ``I_hat(w) = V_hat(R^-1 w)`` makes the circle
coefficients of an image of ``R o V[t]`` the equator restriction of the
rotated shells, which is what :func:`project_circle_coeffs` computes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hypervolume import HyperVolumeCoeffs, ShellGrid, grid_axis, instance_at
from .parambasis import eval_param_basis
from .sphharm import Rotation, equator_values, wigner_D_batch


@dataclass
class ImageCircleCoeffs:
    """Circle coefficients of one image; ``data`` is flat in (k, m ascending) order."""

    grid: ShellGrid
    data: np.ndarray
    dc: float = 0.0

    def padded(self) -> np.ndarray:
        return self.grid.circles_to_padded(self.data)

    def circle(self, k: int) -> np.ndarray:
        o = self.grid.circle_offsets
        return self.data[o[k - 1] : o[k]]


@dataclass
class CircleStack:
    """Circle coefficients of many images: ``data`` is ``(count, sum(2p+1))``."""

    grid: ShellGrid
    data: np.ndarray
    dc: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex).reshape(-1, int(self.grid.circle_offsets[-1]))
        self.dc = np.asarray(self.dc, dtype=float).reshape(len(self.data))

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, i: int) -> ImageCircleCoeffs:
        return ImageCircleCoeffs(self.grid, self.data[i], float(self.dc[i]))

    def padded(self) -> np.ndarray:
        return self.grid.circles_to_padded(self.data)

    def subset(self, idx) -> "CircleStack":
        return CircleStack(self.grid, self.data[idx], self.dc[idx])

    @classmethod
    def from_images(cls, items: list[ImageCircleCoeffs]) -> "CircleStack":
        if not items:
            raise ValueError("empty circle list")
        return cls(items[0].grid, np.stack([c.data for c in items]), np.array([c.dc for c in items]))


@dataclass
class ImageStack:
    """Real pixel images plus optional simulation labels (Euler angles, t)."""

    images: np.ndarray
    pixel_size: float
    rotations: np.ndarray | None = None
    ts: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        if self.images.ndim != 3 or self.images.shape[1] != self.images.shape[2]:
            raise ValueError("images must be (count, N, N)")
        if not np.all(np.isfinite(self.images)):
            raise ValueError("non-finite pixel values")

    @property
    def count(self) -> int:
        return len(self.images)

    @property
    def N(self) -> int:
        return self.images.shape[1]


# ---------------------------------------------------------------------------
# the sparse rotate-restrict operator and its adjoint


def rotate_restrict(coeffs: np.ndarray, eulers: np.ndarray, P: int, blocks: list[np.ndarray] | None = None) -> np.ndarray:
    """Circles of rotated shells.

    ``coeffs`` is ``(B, K, (P+1)^2)`` (zero-padded shells), ``eulers`` is
    ``(B, 3)``; returns ``(B, K, 2P+1)`` with ``m = -P..P``.
    """
    if blocks is None:
        blocks = wigner_D_batch(P, eulers[:, 0], eulers[:, 1], eulers[:, 2])
    eq = equator_values(P)
    out = np.zeros(coeffs.shape[:2] + (2 * P + 1,), dtype=complex)
    for n in range(P + 1):
        sl = slice(n * n, (n + 1) ** 2)
        rot = np.einsum("bmj,bkj->bkm", blocks[n], coeffs[:, :, sl])
        out[:, :, P - n : P + n + 1] += rot * eq[sl]
    return out


def rotate_restrict_adjoint(circles: np.ndarray, eulers: np.ndarray, P: int, blocks: list[np.ndarray] | None = None) -> np.ndarray:
    """Adjoint of :func:`rotate_restrict`: ``(B, K, 2P+1)`` -> ``(B, K, (P+1)^2)``."""
    if blocks is None:
        blocks = wigner_D_batch(P, eulers[:, 0], eulers[:, 1], eulers[:, 2])
    eq = equator_values(P)
    out = np.zeros(circles.shape[:2] + ((P + 1) ** 2,), dtype=complex)
    for n in range(P + 1):
        sl = slice(n * n, (n + 1) ** 2)
        out[:, :, sl] = np.einsum("bmj,bkm->bkj", blocks[n].conj(), circles[:, :, P - n : P + n + 1] * eq[sl])
    return out


def project_circles_batch(hv: HyperVolumeCoeffs, eulers: np.ndarray, ts: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Noiseless circle coefficients ``(B, K, 2P+1)`` for many (rotation, t) pairs."""
    eulers = np.atleast_2d(np.asarray(eulers, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    padded = hv.padded()
    weights = eval_param_basis(hv.basis, ts)
    P = hv.grid.P
    out = np.empty((len(ts), hv.grid.K, 2 * P + 1), dtype=complex)
    for s in range(0, len(ts), chunk):
        inst = np.einsum("bq,qkl->bkl", weights[s : s + chunk], padded)
        out[s : s + chunk] = rotate_restrict(inst, eulers[s : s + chunk], P)
    return out


def project_circle_coeffs(hv: HyperVolumeCoeffs, rot: Rotation, t: float) -> ImageCircleCoeffs:
    """Circle coefficients of the noiseless image of ``rot o hv[t]``."""
    circles = project_circles_batch(hv, np.array([rot.angles]), np.array([t]))[0]
    return ImageCircleCoeffs(hv.grid, hv.grid.circles_from_padded(circles), float(instance_at(hv, t).dc))


# ---------------------------------------------------------------------------
# pixel images


def add_noise(stack: ImageStack, snr: float, seed) -> ImageStack:
    """White Gaussian noise with variance ``var(clean pixels) / snr``."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(np.var(stack.images) / snr)
    noisy = stack.images + sigma * rng.standard_normal(stack.images.shape)
    return ImageStack(noisy, stack.pixel_size, stack.rotations, stack.ts)


@lru_cache(maxsize=8)
def _polar_nodes(grid: ShellGrid, N: int, pixel_size: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel exponentials at all polar nodes, ``(N*N, sum(2p+2))``."""
    x = grid_axis(N, pixel_size)
    w1, w2 = [], []
    for k, p in enumerate(grid.p, start=1):
        nphi = 2 * p + 2
        phi = 2 * np.pi * np.arange(nphi) / nphi
        w1.append(grid.radii[k - 1] * np.cos(phi))
        w2.append(grid.radii[k - 1] * np.sin(phi))
    w1, w2 = np.concatenate(w1), np.concatenate(w2)
    e1 = np.exp(-1j * np.outer(x, w1))
    e2 = np.exp(-1j * np.outer(x, w2))
    mat = (e1[:, None, :] * e2[None, :, :]).reshape(N * N, -1) * pixel_size**2
    mat.setflags(write=False)
    return mat, np.concatenate([[0], np.cumsum([2 * p + 2 for p in grid.p])])


def polar_fourier_batch(images: np.ndarray, grid: ShellGrid, pixel_size: float, chunk: int = 1024) -> CircleStack:
    """Polar Fourier analysis of ``(count, N, N)`` images.

    Direct Fourier sums at ``2p(k)+2`` equispaced nodes per circle followed
    by an FFT over the angle.
    """
    images = np.asarray(images, dtype=float)
    count, N = images.shape[0], images.shape[1]
    grid.check_nyquist(pixel_size)
    mat, offs = _polar_nodes(grid, N, pixel_size)
    flat = images.reshape(count, N * N)
    out = np.empty((count, int(grid.circle_offsets[-1])), dtype=complex)
    for s in range(0, count, chunk):
        vals = flat[s : s + chunk] @ mat
        for k, p in enumerate(grid.p):
            f = np.fft.fft(vals[:, offs[k] : offs[k + 1]], axis=1) / (2 * p + 2)
            m = np.arange(-p, p + 1)
            out[s : s + chunk, grid.circle_offsets[k] : grid.circle_offsets[k + 1]] = f[:, m % (2 * p + 2)]
    dc = flat.sum(axis=1) * pixel_size**2
    return CircleStack(grid, out, dc)


def polar_fourier(image: np.ndarray, grid: ShellGrid, pixel_size: float | None = None) -> ImageCircleCoeffs:
    image = np.asarray(image, dtype=float)
    pixel_size = 1.0 / image.shape[0] if pixel_size is None else pixel_size
    return polar_fourier_batch(image[None], grid, pixel_size)[0]
