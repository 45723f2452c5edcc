"""Spherical harmonics, Wigner-D rotations and sphere quadrature.

Conventions
-----------
* ``Y_l^m(theta, phi)`` is orthonormal on the unit sphere and includes the
  Condon-Shortley phase ``(-1)^m`` inside ``P_l^m``.
* Coefficient vectors are flat, ``l`` outer ascending and ``m`` inner
  ascending from ``-l`` to ``l``; the index of ``(l, m)`` is ``l*l + l + m``.
* Rotations are ZYZ Euler angles, ``R = Rz(alpha) @ Ry(beta) @ Rz(gamma)``,
  acting actively on functions: ``(R o f)(x) = f(R^-1 x)``.
* ``wigner_D(l, R)[m, m'] = exp(-i m alpha) d^l_{m m'}(beta) exp(-i m' gamma)``
  and the coefficients of ``R o f`` are ``D @ v`` block by block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def sh_size(L: int) -> int:
    return (L + 1) ** 2


def sh_index(l: int, m: int) -> int:
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid (l, m) = ({l}, {m})")
    return l * l + l + m


@lru_cache(maxsize=None)
def sh_lm(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree and order of every entry of a flat coefficient vector."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    ls.setflags(write=False)
    ms.setflags(write=False)
    return ls, ms


# ---------------------------------------------------------------------------
# rotations


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(c), np.ones_like(c)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _ry(b):
    c, s = np.cos(b), np.sin(b)
    z, o = np.zeros_like(c), np.ones_like(c)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def euler_to_matrix(alpha, beta, gamma) -> np.ndarray:
    """Rotation matrices for (arrays of) ZYZ Euler angles, shape ``(..., 3, 3)``."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (alpha, beta, gamma)))
    return _rz(alpha) @ _ry(beta) @ _rz(gamma)


def matrix_to_euler(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`euler_to_matrix`; alpha, gamma in [0, 2pi), beta in [0, pi]."""
    m = np.asarray(mat, dtype=float)
    sb = np.hypot(m[..., 0, 2], m[..., 1, 2])
    beta = np.arctan2(sb, m[..., 2, 2])
    # alpha + gamma and alpha - gamma are read from the upper 2x2 block, where
    # they carry weight (1 + cos beta) and (1 - cos beta) respectively; this
    # keeps the composed angle exact as beta approaches 0 or pi.
    upper = m[..., 2, 2] >= 0
    total = np.arctan2(m[..., 1, 0] - m[..., 0, 1], m[..., 0, 0] + m[..., 1, 1])
    diff = np.arctan2(-(m[..., 1, 0] + m[..., 0, 1]), m[..., 1, 1] - m[..., 0, 0])
    regular = sb > 1e-12
    # gimbal lock: only alpha +/- gamma is defined; put everything in alpha
    alpha = np.where(regular, np.arctan2(m[..., 1, 2], m[..., 0, 2]), np.where(upper, total, diff))
    gamma = np.where(upper, total - alpha, alpha - diff)
    return np.mod(alpha, TWO_PI), beta, np.mod(gamma, TWO_PI)


def quaternion_to_matrix(quat: np.ndarray) -> np.ndarray:
    """Unit quaternions ``(w, x, y, z)`` to rotation matrices."""
    q = np.asarray(quat, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def random_euler(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` Haar-uniform rotations as an ``(n, 3)`` array of Euler angles."""
    quat = rng.standard_normal((n, 4))
    a, b, g = matrix_to_euler(quaternion_to_matrix(quat))
    return np.stack([a, b, g], axis=-1)


@dataclass(frozen=True)
class Rotation:
    """Element of SO(3) stored as ZYZ Euler angles (radians)."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "Rotation":
        a, b, g = matrix_to_euler(mat)
        return cls(float(a), float(b), float(g))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Rotation":
        return cls(*random_euler(rng, 1)[0])

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def matrix(self) -> np.ndarray:
        return euler_to_matrix(self.alpha, self.beta, self.gamma)

    def compose(self, other: "Rotation") -> "Rotation":
        """``self o other``: apply ``other`` first."""
        return Rotation.from_matrix(self.matrix() @ other.matrix())

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def inverse(self) -> "Rotation":
        return Rotation.from_matrix(self.matrix().T)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic distance on SO(3) in radians."""
        rel = self.matrix().T @ other.matrix()
        return float(np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# Legendre functions and spherical harmonics


def assoc_legendre(l: int, m: int, x: float) -> float:
    """Associated Legendre function ``P_l^m(x)`` with the Condon-Shortley phase."""
    if l < 0 or m < 0 or m > l:
        raise ValueError(f"need 0 <= m <= l, got l={l}, m={m}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [-1, 1], got {x}")
    s = np.sqrt(max(0.0, (1.0 - x) * (1.0 + x)))
    pmm = 1.0
    for i in range(1, m + 1):
        pmm *= -(2 * i - 1) * s
    if l == m:
        return float(pmm)
    pm1 = x * (2 * m + 1) * pmm
    for ll in range(m + 2, l + 1):
        pmm, pm1 = pm1, (x * (2 * ll - 1) * pm1 - (ll + m - 1) * pmm) / (ll - m)
    return float(pm1)


def normalized_legendre_table(L: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal ``sqrt((2l+1)/4pi (l-m)!/(l+m)!) P_l^m(x)`` for 0 <= m <= l <= L.

    Returns an array of shape ``x.shape + (L+1, L+1)`` indexed ``[..., l, m]``;
    entries with ``m > l`` are zero.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip((1.0 - x) * (1.0 + x), 0.0, None))
    out = np.zeros(x.shape + (L + 1, L + 1))
    out[..., 0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, L + 1):
        out[..., m, m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * out[..., m - 1, m - 1]
    for m in range(0, L):
        out[..., m + 1, m] = np.sqrt(2.0 * m + 3) * x * out[..., m, m]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1))
            out[..., l, m] = a * (x * out[..., l - 1, m] - b * out[..., l - 2, m])
    return out


def sph_harm_table(L: int, theta, phi) -> np.ndarray:
    """All ``Y_l^m(theta, phi)`` for l <= L in flat order, shape ``(..., (L+1)^2)``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    plm = normalized_legendre_table(L, np.cos(theta))
    ls, ms = sh_lm(L)
    am = np.abs(ms)
    vals = plm[..., ls, am] * np.exp(1j * am * phi[..., None])
    neg = ms < 0
    # Y_l^{-m} = (-1)^m conj(Y_l^m)
    vals[..., neg] = ((-1.0) ** am[neg]) * np.conj(vals[..., neg])
    return vals


def sph_harm(l: int, m: int, theta: float, phi: float) -> complex:
    """Normalized spherical harmonic ``Y_l^m(theta, phi)``."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"need |m| <= l, got l={l}, m={m}")
    return complex(sph_harm_table(l, theta, phi)[sh_index(l, m)])


def sh_evaluate(coeffs: np.ndarray, theta, phi) -> np.ndarray:
    """Evaluate ``sum v_lm Y_l^m`` at the given points."""
    coeffs = np.asarray(coeffs)
    L = int(round(np.sqrt(coeffs.shape[-1]))) - 1
    return sph_harm_table(L, theta, phi) @ coeffs


@lru_cache(maxsize=None)
def equator_values(L: int) -> np.ndarray:
    """``Y_l^m(pi/2, 0)`` in flat order (real; zero whenever l+m is odd)."""
    vals = sph_harm_table(L, np.pi / 2, 0.0).real.copy()
    ls, ms = sh_lm(L)
    vals[(ls + ms) % 2 == 1] = 0.0
    vals.setflags(write=False)
    return vals


# ---------------------------------------------------------------------------
# Wigner matrices


def wigner_d_batch(L: int, beta) -> list[np.ndarray]:
    """Small Wigner-d matrices ``d^l(beta)`` for l = 0..L by Risbo's recursion.

    Returns a list indexed by ``l`` of arrays shaped ``beta.shape + (2l+1, 2l+1)``
    with rows ``m`` and columns ``m'`` ascending from ``-l``.  The recursion
    couples half-integer steps, so it stays well conditioned for large ``l``.
    """
    beta = np.asarray(beta, dtype=float)
    p = np.sin(beta / 2.0)[..., None, None]
    q = np.cos(beta / 2.0)[..., None, None]
    d = np.ones(beta.shape + (1, 1))
    out = [d]
    for n in range(1, 2 * L + 1):
        i = np.arange(n, dtype=float)
        a = np.sqrt(n - i)
        b = np.sqrt(i + 1)
        dd = np.zeros(beta.shape + (n + 1, n + 1))
        dd[..., :n, :n] += (a[:, None] * a[None, :]) * q * d
        dd[..., 1:, :n] -= (b[:, None] * a[None, :]) * p * d
        dd[..., :n, 1:] += (a[:, None] * b[None, :]) * p * d
        dd[..., 1:, 1:] += (b[:, None] * b[None, :]) * q * d
        d = dd / n
        if n % 2 == 0:
            out.append(d)
    return out


@dataclass(frozen=True)
class WignerBlock:
    l: int
    matrix: np.ndarray


def wigner_D(l: int, rot: Rotation) -> WignerBlock:
    """Order-``l`` Wigner-D matrix acting on coefficients of ``Y_l^m``."""
    if l < 0:
        raise ValueError("l must be non-negative")
    d = wigner_d_batch(l, rot.beta)[l]
    m = np.arange(-l, l + 1)
    mat = np.exp(-1j * m * rot.alpha)[:, None] * d * np.exp(-1j * m * rot.gamma)[None, :]
    return WignerBlock(l, mat)


def wigner_D_batch(L: int, alpha, beta, gamma) -> list[np.ndarray]:
    """Vectorized Wigner-D blocks for arrays of Euler angles."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (alpha, beta, gamma)))
    ds = wigner_d_batch(L, beta)
    out = []
    for l, d in enumerate(ds):
        m = np.arange(-l, l + 1)
        ea = np.exp(-1j * m * alpha[..., None])
        eg = np.exp(-1j * m * gamma[..., None])
        out.append(ea[..., :, None] * d * eg[..., None, :])
    return out


@dataclass(frozen=True)
class SHCoeffs:
    """Spherical harmonic coefficients ``v_lm`` for l <= L_max, flat order."""

    L_max: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (sh_size(self.L_max),):
            raise ValueError(f"expected {sh_size(self.L_max)} coefficients, got {self.data.shape}")

    def block(self, l: int) -> np.ndarray:
        return self.data[l * l : (l + 1) ** 2]

    def evaluate(self, theta, phi) -> np.ndarray:
        return sh_evaluate(self.data, theta, phi)


def rotate_sh_array(coeffs: np.ndarray, L: int, alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotate a flat coefficient array (last axis) of band limit ``L``."""
    out = np.empty(coeffs.shape, dtype=complex)
    blocks = wigner_D_batch(L, alpha, beta, gamma)
    for l in range(L + 1):
        sl = slice(l * l, (l + 1) ** 2)
        out[..., sl] = coeffs[..., sl] @ blocks[l].T
    return out


def rotate_sh(coeffs: SHCoeffs, rot: Rotation) -> SHCoeffs:
    """Coefficients of ``rot o f`` given those of ``f``."""
    if rot.angles == (0.0, 0.0, 0.0):
        return coeffs
    return SHCoeffs(coeffs.L_max, rotate_sh_array(coeffs.data, coeffs.L_max, *rot.angles))


def restrict_equator_array(coeffs: np.ndarray, L: int) -> np.ndarray:
    """Circle coefficients ``h_m`` (m = -L..L) of the theta = pi/2 restriction."""
    ls, ms = sh_lm(L)
    weighted = coeffs * equator_values(L)
    out = np.zeros(coeffs.shape[:-1] + (2 * L + 1,), dtype=complex)
    for l in range(L + 1):
        out[..., L - l : L + l + 1] += weighted[..., l * l : (l + 1) ** 2]
    return out


def restrict_equator(coeffs: SHCoeffs) -> np.ndarray:
    """Fourier coefficients ``h_m``, ``|m| <= L_max``, of ``f(pi/2, phi)``."""
    return restrict_equator_array(coeffs.data, coeffs.L_max)


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def sphere_quadrature(L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre (in cos theta) x uniform (in phi) product rule.

    Uses ``L+1`` polar and ``2L+2`` azimuthal nodes and integrates every
    product ``Y_l^m conj(Y_l'^m')`` with ``l, l' <= L`` exactly.  Returns
    flattened ``theta``, ``phi`` and ``weights`` (polar index outer).
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    x, w = np.polynomial.legendre.leggauss(L + 1)
    nphi = 2 * L + 2
    phi = TWO_PI * np.arange(nphi) / nphi
    theta = np.arccos(x)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    wt = np.repeat(w[:, None] * (TWO_PI / nphi), nphi, axis=1)
    for arr in (th, ph, wt):
        arr.setflags(write=False)
    return th.ravel(), ph.ravel(), wt.ravel()


@lru_cache(maxsize=None)
def _analysis_matrix(L_grid: int, L: int) -> np.ndarray:
    th, ph, w = sphere_quadrature(L_grid)
    mat = np.conj(sph_harm_table(L, th, ph)) * w[:, None]
    mat.setflags(write=False)
    return mat


def project_to_sh_array(samples: np.ndarray, L: int, L_grid: int | None = None) -> np.ndarray:
    """Project samples on ``sphere_quadrature(L_grid)`` nodes onto degree <= L.

    ``samples`` may carry leading batch axes; the node axis is last.
    """
    L_grid = L if L_grid is None else L_grid
    if L_grid < L:
        raise ValueError("quadrature band limit must be >= L")
    npts = (L_grid + 1) * (2 * L_grid + 2)
    samples = np.asarray(samples)
    if samples.shape[-1] != npts:
        raise ValueError(f"expected {npts} samples for L={L_grid}, got {samples.shape[-1]}")
    return samples @ _analysis_matrix(L_grid, L)


def project_to_sh(samples: np.ndarray, L: int, L_grid: int | None = None) -> SHCoeffs:
    return SHCoeffs(L, project_to_sh_array(samples, L, L_grid))
