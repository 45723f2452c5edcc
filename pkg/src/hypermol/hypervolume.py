"""Hyper-volume coefficient tensors on Fourier shells.

A hyper-volume is stored as complex coefficients ``v[q, k, n, m]`` of

    V(r_k, theta, phi, t) = sum_q sum_n sum_m v[q,k,n,m] P_q(t) Y_n^m(theta, phi)

plus one real zero-frequency value per ``q``.  Shell ``k`` (1-based) has
radius ``k * delta_omega`` and angular band limit ``p(k)``.  The Fourier
convention is ``F(w) = int f(x) exp(-i <w, x>) dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .parambasis import ParamBasisSpec, eval_param_basis
from .sphharm import sh_evaluate, sph_harm_table, sphere_quadrature


def default_band_schedule(K: int, L_max: int) -> tuple[int, ...]:
    """``p(k) = min(k + 1, L_max)`` for k = 1..K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return tuple(min(k + 1, L_max) for k in range(1, K + 1))


@dataclass(frozen=True)
class ShellGrid:
    """Concentric Fourier shells ``r_k = k * delta_omega``, k = 1..K."""

    K: int
    delta_omega: float
    p: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(int(x) for x in self.p))
        if self.K < 1 or len(self.p) != self.K:
            raise ValueError(f"band table has {len(self.p)} entries for K={self.K}")
        if any(b < a for a, b in zip(self.p, self.p[1:])) or min(self.p) < 0:
            raise ValueError("band limits must be non-negative and non-decreasing")
        if not self.delta_omega > 0:
            raise ValueError("delta_omega must be positive")

    @classmethod
    def make(cls, K: int, delta_omega: float, L_max: int = 64) -> "ShellGrid":
        return cls(K, float(delta_omega), default_band_schedule(K, L_max))

    def check_nyquist(self, pixel_size: float) -> None:
        if self.K * self.delta_omega > np.pi / pixel_size * (1 + 1e-12):
            raise ValueError("outermost shell beyond the image Nyquist frequency")

    @property
    def P(self) -> int:
        return self.p[-1]

    @cached_property
    def radii(self) -> np.ndarray:
        return self.delta_omega * np.arange(1, self.K + 1)

    @cached_property
    def shell_sizes(self) -> np.ndarray:
        return np.array([(b + 1) ** 2 for b in self.p])

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.shell_sizes)])

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def shell_slice(self, k: int) -> slice:
        """Slice of shell ``k`` (1-based) in a per-q coefficient row."""
        return slice(int(self.offsets[k - 1]), int(self.offsets[k]))

    @cached_property
    def circle_sizes(self) -> np.ndarray:
        return np.array([2 * b + 1 for b in self.p])

    @cached_property
    def circle_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.circle_sizes)])

    @cached_property
    def padded_index(self) -> tuple[np.ndarray, np.ndarray]:
        """(shell, lm) positions of every flat coefficient in a ``(K, (P+1)^2)`` array."""
        ks = np.concatenate([np.full(s, k) for k, s in enumerate(self.shell_sizes)])
        lm = np.concatenate([np.arange(s) for s in self.shell_sizes])
        return ks, lm

    @cached_property
    def circle_padded_index(self) -> tuple[np.ndarray, np.ndarray]:
        """(shell, m + P) positions of every flat circle coefficient."""
        ks = np.concatenate([np.full(2 * b + 1, k) for k, b in enumerate(self.p)])
        ms = np.concatenate([np.arange(-b, b + 1) for b in self.p]) + self.P
        return ks, ms

    def to_padded(self, flat: np.ndarray) -> np.ndarray:
        """``(..., size)`` -> ``(..., K, (P+1)^2)`` with zeros above ``p(k)``."""
        ks, lm = self.padded_index
        out = np.zeros(flat.shape[:-1] + (self.K, (self.P + 1) ** 2), dtype=flat.dtype)
        out[..., ks, lm] = flat
        return out

    def from_padded(self, padded: np.ndarray) -> np.ndarray:
        ks, lm = self.padded_index
        return padded[..., ks, lm]

    def circles_to_padded(self, flat: np.ndarray) -> np.ndarray:
        """``(..., sum(2p+1))`` -> ``(..., K, 2P+1)`` with zeros where ``|m| > p(k)``."""
        ks, ms = self.circle_padded_index
        out = np.zeros(flat.shape[:-1] + (self.K, 2 * self.P + 1), dtype=complex)
        out[..., ks, ms] = flat
        return out

    def circles_from_padded(self, padded: np.ndarray) -> np.ndarray:
        ks, ms = self.circle_padded_index
        return padded[..., ks, ms]


def tensor_flat_index(q: int, k: int, n: int, m: int, grid: ShellGrid, basis: ParamBasisSpec) -> int:
    """Position of ``v[q, k, n, m]`` in the flat (q, k, n, m) layout; ``k`` is 1-based."""
    if not (0 <= q <= basis.Q and 1 <= k <= grid.K and 0 <= n <= grid.p[k - 1] and -n <= m <= n):
        raise ValueError(f"index (q={q}, k={k}, n={n}, m={m}) out of range")
    return int(q * grid.size + grid.offsets[k - 1] + n * n + n + m)


@dataclass
class VolumeShellCoeffs:
    """A single object instance: per-shell spherical harmonic coefficients."""

    grid: ShellGrid
    data: np.ndarray
    dc: float = 0.0

    def shell(self, k: int) -> np.ndarray:
        return self.data[self.grid.shell_slice(k)]

    def evaluate_shell(self, k: int, theta, phi) -> np.ndarray:
        return sh_evaluate(self.shell(k), theta, phi)


@dataclass
class HyperVolumeCoeffs:
    """Tensor-product coefficients ``v[q, k, n, m]`` plus per-q zero frequency."""

    grid: ShellGrid
    basis: ParamBasisSpec
    data: np.ndarray = None
    dc: np.ndarray = None

    def __post_init__(self):
        shape = (self.basis.Q + 1, self.grid.size)
        if self.data is None:
            self.data = np.zeros(shape, dtype=complex)
        self.data = np.asarray(self.data, dtype=complex).reshape(shape)
        if self.dc is None:
            self.dc = np.zeros(self.basis.Q + 1)
        self.dc = np.asarray(self.dc, dtype=float).reshape(self.basis.Q + 1)

    @classmethod
    def zeros(cls, grid: ShellGrid, basis: ParamBasisSpec) -> "HyperVolumeCoeffs":
        return cls(grid, basis)

    @property
    def Q(self) -> int:
        return self.basis.Q

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def copy(self) -> "HyperVolumeCoeffs":
        return HyperVolumeCoeffs(self.grid, self.basis, self.data.copy(), self.dc.copy())

    def shell(self, q: int, k: int) -> np.ndarray:
        return self.data[q, self.grid.shell_slice(k)]

    def padded(self) -> np.ndarray:
        """``(Q+1, K, (P+1)^2)`` view with zeros above each shell's band."""
        return self.grid.to_padded(self.data)

    def active_mask(self, K_active: int | None = None, Q_active: int | None = None) -> np.ndarray:
        K_active = self.grid.K if K_active is None else K_active
        Q_active = self.Q if Q_active is None else Q_active
        mask = np.zeros(self.data.shape, dtype=bool)
        mask[: Q_active + 1, : int(self.grid.offsets[K_active])] = True
        return mask

    def axpy(self, a: float, direction: np.ndarray) -> None:
        """In-place ``data += a * direction`` (the single mutation path)."""
        self.data += a * np.asarray(direction).reshape(self.data.shape)

    def with_basis(self, basis: ParamBasisSpec) -> "HyperVolumeCoeffs":
        """Same object in a basis of the same kind with a different Q (pads or truncates)."""
        if basis.kind != self.basis.kind:
            raise ValueError("basis kind mismatch")
        out = HyperVolumeCoeffs.zeros(self.grid, basis)
        n = min(basis.Q, self.Q) + 1
        out.data[:n] = self.data[:n]
        out.dc[:n] = self.dc[:n]
        return out

    def __add__(self, other: "HyperVolumeCoeffs") -> "HyperVolumeCoeffs":
        return HyperVolumeCoeffs(self.grid, self.basis, self.data + other.data, self.dc + other.dc)

    def __mul__(self, a: float) -> "HyperVolumeCoeffs":
        return HyperVolumeCoeffs(self.grid, self.basis, a * self.data, a * self.dc)

    __rmul__ = __mul__


def instance_at(hv: HyperVolumeCoeffs, t: float) -> VolumeShellCoeffs:
    """Collapse the parameter expansion at ``t``."""
    weights = eval_param_basis(hv.basis, t)
    return VolumeShellCoeffs(hv.grid, weights @ hv.data, float(weights @ hv.dc))


# ---------------------------------------------------------------------------
# real-space synthesis


def synthesis_band(grid: ShellGrid, k: int, x_max: float) -> int:
    """Quadrature band for shell ``k`` resolving ``exp(i r_k <u, x>)`` up to |x| = x_max."""
    r = grid.radii[k - 1]
    return int(grid.p[k - 1] + np.ceil(r * x_max) + 10)


def synthesis_nodes(vol: VolumeShellCoeffs, x_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and weighted samples of the Fourier inversion integral.

    Shell ``k`` carries the radial weight ``int_{r_k - dw/2}^{r_k + dw/2} r^2 dr``;
    the zero frequency carries the volume of the ball of radius ``dw/2``.
    """
    grid = vol.grid
    dw = grid.delta_omega
    omegas, values = [np.zeros((1, 3))], [np.array([vol.dc * (4.0 / 3.0) * np.pi * (dw / 2) ** 3], dtype=complex)]
    for k in range(1, grid.K + 1):
        r = grid.radii[k - 1]
        th, ph, w = sphere_quadrature(synthesis_band(grid, k, x_max))
        u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        f = sph_harm_table(grid.p[k - 1], th, ph) @ vol.shell(k)
        omegas.append(r * u)
        values.append(f * w * dw * (r * r + dw * dw / 12.0))
    scale = (2.0 * np.pi) ** -3
    return np.concatenate(omegas), np.concatenate(values) * scale


def grid_axis(N: int, pixel_size: float) -> np.ndarray:
    return (np.arange(N) - (N - 1) / 2.0) * pixel_size


def synthesize_grid(
    vol: VolumeShellCoeffs,
    N: int,
    mode: str = "accelerated",
    pixel_size: float | None = None,
    return_imag: bool = False,
    chunk: int = 2048,
):
    """Inverse Fourier synthesis of one instance on a centered ``N^3`` grid.

    ``mode="direct"`` evaluates the plain sum over quadrature nodes;
    ``mode="accelerated"`` uses a type-1 non-uniform FFT.  Returns the real
    part; with ``return_imag=True`` also the relative norm of the imaginary
    residual.
    """
    pixel_size = 1.0 / N if pixel_size is None else pixel_size
    x = grid_axis(N, pixel_size)
    x_max = float(np.sqrt(3.0) * np.abs(x).max())
    omega, c = synthesis_nodes(vol, x_max)
    if mode == "direct":
        out = np.zeros((N, N, N), dtype=complex)
        for s in range(0, len(c), chunk):
            om, cc = omega[s : s + chunk], c[s : s + chunk]
            e1 = np.exp(1j * om[:, 0:1] * x)
            e2 = np.exp(1j * om[:, 1:2] * x)
            e3 = np.exp(1j * om[:, 2:3] * x)
            b = (cc[:, None, None] * e1[:, :, None] * e2[:, None, :]).reshape(len(cc), N * N)
            out += (b.T @ e3).reshape(N, N, N)
    elif mode == "accelerated":
        import finufft

        shift = N // 2 - (N - 1) / 2.0
        phase = np.exp(1j * pixel_size * shift * omega.sum(axis=1))
        pts = np.mod(omega * pixel_size + np.pi, 2.0 * np.pi) - np.pi
        out = finufft.nufft3d1(
            pts[:, 0].copy(), pts[:, 1].copy(), pts[:, 2].copy(), (c * phase).astype(complex),
            (N, N, N), isign=1, eps=1e-12, modeord=0,
        )
    else:
        raise ValueError(f"unknown synthesis mode {mode!r}")
    real = out.real.copy()
    if return_imag:
        denom = np.linalg.norm(real)
        return real, float(np.linalg.norm(out.imag) / denom) if denom > 0 else 0.0
    return real
