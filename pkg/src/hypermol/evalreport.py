"""Evaluation of a reconstruction against ground truth, modulo its ambiguities.

A hyper-volume is only determined up to a global rotation, a reflection and
a monotone reparameterization of ``t``.  This module supplies a rank
correlation that ignores the latter, a global alignment search for the
former two (plus ``t -> 1 - t``), per-shell correlations, and a detector for
degenerate parameterizations that pile most images onto a few ``t`` values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .hypervolume import HyperVolumeCoeffs, instance_at
from .parambasis import eval_param_basis, flip_signs
from .sphharm import Rotation, rotate_sh_array, sh_lm, wigner_d_batch


def spearman_abs(t_true, t_est) -> float:
    """Absolute Spearman rank correlation of paired samples."""
    a = np.asarray(t_true, dtype=float)
    b = np.asarray(t_est, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("expected two 1-d arrays of equal length")
    if len(a) < 3:
        raise ValueError("need at least 3 pairs")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("rank correlation undefined for a constant column")
    return float(abs(stats.spearmanr(a, b)[0]))


# ---------------------------------------------------------------------------
# global alignment


def parity(hv: HyperVolumeCoeffs) -> HyperVolumeCoeffs:
    """Point reflection ``x -> -x``: every degree-n coefficient times ``(-1)^n``."""
    L = hv.grid.P
    n = sh_lm(L)[0]
    sign = (-1.0) ** n
    out = hv.copy()
    for k in range(1, hv.grid.K + 1):
        sl = hv.grid.shell_slice(k)
        out.data[:, sl] *= sign[: sl.stop - sl.start]
    return out


def flip_t(hv: HyperVolumeCoeffs) -> HyperVolumeCoeffs:
    """The hyper-volume with ``t`` replaced by ``1 - t``."""
    perm, sign = flip_signs(hv.basis)
    out = hv.copy()
    out.data[:] = sign[:, None] * hv.data[perm]
    out.dc[:] = sign * hv.dc[perm]
    return out


def rotate_hypervolume(hv: HyperVolumeCoeffs, rot: Rotation) -> HyperVolumeCoeffs:
    """Every shell of every basis term rotated by ``rot``."""
    out = hv.copy()
    a, b, g = rot.angles
    padded = rotate_sh_array(hv.padded(), hv.grid.P, a, b, g)
    out.data[:] = hv.grid.from_padded(padded)
    return out


def _instances(hv: HyperVolumeCoeffs, ts, K: int) -> np.ndarray:
    """Padded instance shells ``(T, K, (P+1)^2)`` truncated to ``K`` shells."""
    Pt = eval_param_basis(hv.basis, np.asarray(ts, dtype=float))
    return np.einsum("tq,qkl->tkl", Pt, hv.padded())[:, :K]


@dataclass
class Alignment:
    """``rotation o transform(A) ~ B``, with transform = parity and/or t-flip."""

    rotation: Rotation
    reflected: bool
    flipped_t: bool
    residual: float

    def apply(self, hv: HyperVolumeCoeffs) -> HyperVolumeCoeffs:
        out = parity(hv) if self.reflected else hv
        out = flip_t(out) if self.flipped_t else out
        return rotate_hypervolume(out, self.rotation)


def _cross_blocks(A: np.ndarray, B: np.ndarray, L: int) -> list[np.ndarray]:
    """``M^n[m', m] = sum conj(B_m) A_m'`` over leading axes, per degree n <= L."""
    out = []
    for n in range(L + 1):
        sl = slice(n * n, (n + 1) ** 2)
        a = A[..., sl].reshape(-1, 2 * n + 1)
        b = B[..., sl].reshape(-1, 2 * n + 1)
        out.append(a.T @ b.conj())
    return out


def _coarse_rotation_search(M: list[np.ndarray], L: int, n_beta: int, n_ang: int, keep: int):
    """Best ``keep`` Euler triples of ``Re sum_n tr(D^n(R) M^n)`` on a grid.

    With ``D_{mm'} = e^{-i m a} d_{mm'}(b) e^{-i m' g}`` the objective at
    fixed ``b`` is a 2-d Fourier series in ``(a, g)`` evaluated by one FFT.
    """
    betas = (np.arange(n_beta) + 0.5) * np.pi / n_beta
    d = wigner_d_batch(L, betas)
    cand = []
    for bi, beta in enumerate(betas):
        buf = np.zeros((n_ang, n_ang), dtype=complex)
        for n in range(L + 1):
            m = np.arange(-n, n + 1)
            # coefficient of exp(-i m a) exp(-i m' g) is d_{mm'} M^n[m', m]
            coef = d[n][bi] * M[n].T
            np.add.at(buf, (m[:, None] % n_ang, m[None, :] % n_ang), coef)
        vals = np.fft.fft2(buf).real
        flat = np.argsort(vals, axis=None)[::-1][:keep]
        for f in flat:
            i, j = np.unravel_index(f, vals.shape)
            cand.append((vals[i, j], 2 * np.pi * i / n_ang, beta, 2 * np.pi * j / n_ang))
    cand.sort(key=lambda c: -c[0])
    return cand[:keep]


def align_global(
    hvA: HyperVolumeCoeffs,
    hvB: HyperVolumeCoeffs,
    t_samples=None,
    t_samples_A=None,
    K_align: int | None = None,
    L_coarse: int = 8,
    n_candidates: int = 4,
) -> Alignment:
    """Search SO(3) x {identity, parity} x {t, 1-t} for the transform of A closest to B.

    The residual is ``sum_t sum_{k <= K_align} ||R T(A)[tA] - B[t]||^2``
    where ``tA`` defaults to ``t`` (or ``1 - tA`` when flipped).  A coarse
    grid over Euler angles on degrees ``n <= L_coarse`` is followed by a
    Nelder-Mead refinement of the best candidates on all degrees.
    """
    if hvA.grid != hvB.grid:
        raise ValueError("hyper-volumes live on different shell grids")
    grid = hvA.grid
    K = grid.K if K_align is None else K_align
    P = int(grid.p[K - 1])
    ts = np.linspace(0.1, 0.9, 9) if t_samples is None else np.asarray(t_samples, dtype=float)
    tA = ts if t_samples_A is None else np.asarray(t_samples_A, dtype=float)
    B = _instances(hvB, ts, K)[..., : (P + 1) ** 2]
    L_c = min(L_coarse, P)
    n_beta, n_ang = 2 * (L_c + 1), 4 * (L_c + 1)

    best = None
    for reflected in (False, True):
        for flipped in (False, True):
            src = parity(hvA) if reflected else hvA
            A = _instances(src, 1.0 - tA if flipped else tA, K)[..., : (P + 1) ** 2]

            def resid(ang, A=A):
                R = rotate_sh_array(A, P, *ang)
                return float(np.sum(np.abs(R - B) ** 2))

            M = _cross_blocks(A, B, L_c)
            for _, a, b, g in _coarse_rotation_search(M, L_c, n_beta, n_ang, n_candidates):
                res = optimize.minimize(resid, np.array([a, b, g]), method="Nelder-Mead", options=dict(xatol=1e-6, fatol=1e-13, maxiter=2000))
                if best is None or res.fun < best.residual:
                    best = Alignment(Rotation(*res.x), reflected, flipped, float(res.fun))
    return best


# ---------------------------------------------------------------------------
# correlations and parameter mappings


def shell_correlation(volA: np.ndarray, volB: np.ndarray, grid) -> np.ndarray:
    """Per-shell ``Re<A_k, B_k> / (|A_k| |B_k|)``; NaN where a shell is zero.

    ``volA`` and ``volB`` are flat shell-coefficient rows on ``grid``.
    """
    out = np.empty(grid.K)
    for k in range(1, grid.K + 1):
        a, b = volA[grid.shell_slice(k)], volB[grid.shell_slice(k)]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        out[k - 1] = np.nan if na == 0 or nb == 0 else float(np.real(np.vdot(b, a)) / (na * nb))
    return out


def instance_correlations(hvA: HyperVolumeCoeffs, hvB: HyperVolumeCoeffs, ts_B, ts_A=None) -> np.ndarray:
    """Shell correlations ``(T, K)`` of ``A[ts_A]`` against ``B[ts_B]``."""
    ts_A = ts_B if ts_A is None else ts_A
    return np.stack([shell_correlation(instance_at(hvA, a).data, instance_at(hvB, b).data, hvA.grid) for a, b in zip(ts_A, ts_B)])


MIN_DETECTOR_SAMPLES = 100


@dataclass
class DegeneracyReport:
    flagged: bool
    chi2: float
    p_value: float
    used_range: float
    histogram: np.ndarray
    tv_distance: float = 0.0  # total variation distance of the histogram from uniform


def used_range_fraction(t_est, mass: float = 0.95, bins: int = 100) -> float:
    """Measure of the smallest union of ``bins`` equal bins holding ``mass`` of the samples.

    Near 0.95 for uniform samples, near 0 when the samples pile onto a few
    values (wherever they sit) and about the occupied length when only part
    of ``[0, 1]`` is used.
    """
    t = np.asarray(t_est, dtype=float)
    counts = np.sort(np.histogram(t, bins=bins, range=(0.0, 1.0))[0])[::-1]
    need = int(np.searchsorted(np.cumsum(counts), mass * len(t) - 1e-9 * len(t)) + 1)
    return min(need, bins) / bins


def degenerate_param_detector(t_est, bins: int = 20, alpha: float = 1e-3, min_tv: float = 0.45) -> DegeneracyReport:
    """Flag a degenerate parameterization from the marginal of the estimated ``t``.

    Flags when the ``bins``-bin histogram differs from uniform both
    significantly (chi-square ``p < alpha``) and substantially (total
    variation distance ``>= min_tv``).  The estimate is only defined up to a
    monotone reparameterization, so a healthy run has a smooth but
    non-uniform marginal that a large sample makes "significant"; the effect
    size separates that from mass piled at the extremes or a used range
    covering only part of ``[0, 1]``.
    """
    t = np.asarray(t_est, dtype=float)
    if len(t) < MIN_DETECTOR_SAMPLES:
        raise ValueError(f"need at least {MIN_DETECTOR_SAMPLES} samples")
    hist = np.histogram(t, bins=bins, range=(0.0, 1.0))[0]
    chi2, p = stats.chisquare(hist)
    tv = 0.5 * float(np.sum(np.abs(hist / len(t) - 1.0 / bins)))
    return DegeneracyReport(bool(p < alpha and tv >= min_tv), float(chi2), float(p), used_range_fraction(t), hist, tv)


@dataclass
class ParamMapping:
    """Pairs of true and estimated ``t`` with derived summaries."""

    t_true: np.ndarray
    t_est: np.ndarray
    bins: int = 20

    def __post_init__(self):
        self.t_true = np.asarray(self.t_true, dtype=float)
        self.t_est = np.asarray(self.t_est, dtype=float)
        if self.t_true.shape != self.t_est.shape:
            raise ValueError("t_true and t_est differ in length")
        if np.any((self.t_true < 0) | (self.t_true > 1) | (self.t_est < 0) | (self.t_est > 1)):
            raise ValueError("t values must lie in [0, 1]")

    @property
    def histogram(self) -> np.ndarray:
        return np.histogram(self.t_est, bins=self.bins, range=(0.0, 1.0))[0]

    @property
    def spearman(self) -> float:
        return spearman_abs(self.t_true, self.t_est)

    @property
    def orientation(self) -> int:
        """+1 if estimates increase with the truth, -1 if reversed."""
        return 1 if stats.spearmanr(self.t_true, self.t_est)[0] >= 0 else -1

    def matched_t(self, tau) -> np.ndarray:
        """Estimated-scale parameter matching true ``tau`` by quantiles.

        ``F_est^-1(F_true(tau))`` (orientation-reversed if the correlation is
        negative): the monotone reparameterization implied by the samples.
        """
        u = np.searchsorted(np.sort(self.t_true), np.asarray(tau, dtype=float)) / len(self.t_true)
        if self.orientation < 0:
            u = 1.0 - u
        return np.quantile(self.t_est, np.clip(u, 0.0, 1.0))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_true", "t_est"])
            for a, b in zip(self.t_true, self.t_est):
                w.writerow([f"{a:.9g}", f"{b:.9g}"])

    def write_histogram_csv(self, path) -> None:
        edges = np.linspace(0.0, 1.0, self.bins + 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], self.histogram):
                w.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c)])


def write_shell_correlation_csv(path, ts, corr: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"k{k}" for k in range(1, corr.shape[1] + 1)])
        for t, row in zip(ts, corr):
            w.writerow([f"{t:.6g}"] + [("nan" if np.isnan(c) else f"{c:.6f}") for c in row])


@dataclass
class EvalSummary:
    spearman: float
    mean_shell_correlation: float
    alignment: Alignment
    correlations: np.ndarray  # (T, K)
    degeneracy: DegeneracyReport | None  # None below the detector's sample minimum


def evaluate_reconstruction(hv_rec: HyperVolumeCoeffs, hv_true: HyperVolumeCoeffs, mapping: ParamMapping, ts=None, K_eval: int | None = None) -> EvalSummary:
    """Spearman, global alignment and mean instance shell correlation for ``k <= K_eval``.

    Reconstructed instances are taken at the quantile-matched parameters of
    ``ts`` (default 0.1, ..., 0.9); ``K_eval`` defaults to ``2K/3``.
    """
    ts = np.linspace(0.1, 0.9, 9) if ts is None else np.asarray(ts, dtype=float)
    K_eval = (2 * hv_true.grid.K) // 3 if K_eval is None else K_eval
    t_rec = mapping.matched_t(ts)
    al = align_global(hv_rec, hv_true, ts, t_samples_A=t_rec, K_align=K_eval)
    aligned = al.apply(hv_rec)
    # the search compared A[1 - t_rec] when flipped, which is flip_t(A)[t_rec]
    corr = instance_correlations(aligned, hv_true, ts, t_rec)
    mean = float(np.nanmean(corr[:, :K_eval]))
    degeneracy = degenerate_param_detector(mapping.t_est) if len(mapping.t_est) >= MIN_DETECTOR_SAMPLES else None
    return EvalSummary(mapping.spearman, mean, al, corr, degeneracy)
