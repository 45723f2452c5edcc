"""Basis functions for the heterogeneity parameter ``t`` on [0, 1]."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class BasisKind(enum.IntEnum):
    LEGENDRE = 0
    CHEBYSHEV = 1
    HAAR = 2


@dataclass(frozen=True)
class ParamBasisSpec:
    """Basis kind and highest index ``Q`` (``Q = 0`` is constant-only)."""

    kind: BasisKind = BasisKind.LEGENDRE
    Q: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if self.Q < 0:
            raise ValueError("Q must be >= 0")

    @property
    def size(self) -> int:
        return self.Q + 1

    def with_Q(self, Q: int) -> "ParamBasisSpec":
        return ParamBasisSpec(self.kind, Q)


def haar_index(q: int) -> tuple[int, int]:
    """Level ``n`` and shift ``k`` of the ``q``-th Haar function (``q >= 1``)."""
    if q < 1:
        raise ValueError("index 0 is the constant function")
    n = int(np.floor(np.log2(q)))
    return n, q - 2**n


def _haar_mother(s: np.ndarray) -> np.ndarray:
    return np.where((s >= 0) & (s <= 0.5), 1.0, np.where((s > 0.5) & (s <= 1.0), -1.0, 0.0))


def eval_param_basis(spec: ParamBasisSpec, t) -> np.ndarray:
    """Values ``[P_0(t), ..., P_Q(t)]``; vectorized over ``t`` (basis axis last)."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0.0) | (t > 1.0)) or np.any(~np.isfinite(t)):
        raise ValueError("t must lie in [0, 1]")
    x = 2.0 * t - 1.0
    out = np.empty(t.shape + (spec.Q + 1,))
    out[..., 0] = 1.0
    if spec.kind is BasisKind.HAAR:
        for q in range(1, spec.Q + 1):
            n, k = haar_index(q)
            out[..., q] = 2.0 ** (n / 2.0) * _haar_mother(2.0**n * t - k)
        return out
    if spec.Q >= 1:
        out[..., 1] = x
    for q in range(1, spec.Q):
        if spec.kind is BasisKind.LEGENDRE:
            out[..., q + 1] = ((2 * q + 1) * x * out[..., q] - q * out[..., q - 1]) / (q + 1)
        else:
            out[..., q + 1] = 2.0 * x * out[..., q] - out[..., q - 1]
    if spec.kind is BasisKind.LEGENDRE:
        out *= np.sqrt(2.0 * np.arange(spec.Q + 1) + 1.0)
    return out


@lru_cache(maxsize=None)
def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def flip_signs(spec: ParamBasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Permutation and signs realizing ``t -> 1 - t`` on coefficients.

    ``coeffs_flipped[q] = sign[q] * coeffs[perm[q]]``.
    """
    Q = spec.Q
    perm = np.arange(Q + 1)
    sign = np.ones(Q + 1)
    if spec.kind is BasisKind.HAAR:
        for q in range(1, Q + 1):
            n, k = haar_index(q)
            partner = 2**n + (2**n - 1 - k)
            if partner > Q:
                raise ValueError("Haar truncation is not closed under t -> 1 - t")
            perm[q] = partner
            sign[q] = -1.0
    else:
        sign = (-1.0) ** np.arange(Q + 1)
    return perm, sign
