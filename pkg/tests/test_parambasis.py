import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypermol.parambasis import (
    BasisKind,
    ParamBasisSpec,
    eval_param_basis,
    flip_signs,
    gauss_legendre_01,
    haar_index,
)

t_values = st.floats(0.0, 1.0)


def test_legendre_examples():
    spec = ParamBasisSpec(BasisKind.LEGENDRE, 3)
    assert eval_param_basis(spec, 0.37)[0] == 1.0
    assert eval_param_basis(spec, 1.0)[1] == pytest.approx(np.sqrt(3.0), abs=1e-15)


def test_haar_example():
    spec = ParamBasisSpec(BasisKind.HAAR, 3)
    assert haar_index(3) == (1, 1)
    assert eval_param_basis(spec, 0.625)[3] == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_gauss_legendre_examples():
    x, w = gauss_legendre_01(1)
    assert x[0] == 0.5 and w[0] == 1.0
    x, w = gauss_legendre_01(8)
    assert abs(np.sum(w * x**3) - 0.25) <= 1e-14


@given(st.integers(0, 16))
def test_legendre_gram_identity(Q):
    spec = ParamBasisSpec(BasisKind.LEGENDRE, Q)
    x, w = gauss_legendre_01(Q + 2)
    P = eval_param_basis(spec, x)
    assert np.max(np.abs(P.T @ (w[:, None] * P) - np.eye(Q + 1))) <= 1e-12


def test_legendre_gram_q10_with_16_nodes():
    x, w = gauss_legendre_01(16)
    P = eval_param_basis(ParamBasisSpec(BasisKind.LEGENDRE, 10), x)
    assert np.max(np.abs(P.T @ (w[:, None] * P) - np.eye(11))) <= 1e-12


@given(st.integers(0, 12), t_values)
def test_legendre_matches_numpy(Q, t):
    vals = eval_param_basis(ParamBasisSpec(BasisKind.LEGENDRE, Q), t)
    for q in range(Q + 1):
        ref = np.sqrt(2 * q + 1) * np.polynomial.Legendre.basis(q)(2 * t - 1)
        assert vals[q] == pytest.approx(ref, abs=1e-12)


@given(st.integers(2, 16), t_values)
def test_chebyshev_three_term_recurrence(Q, t):
    T = eval_param_basis(ParamBasisSpec(BasisKind.CHEBYSHEV, Q), t)
    x = 2 * t - 1
    for q in range(1, Q):
        assert T[q + 1] == pytest.approx(2 * x * T[q] - T[q - 1], abs=1e-12)
    assert T[Q] == pytest.approx(np.cos(Q * np.arccos(np.clip(x, -1, 1))), abs=1e-10)


@given(st.integers(1, 6))
def test_haar_orthonormal_under_dyadic_integration(level):
    Q = 2**level - 1
    n_cells = 2 ** (level + 1)
    mids = (np.arange(n_cells) + 0.5) / n_cells  # exact for dyadic step functions
    H = eval_param_basis(ParamBasisSpec(BasisKind.HAAR, Q), mids)
    gram = H.T @ H / n_cells
    assert np.max(np.abs(gram - np.eye(Q + 1))) <= 1e-14


@given(st.integers(1, 31), st.integers(0, 2**31 - 1))
def test_haar_expansion_piecewise_constant(Q, seed):
    level = int(np.floor(np.log2(Q))) + 1
    coeffs = np.random.default_rng(seed).standard_normal(Q + 1)
    cell = np.random.default_rng(seed + 1).integers(0, 2**level)
    # interior points of one finest dyadic cell share one value
    ts = (cell + np.linspace(0.01, 0.99, 7)) / 2**level
    vals = eval_param_basis(ParamBasisSpec(BasisKind.HAAR, Q), ts) @ coeffs
    assert np.ptp(vals) <= 1e-12


@given(st.sampled_from([BasisKind.LEGENDRE, BasisKind.CHEBYSHEV]), st.integers(0, 10), t_values)
def test_flip_signs_polynomial(kind, Q, t):
    spec = ParamBasisSpec(kind, Q)
    perm, sign = flip_signs(spec)
    c = np.arange(1.0, Q + 2)
    flipped = sign * c[perm]
    assert eval_param_basis(spec, t) @ flipped == pytest.approx(eval_param_basis(spec, 1 - t) @ c, abs=1e-9)


def test_flip_signs_haar_complete_levels():
    spec = ParamBasisSpec(BasisKind.HAAR, 7)
    perm, sign = flip_signs(spec)
    c = np.random.default_rng(0).standard_normal(8)
    ts = (np.arange(16) + 0.5) / 16
    lhs = eval_param_basis(spec, ts) @ (sign * c[perm])
    rhs = eval_param_basis(spec, 1 - ts) @ c
    assert np.allclose(lhs, rhs, atol=1e-14)
    with pytest.raises(ValueError):
        flip_signs(ParamBasisSpec(BasisKind.HAAR, 2))


def test_vectorized_shape_and_domain():
    spec = ParamBasisSpec(BasisKind.LEGENDRE, 4)
    assert eval_param_basis(spec, np.zeros((3, 2))).shape == (3, 2, 5)
    for bad in (-0.1, 1.1, np.nan):
        with pytest.raises(ValueError):
            eval_param_basis(spec, bad)
    with pytest.raises(ValueError):
        ParamBasisSpec(BasisKind.LEGENDRE, -1)
    with pytest.raises(ValueError):
        gauss_legendre_01(0)
