import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypermol.evalreport import (
    ParamMapping,
    align_global,
    degenerate_param_detector,
    evaluate_reconstruction,
    flip_t,
    instance_correlations,
    parity,
    rotate_hypervolume,
    shell_correlation,
    spearman_abs,
    used_range_fraction,
    write_shell_correlation_csv,
)
from hypermol.hypervolume import HyperVolumeCoeffs, ShellGrid, instance_at
from hypermol.parambasis import BasisKind, ParamBasisSpec
from hypermol.phantom import GaussianBlobPhantom, phantom_to_hypervolume
from hypermol.sphharm import Rotation, sh_lm

LEGENDRE = BasisKind.LEGENDRE


def random_hv(grid, Q=1, seed=0):
    rng = np.random.default_rng(seed)
    shape = (Q + 1, grid.size)
    return HyperVolumeCoeffs(grid, ParamBasisSpec(LEGENDRE, Q), rng.standard_normal(shape) + 1j * rng.standard_normal(shape), rng.standard_normal(Q + 1))


def rotation_distance(a: Rotation, b: Rotation) -> float:
    R = a.matrix() @ b.matrix().T
    return float(np.arccos(np.clip((np.trace(R) - 1) / 2, -1, 1)))


# --- rank correlation -------------------------------------------------------


def test_spearman_examples():
    t = np.linspace(0, 1, 50)
    assert spearman_abs(t, t) == pytest.approx(1.0)
    assert spearman_abs(t, 1 - t**3) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    assert spearman_abs(rng.uniform(size=1000), rng.uniform(size=1000)) <= 0.1
    with pytest.raises(ValueError):
        spearman_abs(t, np.zeros(50))
    with pytest.raises(ValueError):
        spearman_abs([0.1, 0.2], [0.3, 0.4])


@given(st.lists(st.integers(0, 10**6), min_size=5, max_size=40, unique=True))
def test_spearman_invariant_under_monotone_maps(t):
    t = np.array(t) / 1e6
    assert spearman_abs(t, np.sqrt(t) * 3 + 1) == pytest.approx(1.0)
    assert spearman_abs(t, -(t**3)) == pytest.approx(1.0)


# --- transforms -------------------------------------------------------------


def test_parity_and_flip_are_involutions():
    grid = ShellGrid.make(4, 2.5)
    hv = random_hv(grid, Q=3)
    assert np.array_equal(parity(parity(hv)).data, hv.data)
    assert np.allclose(flip_t(flip_t(hv)).data, hv.data)
    for t in (0.0, 0.2, 0.7):
        assert np.allclose(instance_at(flip_t(hv), t).data, instance_at(hv, 1 - t).data, atol=1e-12)


def test_parity_matches_reflected_phantom():
    traj = np.array([[[0.1, -0.05, 0.02], [0.05, 0.0, 0.0], [0, 0, 0], [0, 0, 0]], [[-0.1, 0.08, 0.0], [0, 0, 0], [0, 0, 0], [0, 0, 0]]])
    ph = GaussianBlobPhantom([1.0, 0.6], [0.05, 0.05], traj)
    mirror = GaussianBlobPhantom([1.0, 0.6], [0.05, 0.05], -traj)
    grid = ShellGrid.make(6, 2.5)
    a = parity(phantom_to_hypervolume(ph, grid, ParamBasisSpec(LEGENDRE, 2)))
    b = phantom_to_hypervolume(mirror, grid, ParamBasisSpec(LEGENDRE, 2))
    assert np.linalg.norm(a.data - b.data) <= 1e-10 * np.linalg.norm(b.data)
    # parity signs are (-1)^n per degree
    n = sh_lm(grid.P)[0]
    assert np.all((-1.0) ** n[:4] == [1, -1, -1, -1])


# --- global alignment -------------------------------------------------------


def _aligned_fixture():
    grid = ShellGrid.make(6, 2.5)
    return grid, random_hv(grid, Q=2, seed=3)


def test_align_identity():
    grid, hv = _aligned_fixture()
    al = align_global(hv, hv)
    assert al.residual <= 1e-10
    assert not al.reflected and not al.flipped_t


def test_align_recovers_rotation():
    grid, hv = _aligned_fixture()
    G = Rotation.random(np.random.default_rng(11))
    al = align_global(hv, rotate_hypervolume(hv, G))
    assert not al.reflected and not al.flipped_t
    assert rotation_distance(al.rotation, G) <= 0.02
    assert al.residual <= 1e-8


def test_align_detects_mirror_and_flip():
    grid, hv = _aligned_fixture()
    G = Rotation.random(np.random.default_rng(12))
    target = rotate_hypervolume(flip_t(parity(hv)), G)
    al = align_global(hv, target)
    assert al.reflected and al.flipped_t
    assert np.linalg.norm(al.apply(hv).data - target.data) <= 1e-4 * np.linalg.norm(target.data)


def test_align_residual_invariant_under_common_rotation():
    grid = ShellGrid.make(5, 2.5)
    a, b = random_hv(grid, Q=1, seed=1), random_hv(grid, Q=1, seed=2)
    G = Rotation.random(np.random.default_rng(4))
    r1 = align_global(a, b).residual
    r2 = align_global(rotate_hypervolume(a, G), rotate_hypervolume(b, G)).residual
    assert r2 == pytest.approx(r1, rel=1e-6)


def test_align_rejects_grid_mismatch():
    with pytest.raises(ValueError):
        align_global(random_hv(ShellGrid.make(3, 2.5)), random_hv(ShellGrid.make(4, 2.5)))


# --- shell correlations -----------------------------------------------------


def test_shell_correlation_examples():
    grid = ShellGrid.make(5, 2.5)
    a = random_hv(grid, Q=0).data[0]
    assert np.allclose(shell_correlation(a, 3 * a, grid), 1.0)
    assert np.allclose(shell_correlation(a, -a, grid), -1.0)
    b = a.copy()
    b[grid.shell_slice(2)] = 0
    c = shell_correlation(a, b, grid)
    assert np.isnan(c[1]) and np.allclose(np.delete(c, 1), 1.0)


def test_shell_correlation_null():
    grid = ShellGrid(1, 2.5, (8,))  # 81 complex coefficients
    rng = np.random.default_rng(0)
    vals = [shell_correlation(random_hv(grid, 0, s).data[0], random_hv(grid, 0, s + 1000).data[0], grid)[0] for s in range(200)]
    assert abs(np.mean(vals)) <= 3 / np.sqrt(81)


def test_shell_correlation_invariant_under_common_rotation():
    grid = ShellGrid.make(5, 2.5)
    a, b = random_hv(grid, Q=0, seed=1), random_hv(grid, Q=0, seed=2)
    G = Rotation.random(np.random.default_rng(5))
    c1 = shell_correlation(a.data[0], b.data[0], grid)
    c2 = shell_correlation(rotate_hypervolume(a, G).data[0], rotate_hypervolume(b, G).data[0], grid)
    assert np.max(np.abs(c1 - c2)) <= 1e-10


def test_instance_correlations_shape_and_csv(tmp_path):
    grid = ShellGrid.make(4, 2.5)
    hv = random_hv(grid, Q=2)
    ts = np.linspace(0.1, 0.9, 9)
    corr = instance_correlations(hv, hv, ts)
    assert corr.shape == (9, 4) and np.allclose(corr, 1.0)
    path = tmp_path / "corr.csv"
    write_shell_correlation_csv(path, ts, corr)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "k1", "k2", "k3", "k4"] and len(rows) == 10


# --- degeneracy detection ---------------------------------------------------


def test_uniform_mapping_not_flagged():
    t = np.random.default_rng(0).uniform(size=5000)
    rep = degenerate_param_detector(t)
    assert not rep.flagged and rep.p_value > 1e-3 and rep.used_range > 0.9


def test_extreme_point_mapping_flagged():
    rng = np.random.default_rng(1)
    t = np.where(rng.uniform(size=5000) < 0.5, 0.0, 1.0)
    rep = degenerate_param_detector(t)
    assert rep.flagged and rep.p_value < 1e-3
    assert rep.used_range <= 0.02  # two spikes occupy almost none of the range
    # eighty percent in the end bins with the rest spread uniformly
    n = 5000
    ends = rng.uniform(size=int(0.8 * n))
    ends = np.where(ends < 0.5, ends * 0.1, 1 - (ends - 0.5) * 0.1)
    t = np.concatenate([ends, rng.uniform(size=n - len(ends))])
    assert degenerate_param_detector(t).flagged


def test_partial_range_mapping_flagged():
    t = np.random.default_rng(2).uniform(0.3, 0.6, size=5000)
    rep = degenerate_param_detector(t)
    assert rep.flagged and rep.used_range <= 0.3


def test_single_value_mapping():
    rep = degenerate_param_detector(np.full(200, 0.4))
    assert rep.flagged and rep.used_range == 0.01


def test_detector_needs_samples():
    with pytest.raises(ValueError):
        degenerate_param_detector(np.linspace(0, 1, 99))


def test_used_range_fraction():
    assert used_range_fraction(np.linspace(0, 1, 1000, endpoint=False)) == pytest.approx(0.95)
    assert used_range_fraction(np.linspace(0.2, 0.4, 1000, endpoint=False)) == pytest.approx(0.19)


def test_smooth_monotone_reparameterization_not_flagged():
    # significantly non-uniform, but every part of the range is in use
    t = np.random.default_rng(4).uniform(size=5000)
    warped = 0.5 - 0.5 * np.cos(np.pi * t)
    rep = degenerate_param_detector(warped)
    assert rep.p_value < 1e-3 and not rep.flagged and rep.used_range > 0.8


def test_few_samples_skip_detector():
    grid = ShellGrid.make(4, 2.5)
    hv = random_hv(grid, Q=1)
    tt = np.linspace(0.05, 0.95, 50)
    assert evaluate_reconstruction(hv, hv, ParamMapping(tt, tt)).degeneracy is None


# --- parameter mappings -----------------------------------------------------


def test_param_mapping(tmp_path):
    rng = np.random.default_rng(3)
    tt = rng.uniform(size=2000)
    m = ParamMapping(tt, 1 - tt**2)
    assert m.orientation == -1 and m.spearman == pytest.approx(1.0)
    assert m.histogram.sum() == 2000
    # quantile matching undoes the monotone reparameterization
    assert np.allclose(m.matched_t([0.2, 0.5, 0.8]), [1 - 0.04, 1 - 0.25, 1 - 0.64], atol=0.02)
    m.write_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["t_true", "t_est"] and len(rows) == 2001
    assert float(rows[1][0]) == pytest.approx(tt[0], rel=1e-8)
    m.write_histogram_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert len(rows) == 21 and sum(int(r[2]) for r in rows[1:]) == 2000
    with pytest.raises(ValueError):
        ParamMapping([0.1, 0.2], [0.3])
    with pytest.raises(ValueError):
        ParamMapping([0.1, 1.2], [0.3, 0.4])


def test_evaluate_perfect_reconstruction_up_to_symmetries():
    grid = ShellGrid.make(6, 2.5)
    truth = random_hv(grid, Q=2, seed=8)
    G = Rotation.random(np.random.default_rng(9))
    rec = rotate_hypervolume(flip_t(truth), G)
    tt = np.random.default_rng(10).uniform(size=1000)
    # the reversed mapping already pairs rec(1 - t) with truth(t): no flip left to find
    summary = evaluate_reconstruction(rec, truth, ParamMapping(tt, 1 - tt))
    assert summary.spearman == pytest.approx(1.0)
    assert not summary.alignment.flipped_t and not summary.alignment.reflected
    assert summary.mean_shell_correlation >= 0.999
    assert not summary.degeneracy.flagged
    # with an unreversed mapping the alignment has to supply the flip
    summary = evaluate_reconstruction(rec, truth, ParamMapping(tt, tt))
    assert summary.alignment.flipped_t and summary.mean_shell_correlation >= 0.999
