import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypermol import formats
from hypermol.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from hypermol.config import ConfigError, RunConfig
from hypermol.hypervolume import HyperVolumeCoeffs, ShellGrid
from hypermol.imaging import CircleStack, ImageStack
from hypermol.parambasis import BasisKind, ParamBasisSpec
from hypermol.reconstruct import Assignment
from hypermol.sphharm import Rotation


def f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def random_hv(grid, Q=1, kind=BasisKind.LEGENDRE, seed=0):
    rng = np.random.default_rng(seed)
    shape = (Q + 1, grid.size)
    return HyperVolumeCoeffs(grid, ParamBasisSpec(kind, Q), f32(rng.standard_normal(shape)) + 1j * f32(rng.standard_normal(shape)), f32(rng.standard_normal(Q + 1)))


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- binary formats ---------------------------------------------------------


@settings(max_examples=20)
@given(st.integers(0, 5), st.integers(1, 9), st.integers(0, 1000))
def test_image_round_trip(count, N, seed):
    imgs = f32(np.random.default_rng(seed).standard_normal((count, N, N)))
    buf = formats.encode_images(ImageStack(imgs, 0.03))
    assert len(buf) == 24 + 4 * count * N * N
    back = formats.decode_images(buf)
    assert np.array_equal(back.images, imgs) and back.pixel_size == 0.03
    assert formats.encode_images(back) == buf


def test_empty_image_stack_is_header_only(tmp_path):
    formats.write_images(tmp_path / "e.hvimg", ImageStack(np.zeros((0, 5, 5)), 0.2))
    raw = (tmp_path / "e.hvimg").read_bytes()
    # 8-byte magic, u32 count, u32 N, f64 pixel size
    assert len(raw) == 24 and raw[:8] == b"HVIMG1\0\0"
    assert struct.unpack("<IId", raw[8:]) == (0, 5, 0.2)
    assert formats.read_images(tmp_path / "e.hvimg").count == 0


def test_image_layout_is_little_endian_row_major():
    imgs = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
    buf = formats.encode_images(ImageStack(imgs, 0.5))
    assert np.array_equal(np.frombuffer(buf[24:], "<f4"), np.arange(18))


def test_truncated_image_file_names_offset(tmp_path):
    buf = formats.encode_images(ImageStack(np.ones((2, 4, 4)), 0.25))
    with pytest.raises(formats.FormatError, match="offset 24"):
        formats.decode_images(buf[:-3])
    with pytest.raises(formats.FormatError, match="offset 8"):
        formats.decode_images(buf[:12])
    with pytest.raises(formats.FormatError, match="magic"):
        formats.decode_images(b"XXIMG1\0\0" + buf[8:])
    with pytest.raises(formats.FormatError, match="trailing"):
        formats.decode_images(buf + b"\0")


def test_circle_round_trip():
    grid = ShellGrid.make(4, 2.5)
    rng = np.random.default_rng(1)
    width = int(grid.circle_offsets[-1])
    data = f32(rng.standard_normal((3, width))) + 1j * f32(rng.standard_normal((3, width)))
    stack = CircleStack(grid, data, f32(rng.standard_normal(3)))
    buf = formats.encode_circles(stack)
    back = formats.decode_circles(buf)
    assert back.grid == grid and np.array_equal(back.data, data) and np.array_equal(back.dc, stack.dc)
    assert formats.encode_circles(back) == buf
    # entries of each shell run from m = -p(k) upward
    rec = np.frombuffer(buf[8 + 8 + 8 + 4 * 4 :], "<f4").reshape(3, -1)
    assert rec[0, 0] == np.float32(data[0, 0].real) and rec[0, 1] == np.float32(data[0, 0].imag)


@pytest.mark.parametrize("kind,Q", [(BasisKind.LEGENDRE, 0), (BasisKind.CHEBYSHEV, 2), (BasisKind.HAAR, 3)])
def test_volume_round_trip(tmp_path, kind, Q):
    hv = random_hv(ShellGrid.make(5, 2.0, 4), Q, kind)
    formats.write_volume(tmp_path / "v.hvvol", hv)
    back = formats.read_volume(tmp_path / "v.hvvol")
    assert back.grid == hv.grid and back.basis == hv.basis
    assert np.array_equal(back.data, hv.data) and np.array_equal(back.dc, hv.dc)
    assert formats.encode_volume(back) == (tmp_path / "v.hvvol").read_bytes()


def test_volume_k_mismatch_is_format_error():
    buf = bytearray(formats.encode_volume(random_hv(ShellGrid.make(4, 2.5))))
    buf[8:12] = struct.pack("<I", 5)  # header claims one shell more than the table holds
    with pytest.raises(formats.FormatError):
        formats.decode_volume(bytes(buf))
    buf[8:12] = struct.pack("<I", 3)
    with pytest.raises(formats.FormatError):
        formats.decode_volume(bytes(buf))


def test_unsupported_version():
    buf = bytearray(formats.encode_volume(random_hv(ShellGrid.make(2, 2.5))))
    buf[5] = ord("2")
    with pytest.raises(formats.UnsupportedVersionError, match="version"):
        formats.decode_volume(bytes(buf))


def test_unknown_basis_kind():
    buf = bytearray(formats.encode_volume(random_hv(ShellGrid.make(2, 2.5))))
    buf[16:20] = struct.pack("<I", 9)
    with pytest.raises(formats.FormatError, match="basis kind"):
        formats.decode_volume(bytes(buf))


def test_atomic_write_leaves_no_temporaries(tmp_path):
    formats.atomic_write_text(tmp_path / "a.txt", "hello")
    formats.atomic_write_text(tmp_path / "a.txt", "again")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "again"


def test_assignment_csv_round_trip(tmp_path):
    asg = [Assignment(i, Rotation(0.1 * i, 0.2, 0.3 + i), 1 / 3 + i / 10, 0.5 / (i + 1)) for i in range(4)]
    formats.write_assignments_csv(tmp_path / "a.csv", asg)
    tab = formats.read_assignments_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "image_index,alpha,beta,gamma,t,score"
    assert np.array_equal(tab["image_index"], np.arange(4))
    assert np.array_equal(tab["t"], [a.t for a in asg])  # repr keeps full precision
    assert np.array_equal(tab["gamma"], [a.rot.gamma for a in asg])


# --- configuration ----------------------------------------------------------


def test_default_config_round_trip():
    cfg = RunConfig()
    again = RunConfig.from_text(cfg.to_text())
    assert again == cfg
    assert again.marching() == cfg.marching()


def test_config_with_blob_table():
    text = """
    # two blobs
    phantom = ignored
    images = 10   # few
    blob.0.amplitude = 1.0
    blob.0.sigma = 0.05
    blob.0.c0 = 0.1, 0.0, 0.0
    blob.0.c1 = 0.0, 0.1, 0.0
    blob.1.amplitude = 0.5
    blob.1.sigma = 0.04
    march.iters = 7
    schedule =
    """
    cfg = RunConfig.from_text(text)
    ph = cfg.make_phantom()
    assert ph.n_blobs == 2 and cfg.images == 10
    assert np.allclose(ph.centers(1.0)[0], [0.1, 0.1, 0.0])
    assert all(s.iters == 7 for s in cfg.marching().stages)
    assert RunConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "colour = red",
        "images",
        "images = many",
        "blob.0.sigma = 0.1",
        "blob.1.amplitude = 1\nblob.1.sigma = 0.1",
        "N = 9",  # violates Nyquist for 12 shells of spacing 2.5
        "schedule = 3:1:10:0.5",
        "schedule = 3:0:10",
        "basis = fourier",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


# --- command line -----------------------------------------------------------


def test_unknown_flag_and_subcommand(capsys):
    assert main(["simulate", "--colour", "red", "--out", "x"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def _small_config(tmp_path):
    cfg = RunConfig(images=40, N=17, schedule="2:0:3:0.5, 4:0:3:0.4, 4:1:3:0.3", K=6, Q=1, directions=16, t_samples=5, final_directions=16, minibatch=8)
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    return path


def test_simulate_is_deterministic(tmp_path):
    cfg = _small_config(tmp_path)
    args = ["simulate", "--config", str(cfg), "--preset", "cat", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("images.hvimg", "labels.csv", "truth.hvvol"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)
    assert main(["simulate", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path / "c")]) == EXIT_OK
    assert sha(tmp_path / "a" / "images.hvimg") != sha(tmp_path / "c" / "images.hvimg")
    stack = formats.read_images(tmp_path / "a" / "images.hvimg")
    assert stack.count == 40 and stack.N == 17


def test_full_cli_pipeline(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    d = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--out", str(d)]) == EXIT_OK
    assert main(["preprocess", "--config", str(cfg), "--images", str(d / "images.hvimg"), "--out", str(d / "c.hvcir")]) == EXIT_OK
    assert len(formats.read_circles(d / "c.hvcir")) == 40
    for run in ("r1", "r2"):
        assert main(["reconstruct", "--config", str(cfg), "--circles", str(d / "c.hvcir"), "--out", str(d / run)]) == EXIT_OK
    for name in ("recon.hvvol", "assignments.csv", "diagnostics.csv"):
        assert sha(d / "r1" / name) == sha(d / "r2" / name)
    assert main(
        ["evaluate", "--truth", str(d / "truth.hvvol"), "--recon", str(d / "r1" / "recon.hvvol"), "--labels", str(d / "labels.csv"), "--assignments", str(d / "r1" / "assignments.csv"), "--out", str(d / "ev")]
    ) == EXIT_OK
    out = capsys.readouterr().out
    assert "spearman_abs" in out and "mean_shell_correlation" in out
    assert (d / "ev" / "mapping.csv").exists() and (d / "ev" / "histogram.csv").exists()


def test_evaluate_identical_volumes(tmp_path, capsys):
    hv = random_hv(ShellGrid.make(6, 2.5), 2)
    formats.write_volume(tmp_path / "v.hvvol", hv)
    assert main(["evaluate", "--truth", str(tmp_path / "v.hvvol"), "--recon", str(tmp_path / "v.hvvol"), "--out", str(tmp_path / "ev")]) == EXIT_OK
    line = [x for x in capsys.readouterr().out.splitlines() if x.startswith("mean_shell_correlation")][0]
    assert float(line.split(":")[1]) == pytest.approx(1.0, abs=1e-12)
    rows = (tmp_path / "ev" / "shell_correlation.csv").read_text().splitlines()
    assert len(rows) == 10 and all(v == "1.000000" for v in rows[1].split(",")[1:])


def test_export_homogeneous_volume(tmp_path):
    hv = random_hv(ShellGrid.make(3, 2.5), 0)
    formats.write_volume(tmp_path / "v.hvvol", hv)
    for t in ("0.5", "0.1"):
        assert main(["export-volume", "--volume", str(tmp_path / "v.hvvol"), "--t", t, "--n", "9", "--out", str(tmp_path / f"x{t}.raw")]) == EXIT_OK
    a, b = (tmp_path / "x0.5.raw").read_bytes(), (tmp_path / "x0.1.raw").read_bytes()
    assert a == b and len(a) == 4 * 9**3
    meta = (tmp_path / "x0.5.raw.txt").read_text()
    assert "shape = 9 9 9" in meta and "float32" in meta


def test_io_and_validation_exit_codes(tmp_path):
    missing = str(tmp_path / "none.hvvol")
    assert main(["export-volume", "--volume", missing, "--t", "0.5", "--out", str(tmp_path / "x")]) == EXIT_IO
    (tmp_path / "bad.hvvol").write_bytes(b"HVVOL1\0\0\1\0")
    assert main(["export-volume", "--volume", str(tmp_path / "bad.hvvol"), "--t", "0.5", "--out", str(tmp_path / "x")]) == EXIT_IO
    formats.write_volume(tmp_path / "v.hvvol", random_hv(ShellGrid.make(2, 2.5), 0))
    assert main(["export-volume", "--volume", str(tmp_path / "v.hvvol"), "--t", "1.5", "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert main(["simulate", "--images", "0", "--out", str(tmp_path / "s")]) == EXIT_VALIDATION


def test_selftest_passes(capsys):
    assert main(["selftest"]) == EXIT_OK
    assert "selftest: ok" in capsys.readouterr().out
