"""Little-endian binary containers for image stacks, circle stacks and hyper-volumes.

All three start with an 8-byte magic whose sixth byte is the format
version.  Payloads are float32 / complex64 (interleaved float32 re, im).
Writes go to a temporary file in the destination directory and are renamed
into place, so a reader never sees a partial file.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .hypervolume import HyperVolumeCoeffs, ShellGrid
from .imaging import CircleStack, ImageStack
from .parambasis import BasisKind, ParamBasisSpec

MAGIC_IMG = b"HVIMG1\0\0"
MAGIC_CIR = b"HVCIR1\0\0"
MAGIC_VOL = b"HVVOL1\0\0"
SUPPORTED_VERSION = ord("1")


class FormatError(ValueError):
    """Malformed or truncated file; the message names the byte offset."""


class UnsupportedVersionError(FormatError):
    pass


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated at byte offset {self.pos} while reading {field} ({n} bytes needed, {len(self.buf) - self.pos} available)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, field: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), field))

    def array(self, dtype: str, count: int, field: str) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(dt.itemsize * count, field), dtype=dt, count=count)

    def magic(self, expected: bytes) -> None:
        got = self.take(8, "magic")
        if got[:5] != expected[:5] or got[6:] != expected[6:]:
            raise FormatError(f"{self.what}: bad magic {got!r} at byte offset 0 (expected {expected!r})")
        if got[5] != SUPPORTED_VERSION:
            raise UnsupportedVersionError(f"{self.what}: unsupported version byte {chr(got[5])!r} at byte offset 5")

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{self.what}: {len(self.buf) - self.pos} unexpected trailing bytes at byte offset {self.pos}")


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# HVIMG1


def encode_images(stack: ImageStack) -> bytes:
    count, N = stack.images.shape[:2]
    head = MAGIC_IMG + struct.pack("<IId", count, N, float(stack.pixel_size))
    return head + np.ascontiguousarray(stack.images, dtype="<f4").tobytes()


def decode_images(buf: bytes, what: str = "HVIMG1") -> ImageStack:
    r = _Reader(buf, what)
    r.magic(MAGIC_IMG)
    count, N, h = r.unpack("IId", "header")
    data = r.array("f4", count * N * N, "image data").reshape(count, N, N)
    r.done()
    return ImageStack(data.astype(np.float64), h)


def write_images(path, stack: ImageStack) -> None:
    atomic_write_bytes(path, encode_images(stack))


def read_images(path) -> ImageStack:
    return decode_images(_read(path), str(path))


# ---------------------------------------------------------------------------
# HVCIR1


def _grid_header(grid: ShellGrid) -> bytes:
    return struct.pack("<d", float(grid.delta_omega)) + np.asarray(grid.p, dtype="<u4").tobytes()


def _read_grid(r: _Reader, K: int) -> ShellGrid:
    (dw,) = r.unpack("d", "delta_omega")
    p = r.array("u4", K, "p(k) table")
    try:
        return ShellGrid(K, dw, tuple(int(v) for v in p))
    except ValueError as exc:
        raise FormatError(f"{r.what}: invalid shell grid in header ending at byte offset {r.pos}: {exc}") from None


def encode_circles(stack: CircleStack) -> bytes:
    grid = stack.grid
    head = MAGIC_CIR + struct.pack("<II", len(stack), grid.K) + _grid_header(grid)
    width = int(grid.circle_offsets[-1])
    rec = np.zeros((len(stack), 2 * width + 1), dtype="<f4")
    rec[:, 0 : 2 * width : 2] = stack.data.real
    rec[:, 1 : 2 * width : 2] = stack.data.imag
    rec[:, -1] = stack.dc
    return head + rec.tobytes()


def decode_circles(buf: bytes, what: str = "HVCIR1") -> CircleStack:
    r = _Reader(buf, what)
    r.magic(MAGIC_CIR)
    count, K = r.unpack("II", "header")
    grid = _read_grid(r, K)
    width = int(grid.circle_offsets[-1])
    rec = r.array("f4", count * (2 * width + 1), "circle data").reshape(count, 2 * width + 1)
    r.done()
    data = rec[:, 0 : 2 * width : 2].astype(np.float64) + 1j * rec[:, 1 : 2 * width : 2].astype(np.float64)
    return CircleStack(grid, data, rec[:, -1].astype(np.float64))


def write_circles(path, stack: CircleStack) -> None:
    atomic_write_bytes(path, encode_circles(stack))


def read_circles(path) -> CircleStack:
    return decode_circles(_read(path), str(path))


# ---------------------------------------------------------------------------
# HVVOL1


def encode_volume(hv: HyperVolumeCoeffs) -> bytes:
    grid = hv.grid
    head = MAGIC_VOL + struct.pack("<III", grid.K, hv.Q, int(hv.basis.kind)) + _grid_header(grid)
    flat = hv.data.reshape(-1)
    body = np.empty(2 * flat.size, dtype="<f4")
    body[0::2], body[1::2] = flat.real, flat.imag
    return head + body.tobytes() + np.asarray(hv.dc, dtype="<f4").tobytes()


def decode_volume(buf: bytes, what: str = "HVVOL1") -> HyperVolumeCoeffs:
    r = _Reader(buf, what)
    r.magic(MAGIC_VOL)
    K, Q, kind = r.unpack("III", "header")
    try:
        basis = ParamBasisSpec(BasisKind(kind), Q)
    except ValueError:
        raise FormatError(f"{what}: unknown basis kind {kind} at byte offset 16") from None
    grid = _read_grid(r, K)
    body = r.array("f4", 2 * (Q + 1) * grid.size, "coefficients")
    dc = r.array("f4", Q + 1, "zero-frequency terms")
    r.done()
    data = (body[0::2].astype(np.float64) + 1j * body[1::2].astype(np.float64)).reshape(Q + 1, grid.size)
    return HyperVolumeCoeffs(grid, basis, data, dc.astype(np.float64))


def write_volume(path, hv: HyperVolumeCoeffs) -> None:
    atomic_write_bytes(path, encode_volume(hv))


def read_volume(path) -> HyperVolumeCoeffs:
    return decode_volume(_read(path), str(path))


# ---------------------------------------------------------------------------
# CSV tables


def write_assignments_csv(path, assignments) -> None:
    """Columns image_index, alpha, beta, gamma, t, score (full float precision)."""
    lines = ["image_index,alpha,beta,gamma,t,score"]
    for a in assignments:
        al, be, ga = a.rot.angles
        lines.append(f"{a.image_index},{al!r},{be!r},{ga!r},{a.t!r},{a.score!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_assignments_csv(path) -> dict[str, np.ndarray]:
    return _read_table(path, ["image_index", "alpha", "beta", "gamma", "t", "score"])


def write_labels_csv(path, eulers: np.ndarray, ts: np.ndarray) -> None:
    lines = ["image_index,alpha,beta,gamma,t"]
    for i, (e, t) in enumerate(zip(eulers, ts)):
        lines.append(f"{i},{float(e[0])!r},{float(e[1])!r},{float(e[2])!r},{float(t)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path) -> dict[str, np.ndarray]:
    return _read_table(path, ["image_index", "alpha", "beta", "gamma", "t"])


def _read_table(path, columns: list[str]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(columns) - set(rows[0]):
        raise FormatError(f"{path}: missing columns {sorted(set(columns) - set(rows[0]))}")
    out = {c: np.array([float(r[c]) for r in rows]) for c in columns}
    out["image_index"] = out["image_index"].astype(int)
    return out
