"""File formats: Netpbm images, the SPF1 spin-field container, CSV and atomic writes.

Everything here is plain byte handling so files stay inspectable and
round-trips are bit-exact where that matters.

SPF1 layout::

    b"SPF1" | height u32 LE | width u32 LE | H*W*3 float64 LE (Sx, Sy, Sz per site)
"""

from __future__ import annotations

import csv
import io
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from .field import FieldError, as_spin_field

SPIN_MAGIC = b"SPF1"
SPIN_HEADER = struct.Struct("<4sII")

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


class FormatError(ValueError):
    """Malformed or truncated file contents."""


# --- atomic writes -----------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# --- Netpbm -----------------------------------------------------------------------


def _header(data: bytes, magic_options, count: int):
    """Parse the magic plus ``count`` integer fields; return (magic, values, payload offset)."""
    if data[:2] not in magic_options:
        raise FormatError(f"unsupported magic {data[:2]!r}")
    pos, values = 2, []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError("truncated header")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise FormatError(f"bad header field {m.group(1)!r}") from None
        pos = m.end()
    return data[:2], values, pos


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Return ``(raw integer samples (H, W), maxval)`` of a P2 or P5 file."""
    magic, (w, h, maxval), pos = _header(data, (b"P2", b"P5"), 3)
    if w < 1 or h < 1:
        raise FormatError(f"bad dimensions {w}x{h}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535")
    if magic == b"P5":
        # exactly one whitespace byte separates the header from binary data
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise FormatError("missing separator before binary payload")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        if len(data) - pos < need:
            raise FormatError(f"truncated payload: {len(data) - pos} of {need} bytes")
        samples = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.int64)
    else:
        body = re.sub(rb"#[^\n]*", b" ", data[pos:]).split()
        if len(body) < w * h:
            raise FormatError(f"truncated payload: {len(body)} of {w * h} samples")
        try:
            samples = np.array([int(t) for t in body[:w * h]], dtype=np.int64)
        except ValueError:
            raise FormatError("non-integer sample in P2 payload") from None
    if samples.size and samples.max() > maxval:
        raise FormatError("sample exceeds maxval")
    return samples.reshape(h, w), maxval


def read_pgm(path) -> np.ndarray:
    """Grayscale image scaled to ``[0, 1]`` (sample / maxval)."""
    samples, maxval = decode_pgm(Path(path).read_bytes())
    return samples.astype(np.float64) / maxval


def encode_pgm(img, maxval: int = 255) -> bytes:
    """Binary P5 from a ``[0, 1]`` image; values are clipped then rounded."""
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in 1..65535")
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise FieldError(f"expected a 2-D image, got shape {a.shape}")
    q = np.rint(np.clip(a, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    head = b"P5\n%d %d\n%d\n" % (a.shape[1], a.shape[0], maxval)
    return head + q.astype(dtype).tobytes()


def write_pgm(path, img, maxval: int = 255) -> None:
    atomic_write_bytes(path, encode_pgm(img, maxval))


def encode_ppm(rgb) -> bytes:
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ValueError("expected a (H, W, 3) uint8 array")
    return b"P6\n%d %d\n255\n" % (a.shape[1], a.shape[0]) + a.tobytes()


def write_ppm(path, rgb) -> None:
    atomic_write_bytes(path, encode_ppm(rgb))


def load_image(path) -> np.ndarray:
    """PGM (P2/P5) or a ``.npy`` array of raw floats."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        try:
            a = np.load(path, allow_pickle=False)
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        return np.asarray(a, dtype=np.float64)
    return read_pgm(path)


# --- SPF1 spin fields ---------------------------------------------------------------


def spin_field_to_bytes(s) -> bytes:
    s = as_spin_field(s)
    h, w = s.shape[:2]
    return SPIN_HEADER.pack(SPIN_MAGIC, h, w) + s.astype("<f8").tobytes()


def spin_field_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < SPIN_HEADER.size:
        raise FormatError("truncated SPF1 header")
    magic, h, w = SPIN_HEADER.unpack_from(data)
    if magic != SPIN_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    need = SPIN_HEADER.size + 24 * h * w
    if len(data) != need:
        raise FormatError(f"SPF1 payload is {len(data)} bytes, expected {need}")
    return np.frombuffer(data, dtype="<f8", offset=SPIN_HEADER.size).astype(np.float64).reshape(h, w, 3)


def write_spin_field(path, s) -> None:
    atomic_write_bytes(path, spin_field_to_bytes(s))


def read_spin_field(path) -> np.ndarray:
    return spin_field_from_bytes(Path(path).read_bytes())


# --- CSV ----------------------------------------------------------------------------------


def csv_text(header, rows) -> str:
    """CSV with ``repr``-exact floats so values survive a text round trip."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))
