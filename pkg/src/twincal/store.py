"""Binary frame store with a plain-text metadata sidecar.

Layout, little-endian::

    offset  size  field
    0       4     magic b"TWBF"
    4       2     version (uint16)
    6       2     dtype code: 0 = uint32 counts, 1 = float32
    8       4     width (uint32)
    12      4     height (uint32)
    16      4     n_frames (uint32)
    20      16    reserved, zero
    36      ...   frames, each row-major
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .scene import FrameStack

MAGIC = b"TWBF"
VERSION = 1
HEADER = struct.Struct("<4sHHIII16s")
DTYPES = {0: np.dtype("<u4"), 1: np.dtype("<f4")}


class StoreError(ValidationError):
    """Malformed or inconsistent frame store."""


def _atomic_write(path: Path, payload) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in payload:
                fh.write(chunk)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def choose_dtype(data: np.ndarray) -> int:
    """uint32 when every value is a representable non-negative integer, else float32."""
    if data.size and np.all(data >= 0) and np.all(data <= np.iinfo(np.uint32).max) and np.all(data == np.round(data)):
        return 0
    return 1


def write_store(frames: FrameStack, path, dtype: int | None = None) -> None:
    """Write ``frames`` atomically.

    Float data is stored as float32; values not exactly representable are
    rejected rather than silently rounded.
    """
    data = frames.data
    code = choose_dtype(data) if dtype is None else dtype
    if code not in DTYPES:
        raise StoreError(f"unknown dtype code {code}")
    out = data.astype(DTYPES[code])
    if not np.array_equal(out.astype(float), data):
        raise StoreError(f"frame values are not exactly representable as {DTYPES[code].name}")
    n, h, w = data.shape
    header = HEADER.pack(MAGIC, VERSION, code, w, h, n, bytes(16))
    _atomic_write(Path(path), [header, out.tobytes(order="C")])


def read_store(path) -> FrameStack:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise StoreError(f"{path}: file is {len(raw)} bytes, shorter than the {HEADER.size}-byte header (offset 0)")
    magic, version, code, w, h, n, reserved = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise StoreError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise StoreError(f"{path}: unsupported version {version} at offset 4")
    if code not in DTYPES:
        raise StoreError(f"{path}: unknown dtype code {code} at offset 6")
    if reserved != bytes(16):
        raise StoreError(f"{path}: reserved header bytes are not zero at offset 20")
    expected = w * h * n * DTYPES[code].itemsize
    got = len(raw) - HEADER.size
    if got != expected:
        raise StoreError(
            f"{path}: payload length {got} bytes differs from expected {expected} (mismatch at offset {HEADER.size + min(got, expected)})"
        )
    data = np.frombuffer(raw, dtype=DTYPES[code], offset=HEADER.size).reshape(n, h, w)
    if code == 1:
        bad = np.flatnonzero(~np.isfinite(data))
        if bad.size:
            off = HEADER.size + int(bad[0]) * 4
            raise StoreError(f"{path}: non-finite value at offset {off}")
    return FrameStack(data.astype(float))


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta")


def write_meta(path, meta: dict) -> None:
    """``key=value`` lines, sorted by key."""
    lines = []
    for k in sorted(meta):
        v = meta[k]
        if "=" in str(k) or "\n" in str(k) or "\n" in str(v):
            raise StoreError(f"metadata entry {k!r} cannot be written as key=value")
        lines.append(f"{k}={v}\n")
    _atomic_write(sidecar_path(path), ["".join(lines).encode()])


def read_meta(path) -> dict:
    p = sidecar_path(path)
    out = {}
    for i, line in enumerate(p.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise StoreError(f"{p}:{i}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
