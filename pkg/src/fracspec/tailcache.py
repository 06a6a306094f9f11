"""On-disk cache for the exterior-tail diagonal of the 2D operator.

File layout: 4-byte magic ``FTL1``, s as float64, n as uint32, 8 zero bytes
of padding (24 bytes in all), then n*n little-endian float64 values.  The
cache directory comes from the FRACSPEC_CACHE_DIR environment variable; with
the variable unset nothing is read or written.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FTL1"
HEADER = struct.Struct("<4sdI8x")
assert HEADER.size == 24
ENV_VAR = "FRACSPEC_CACHE_DIR"


class TailCacheError(ValueError):
    pass


def cache_dir() -> Path | None:
    d = os.environ.get(ENV_VAR)
    return Path(d) if d else None


def cache_path(directory: Path, s: float, bounds, n: int) -> Path:
    flat = [float(v) for pair in bounds for v in pair]
    tag = "_".join(v.hex() for v in [float(s), *flat])
    return Path(directory) / f"tail_{tag}_n{n}.ftl"


def write_tail(path: Path, s: float, n: int, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8").ravel()
    if values.size != n * n:
        raise TailCacheError(f"expected {n * n} tail values, got {values.size}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, float(s), int(n)))
        fh.write(values.tobytes())
    os.replace(tmp, path)


def read_tail(path: Path, s: float | None = None, n: int | None = None) -> tuple[float, int, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TailCacheError(f"{path}: truncated header")
    magic, s_file, n_file = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TailCacheError(f"{path}: bad magic {magic!r}")
    if s is not None and s_file != float(s):
        raise TailCacheError(f"{path}: s mismatch ({s_file} != {s})")
    if n is not None and n_file != n:
        raise TailCacheError(f"{path}: n mismatch ({n_file} != {n})")
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if body.size != n_file * n_file:
        raise TailCacheError(f"{path}: expected {n_file * n_file} values, found {body.size}")
    return s_file, n_file, body.reshape(n_file, n_file).astype(float)


def cached_tail(s: float, bounds, n: int, compute):
    """Return the tail table for (s, bounds, n), computing and storing on a miss."""
    d = cache_dir()
    if d is None:
        return compute()
    path = cache_path(d, s, bounds, n)
    if path.exists():
        try:
            return read_tail(path, s, n)[2]
        except TailCacheError:
            pass  # corrupt entry: recompute and overwrite
    values = compute()
    write_tail(path, s, n, values)
    return values
