"""Writers for the engine's on-disk formats.

The importer deliberately does not link against the engine: the manifest
(.sacnn) and tensor container (.sact) layouts are re-implemented here from
the format contract. Serialization is byte-deterministic (sorted keys, fixed
separators) so converting the same source twice yields identical files.
"""

from __future__ import annotations

import base64
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import SourceFormatError

MANIFEST_VERSION = 1
_SACT_MAGIC = b"SACT"
_SACT_DTYPE_CODES = {np.dtype(np.int8): 0, np.dtype(np.int32): 1}
_SACT_DTYPES = {0: np.int8, 1: np.int32}


def derive_multiplier(r: float) -> tuple[int, int]:
    """Split a positive ratio r <= 2 into (M, s) with M in [2**30, 2**31).

    The engine requantizes accumulators as (acc * M) >> (31 + s) with
    round-half-up, so r is represented as M * 2**-(31 + s). M is rounded to
    nearest; a carry into 2**31 normalizes to (2**30, s - 1).
    """
    if not (0.0 < r <= 2.0) or not math.isfinite(r):
        raise SourceFormatError(f"requantization ratio must be in (0, 2], got {r!r}")
    frac, exp = math.frexp(r)
    m = int(math.floor(frac * (1 << 31) + 0.5))
    s = -exp
    if m == 1 << 31:
        m = 1 << 30
        s -= 1
    if s > 31:
        raise SourceFormatError(f"ratio {r!r} too small to represent (shift {s} > 31)")
    return m, s


def b64_bytes(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")


def write_manifest(doc: dict, path: str | Path) -> None:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="ascii")


def write_tensor(arr: np.ndarray, path: str | Path) -> None:
    dtype = np.dtype(arr.dtype)
    if dtype not in _SACT_DTYPE_CODES:
        raise SourceFormatError(f"unsupported tensor dtype {arr.dtype}, need int8 or int32")
    head = _SACT_MAGIC + struct.pack("<BBB", MANIFEST_VERSION, _SACT_DTYPE_CODES[dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr).astype(dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(head + dims + payload)


def read_tensor(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 7 or raw[:4] != _SACT_MAGIC:
        raise SourceFormatError(f"{path}: not a SACT tensor file")
    version, dtype_code, ndim = struct.unpack_from("<BBB", raw, 4)
    if version != MANIFEST_VERSION or dtype_code not in _SACT_DTYPES:
        raise SourceFormatError(f"{path}: unsupported tensor header")
    dims = struct.unpack_from(f"<{ndim}I", raw, 7)
    dtype = np.dtype(_SACT_DTYPES[dtype_code])
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    data = np.frombuffer(raw, dtype=dtype.newbyteorder("<"), count=count, offset=7 + 4 * ndim)
    return data.astype(dtype).reshape(dims)
