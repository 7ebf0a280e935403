"""GIQF writer.

The interchange format shared with the scoring tools: magic ``GIQF``,
u32 version, u64 row count, u32 dim, u32 id-block length, the ids as
newline-separated UTF-8, then count x dim little-endian float32 values
in row-major order.  Implemented here independently so this package
has no dependency on the consumer.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"GIQF"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def write_giqf(path, ids: Sequence[str], data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("feature data must be a 2-d array")
    if len(ids) != data.shape[0]:
        raise ValueError("id count does not match row count")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    for image_id in ids:
        if "\n" in image_id:
            raise ValueError(f"id contains a newline: {image_id!r}")
    if not np.isfinite(data).all():
        raise ValueError("feature data contains non-finite values")

    id_block = "\n".join(ids).encode("utf-8") if ids else b""
    header = _HEADER.pack(MAGIC, VERSION, data.shape[0], data.shape[1], len(id_block))
    with open(path, "wb") as f:
        f.write(header)
        f.write(id_block)
        f.write(data.tobytes())
