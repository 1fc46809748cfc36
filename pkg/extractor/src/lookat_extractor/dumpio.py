"""Writer for the LKAT attention-dump file format.

Kept self-contained so the extractor couples to the toolkit only through
the on-disk format: little-endian, magic "LKAT", version 1, f32 payload
of Q then K then V in [H, L, d_k] row-major order.
"""

from __future__ import annotations

import struct

import numpy as np


def write_dump(path, queries, keys, values, source_tag: str, causal: bool = True) -> None:
    q = np.ascontiguousarray(queries, dtype="<f4")
    k = np.ascontiguousarray(keys, dtype="<f4")
    v = np.ascontiguousarray(values, dtype="<f4")
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise ValueError(f"expected matching [H, L, d_k] tensors, got {q.shape}")
    for name, t in (("Q", q), ("K", k), ("V", v)):
        if not np.isfinite(t).all():
            raise ValueError(f"non-finite entry in {name}")
    h, l, d_k = q.shape
    tag = source_tag.encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIBB6x", b"LKAT", 1, 0, int(causal)))
        f.write(struct.pack("<III", h, l, d_k))
        f.write(struct.pack("<I", len(tag)))
        f.write(tag)
        for t in (q, k, v):
            f.write(t.tobytes())
