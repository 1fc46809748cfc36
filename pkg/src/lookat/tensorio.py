"""Attention dump I/O and synthetic data generation.

A dump holds the per-head query/key/value tensors of one attention layer
for one text sample, in a small self-describing binary format (magic
``LKAT``). Synthetic dumps make the rest of the toolkit usable without a
model in the loop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LKAT"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIBB6x")  # magic, version, dtype code, causal flag, reserved
_DIMS = struct.Struct("<III")


class DumpFormatError(ValueError):
    """Raised when a dump file is malformed or violates an invariant."""


@dataclass(frozen=True)
class AttentionDump:
    """Q/K/V tensors for one layer: shape [H, L, d_k] each."""

    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    source_tag: str = ""
    causal: bool = True

    def __post_init__(self):
        q, k, v = self.queries, self.keys, self.values
        if q.ndim != 3:
            raise DumpFormatError(f"expected [H, L, d_k] tensors, got ndim={q.ndim}")
        if not (q.shape == k.shape == v.shape):
            raise DumpFormatError(
                f"Q/K/V shapes differ: {q.shape} vs {k.shape} vs {v.shape}"
            )
        if min(q.shape) < 1:
            raise DumpFormatError(f"all dimensions must be >= 1, got {q.shape}")
        for name, t in (("Q", q), ("K", k), ("V", v)):
            if not np.isfinite(t).all():
                raise DumpFormatError(f"non-finite entry in {name}")

    @property
    def head_count(self) -> int:
        return self.queries.shape[0]

    @property
    def seq_len(self) -> int:
        return self.queries.shape[1]

    @property
    def head_dim(self) -> int:
        return self.queries.shape[2]

    def truncated(self, length: int) -> "AttentionDump":
        """First `length` token positions, tag preserved."""
        if not 1 <= length <= self.seq_len:
            raise ValueError(f"length {length} outside [1, {self.seq_len}]")
        return AttentionDump(
            queries=self.queries[:, :length],
            keys=self.keys[:, :length],
            values=self.values[:, :length],
            source_tag=self.source_tag,
            causal=self.causal,
        )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic synthetic dump.

    distribution is "isotropic-gaussian" or "clustered-gaussian"; the
    clustered variant draws keys around `num_clusters` random centers so
    codebook learning has real structure to exploit.
    """

    H: int = 12
    L: int = 512
    d_k: int = 64
    distribution: str = "clustered-gaussian"
    num_clusters: int = 64
    spread: float = 0.3
    seed: int = 0
    causal: bool = True
    tag: str = field(default="")

    def __post_init__(self):
        if min(self.H, self.L, self.d_k) < 1:
            raise ValueError("H, L, d_k must be >= 1")
        if self.distribution not in ("isotropic-gaussian", "clustered-gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if not self.spread > 0:
            raise ValueError("spread must be > 0")


def save_dump(dump: AttentionDump, path) -> None:
    """Write `dump` to `path` in the LKAT binary format."""
    tag = dump.source_tag.encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, int(dump.causal)))
        f.write(_DIMS.pack(dump.head_count, dump.seq_len, dump.head_dim))
        f.write(struct.pack("<I", len(tag)))
        f.write(tag)
        for t in (dump.queries, dump.keys, dump.values):
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_dump(path) -> AttentionDump:
    """Read a dump written by save_dump, validating header and payload."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size + _DIMS.size + 4:
        raise DumpFormatError("file too short for header")
    magic, version, dtype_code, causal = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DumpFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DumpFormatError(f"unsupported version {version}")
    if dtype_code != DTYPE_F32:
        raise DumpFormatError(f"unsupported dtype code {dtype_code}")
    off = _HEADER.size
    H, L, d_k = _DIMS.unpack_from(raw, off)
    off += _DIMS.size
    (tag_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + tag_len:
        raise DumpFormatError("truncated tag block")
    tag = raw[off : off + tag_len].decode("utf-8")
    off += tag_len
    count = H * L * d_k
    expected = off + 3 * count * 4
    if len(raw) != expected:
        raise DumpFormatError(
            f"payload length mismatch: have {len(raw)} bytes, expected {expected}"
        )
    tensors = []
    for _ in range(3):
        t = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(H, L, d_k)
        off += count * 4
        tensors.append(t.copy())
    return AttentionDump(
        queries=tensors[0],
        keys=tensors[1],
        values=tensors[2],
        source_tag=tag,
        causal=bool(causal),
    )


def generate_synthetic(spec: SynthSpec) -> AttentionDump:
    """Deterministic synthetic dump from `spec` (pure function of the spec)."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.H, spec.L, spec.d_k)
    if spec.distribution == "isotropic-gaussian":
        q = rng.standard_normal(shape)
        k = rng.standard_normal(shape)
        v = rng.standard_normal(shape)
    else:
        centers = rng.standard_normal((spec.num_clusters, spec.d_k))
        q = rng.standard_normal(shape)
        v = rng.standard_normal(shape)
        assignment = rng.integers(0, spec.num_clusters, size=(spec.H, spec.L))
        k = centers[assignment] + spec.spread * rng.standard_normal(shape)
    tag = spec.tag or f"synthetic-{spec.distribution}-seed{spec.seed}"
    return AttentionDump(
        queries=q.astype(np.float32),
        keys=k.astype(np.float32),
        values=v.astype(np.float32),
        source_tag=tag,
        causal=spec.causal,
    )
