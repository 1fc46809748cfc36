"""Product quantization of key caches.

Splits the head dimension into m contiguous subspaces, learns a K-entry
codebook per subspace with Lloyd's k-means (k-means++ seeding), and
encodes each key as m uint8 centroid indices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

CODEBOOK_MAGIC = b"LKCB"
CODEBOOK_VERSION = 1


@dataclass(frozen=True)
class PQConfig:
    num_subspaces: int = 4
    num_centroids: int = 256
    kmeans_iters: int = 25
    kmeans_seed: int = 0
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.num_subspaces < 1:
            raise ValueError("num_subspaces must be >= 1")
        if not 1 <= self.num_centroids <= 256:
            raise ValueError("num_centroids must be in [1, 256] (codes are uint8)")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass(frozen=True)
class Codebook:
    """Per-subspace centroids, shape [m, K, d_sub]."""

    centroids: np.ndarray
    trained_on: int
    config: PQConfig
    # per-subspace k-means objective after each iteration, for diagnostics
    objective_history: tuple = ()

    @property
    def num_subspaces(self) -> int:
        return self.centroids.shape[0]

    @property
    def num_centroids(self) -> int:
        return self.centroids.shape[1]

    @property
    def subspace_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def head_dim(self) -> int:
        return self.num_subspaces * self.subspace_dim


@dataclass(frozen=True)
class CompressedKeyCache:
    """uint8 code indices, shape [H, L, m]."""

    codes: np.ndarray
    codebook_id: int

    def __post_init__(self):
        if self.codes.dtype != np.uint8:
            raise ValueError("codes must be uint8")


def _assign(points: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per point (squared Euclidean, lowest index on ties)."""
    # ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2; ||p||^2 constant per row
    d2 = (
        np.sum(centroids**2, axis=1)[None, :]
        - 2.0 * points @ centroids.T
        + np.sum(points**2, axis=1)[:, None]
    )
    codes = np.argmin(d2, axis=1)
    return codes, np.maximum(d2[np.arange(len(points)), codes], 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]), dtype=points.dtype)
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all points already covered (fewer distinct points than k)
            centroids[j:] = centroids[0]
            break
        probs = d2 / total
        idx = rng.choice(n, p=probs)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, k: int, iters: int, tol: float, rng: np.random.Generator):
    """Lloyd's k-means on one subspace; returns (centroids, objective history)."""
    centroids = _kmeanspp_init(points, k, rng)
    history = []
    prev = np.inf
    for _ in range(iters):
        codes, d2 = _assign(points, centroids)
        # empty-cluster repair: steal the point farthest from its centroid
        counts = np.bincount(codes, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if len(empties) > 0:
            order = np.argsort(-d2, kind="stable")
            taken = 0
            for e in empties:
                while taken < len(order) and counts[codes[order[taken]]] <= 1:
                    taken += 1
                if taken >= len(order):
                    break
                src = order[taken]
                counts[codes[src]] -= 1
                codes[src] = e
                counts[e] = 1
                d2[src] = 0.0
                taken += 1
        sums = np.zeros((k, points.shape[1]), dtype=np.float64)
        np.add.at(sums, codes, points)
        counts = np.bincount(codes, minlength=k)
        nonempty = counts > 0
        centroids = centroids.astype(np.float64)
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        _, d2 = _assign(points, centroids)
        obj = float(d2.sum())
        history.append(obj)
        if prev - obj <= tol * max(prev, 1e-30) and np.isfinite(prev):
            break
        prev = obj
    return centroids, history


def train_codebook(calib_keys: np.ndarray, config: PQConfig) -> Codebook:
    """Learn per-subspace codebooks from [N, d_k] calibration keys."""
    calib_keys = np.asarray(calib_keys, dtype=np.float64)
    if calib_keys.ndim != 2:
        raise ValueError("calibration keys must be [N, d_k]")
    if not np.isfinite(calib_keys).all():
        raise ValueError("non-finite calibration key")
    n, d_k = calib_keys.shape
    m, k = config.num_subspaces, config.num_centroids
    if d_k % m != 0:
        raise ValueError(f"subspace mismatch: m={m} does not divide d_k={d_k}")
    if n < k:
        raise ValueError(f"insufficient calibration data: {n} vectors < K={k}")
    d_sub = d_k // m
    rng = np.random.default_rng(config.kmeans_seed)
    centroids = np.empty((m, k, d_sub), dtype=np.float64)
    histories = []
    for i in range(m):
        sub = calib_keys[:, i * d_sub : (i + 1) * d_sub]
        centroids[i], hist = _lloyd(
            sub, k, config.kmeans_iters, config.tolerance, rng
        )
        histories.append(tuple(hist))
    return Codebook(
        centroids=centroids.astype(np.float32),
        trained_on=n,
        config=config,
        objective_history=tuple(histories),
    )


def encode_keys(keys: np.ndarray, codebook: Codebook) -> CompressedKeyCache:
    """Quantize [H, L, d_k] keys to [H, L, m] uint8 codes."""
    keys = np.asarray(keys)
    if keys.ndim != 3 or keys.shape[2] != codebook.head_dim:
        raise ValueError(
            f"key shape {keys.shape} incompatible with codebook d_k={codebook.head_dim}"
        )
    if not np.isfinite(keys).all():
        raise ValueError("non-finite key entry")
    h, l, _ = keys.shape
    m, d_sub = codebook.num_subspaces, codebook.subspace_dim
    flat = keys.reshape(h * l, m, d_sub).astype(np.float64)
    codes = np.empty((h * l, m), dtype=np.uint8)
    for i in range(m):
        c, _ = _assign(flat[:, i, :], codebook.centroids[i].astype(np.float64))
        codes[:, i] = c
    return CompressedKeyCache(codes=codes.reshape(h, l, m), codebook_id=id(codebook))


def reconstruct(cache: CompressedKeyCache, codebook: Codebook) -> np.ndarray:
    """Expand codes back to [H, L, d_k] by concatenating selected centroids."""
    codes = cache.codes
    if codes.max(initial=0) >= codebook.num_centroids:
        raise ValueError("corrupt code: index out of codebook range")
    h, l, m = codes.shape
    if m != codebook.num_subspaces:
        raise ValueError("code width does not match codebook subspace count")
    parts = [codebook.centroids[i][codes[:, :, i]] for i in range(m)]
    return np.concatenate(parts, axis=-1)


def compression_stats(
    d_k: int, m: int, K: int, baseline_bytes_per_dim: float = 2.0
) -> dict:
    """Per-token storage accounting for PQ codes vs an uncompressed baseline."""
    if K > 256:
        raise ValueError("K must be <= 256 for uint8 codes")
    baseline = d_k * baseline_bytes_per_dim
    compressed = float(m)
    return {
        "bytes_per_token_baseline": baseline,
        "bytes_per_token_compressed": compressed,
        "ratio": baseline / compressed,
        # codebook stored as FP16 centroids
        "codebook_bytes": m * K * (d_k // m) * 2,
    }


def save_codebook(codebook: Codebook, path) -> None:
    """Serialize a codebook (magic LKCB, f32 centroids)."""
    m, k, d_sub = codebook.centroids.shape
    with open(path, "wb") as f:
        f.write(CODEBOOK_MAGIC)
        f.write(struct.pack("<IIII", CODEBOOK_VERSION, m, k, d_sub))
        f.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())
        f.write(struct.pack("<Q", codebook.trained_on))


def load_codebook(path) -> Codebook:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CODEBOOK_MAGIC:
        raise ValueError(f"bad magic {raw[:4]!r}")
    version, m, k, d_sub = struct.unpack_from("<IIII", raw, 4)
    if version != CODEBOOK_VERSION:
        raise ValueError(f"unsupported codebook version {version}")
    off = 4 + 16
    count = m * k * d_sub
    if len(raw) != off + count * 4 + 8:
        raise ValueError("codebook payload length mismatch")
    centroids = (
        np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        .reshape(m, k, d_sub)
        .copy()
    )
    (trained_on,) = struct.unpack_from("<Q", raw, off + count * 4)
    config = replace(PQConfig(), num_subspaces=m, num_centroids=k)
    return Codebook(centroids=centroids, trained_on=trained_on, config=config)
