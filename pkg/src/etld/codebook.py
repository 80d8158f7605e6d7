"""Visual-word codebook: k-means training, nearest-word quantization and
codeword count histograms."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.cluster import kmeans_plusplus

from .errors import DataError, TrainingError

CODEBOOK_MAGIC = b"ETLDCB1"


@dataclass(eq=False)
class Codebook:
    centroids: np.ndarray  # (K, d)
    seed: int = 0
    distortion: list = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise TrainingError("codebook needs at least two centroids")
        if not np.all(np.isfinite(self.centroids)):
            raise TrainingError("non-finite centroid")
        # transposed layout and squared norms for the per-event scan
        self.centroids_t = np.ascontiguousarray(self.centroids.T)
        self.sq_norms = np.einsum("kd,kd->k", self.centroids, self.centroids)

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(CODEBOOK_MAGIC)
            fh.write(struct.pack("<ii", self.K, self.d))
            fh.write(self.centroids.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path, "rb") as fh:
            magic = fh.read(len(CODEBOOK_MAGIC))
            if magic != CODEBOOK_MAGIC:
                raise DataError(f"{path}: not a codebook file")
            K, d = struct.unpack("<ii", fh.read(8))
            raw = fh.read()
        if len(raw) != 8 * K * d:
            raise DataError(f"{path}: truncated codebook ({len(raw)} bytes for K={K}, d={d})")
        return cls(np.frombuffer(raw, dtype="<f8").reshape(K, d).astype(np.float64))


def _sq_distances(X, C, c_sq):
    d2 = np.einsum("nd,nd->n", X, X)[:, None] - 2.0 * (X @ C.T) + c_sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _assign(X, C, chunk=4096):
    c_sq = np.einsum("kd,kd->k", C, C)
    labels = np.empty(len(X), dtype=np.int64)
    dist = np.empty(len(X), dtype=np.float64)
    for s in range(0, len(X), chunk):
        d2 = _sq_distances(X[s:s + chunk], C, c_sq)
        lab = np.argmin(d2, axis=1)
        labels[s:s + chunk] = lab
        dist[s:s + chunk] = d2[np.arange(len(lab)), lab]
    return labels, dist


def train_codebook(descriptors, K: int = 500, seed: int = 0, max_iter: int = 100) -> Codebook:
    """Lloyd's k-means with k-means++ seeding.

    Stops when no assignment changes or after ``max_iter`` iterations. Empty
    clusters keep their previous centroid. The per-iteration mean squared
    distortion is kept on ``Codebook.distortion``.
    """
    X = np.ascontiguousarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise TrainingError("descriptors must be a 2-D array")
    if K < 2:
        raise TrainingError("K must be >= 2")
    n_distinct = len(np.unique(X, axis=0)) if len(X) else 0
    if n_distinct < K:
        raise TrainingError(f"need at least K={K} distinct descriptors, got {n_distinct}")

    state = int(np.random.SeedSequence(seed).generate_state(1)[0])
    C, _ = kmeans_plusplus(X, K, random_state=np.random.RandomState(state))
    C = C.astype(np.float64)
    labels, dist = _assign(X, C)
    history = [float(dist.mean())]
    for _ in range(max_iter):
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        sizes = np.bincount(labels, minlength=K)
        filled = sizes > 0
        C[filled] = sums[filled] / sizes[filled, None]
        new_labels, dist = _assign(X, C)
        history.append(float(dist.mean()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return Codebook(C, seed=seed, distortion=history)


@njit(cache=True)
def nearest_word(x, centroids_t, sq_norms):
    """argmin_k ||x - v_k||^2 via ||v_k||^2 - 2 x.v_k over the non-zero entries of x.

    Ties go to the smallest index.
    """
    d, K = centroids_t.shape
    acc = sq_norms.copy()
    for j in range(d):
        xj = x[j]
        if xj != 0.0:
            s = -2.0 * xj
            row = centroids_t[j]
            for k in range(K):
                acc[k] += s * row[k]
    best = 0
    best_v = acc[0]
    for k in range(1, K):
        if acc[k] < best_v:
            best_v = acc[k]
            best = k
    return best


def quantize(x, cb: Codebook) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cb.d,):
        raise DataError(f"descriptor has shape {x.shape}, codebook expects ({cb.d},)")
    return int(nearest_word(x, cb.centroids_t, cb.sq_norms))


def quantize_many(X, cb: Codebook) -> np.ndarray:
    """Batch quantization (training-time path)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.zeros(0, dtype=np.int64)
    labels, _ = _assign(X, cb.centroids)
    return labels


@dataclass(eq=False)
class CountHistogram:
    """Raw codeword counts; normalized only at the classifier boundary."""

    counts: np.ndarray
    n_events: int = 0

    @classmethod
    def zeros(cls, K: int) -> "CountHistogram":
        return cls(np.zeros(K, dtype=np.int64), 0)

    @classmethod
    def from_labels(cls, labels, K: int) -> "CountHistogram":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(np.bincount(labels, minlength=K).astype(np.int64), int(len(labels)))

    @property
    def K(self) -> int:
        return len(self.counts)


def accumulate(h: CountHistogram, k: int) -> CountHistogram:
    if not 0 <= k < h.K:
        raise IndexError(f"cluster index {k} outside [0, {h.K})")
    h.counts[k] += 1
    h.n_events += 1
    return h


def normalize(h: CountHistogram) -> np.ndarray:
    if h.n_events == 0:
        return np.zeros(h.K, dtype=np.float64)
    return h.counts / float(h.n_events)
