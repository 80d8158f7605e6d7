"""Data-driven detector: object-codeword selection and global box search over
a per-pixel detection matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .events import Roi, SensorGeometry

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DetectorModel:
    object_clusters: np.ndarray  # sorted cluster indices
    K: int
    h_diff: np.ndarray = field(default=None, repr=False)
    n_pos: int = 0
    n_neg: int = 0

    def __post_init__(self):
        self.object_clusters = np.asarray(self.object_clusters, dtype=np.int64)
        self.mask = np.zeros(self.K, dtype=bool)
        self.mask[self.object_clusters] = True

    @property
    def o(self) -> int:
        return len(self.object_clusters)

    def report(self) -> dict:
        """Training diagnostics, including the class-size imbalance."""
        return {
            "K": self.K,
            "o": self.o,
            "n_pos_samples": self.n_pos,
            "n_neg_samples": self.n_neg,
            "sample_ratio_neg_to_pos": (self.n_neg / self.n_pos) if self.n_pos else None,
        }


def train_detector(pos_samples, neg_samples) -> DetectorModel:
    """Object codewords: bins whose summed positive bootstrap mass strictly
    exceeds the summed negative mass."""
    pos = np.atleast_2d(np.asarray(pos_samples, dtype=np.int64))
    neg = np.atleast_2d(np.asarray(neg_samples, dtype=np.int64))
    if len(pos) == 0 or len(neg) == 0 or pos.shape[1] == 0:
        raise TrainingError("detector training needs positive and negative samples")
    h_diff = pos.sum(axis=0) - neg.sum(axis=0)
    clusters = np.flatnonzero(h_diff > 0)
    if len(clusters) == 0:
        raise TrainingError("no codeword favours the object over the background")
    K = pos.shape[1]
    if len(clusters) > K / 2:
        log.warning("detector selected %d of %d codewords as object clusters", len(clusters), K)
    return DetectorModel(clusters, K, h_diff=h_diff, n_pos=len(pos), n_neg=len(neg))


class DetectionState:
    def __init__(self, geom: SensorGeometry = SensorGeometry(), tau: float = 0.05):
        self.geom = geom
        self.M = np.zeros((geom.height, geom.width), dtype=np.int64)
        self.count = 0
        self.threshold = math.ceil(tau * geom.height * geom.width - 1e-9)

    def clear(self) -> None:
        self.M[:] = 0
        self.count = 0


def ingest_event_detect(ds: DetectionState, e, k: int, model: DetectorModel) -> bool:
    if model.mask[k]:
        ds.M[e.y, e.x] += 1
        ds.count += 1
    return ds.count > ds.threshold


def box_sums(M: np.ndarray, m: int, n: int) -> np.ndarray:
    """All m x n window sums of M, shape (h-m+1, w-n+1), via an integral image."""
    h, w = M.shape
    S = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(M, axis=0, dtype=np.int64), axis=1, out=S[1:, 1:])
    return S[m:, n:] - S[:-m, n:] - S[m:, :-n] + S[:-m, :-n]


def global_search(ds: DetectionState, m: int, n: int) -> tuple[Roi, int]:
    """Best m-row by n-column window over M (first maximum in row-major
    order); M and the hit count are cleared afterwards."""
    h, w = ds.M.shape
    if not (1 <= m <= h and 1 <= n <= w):
        raise ValueError(f"window {m}x{n} does not fit the {h}x{w} sensor")
    act = box_sums(ds.M, m, n)
    idx = int(np.argmax(act))
    r, s = divmod(idx, act.shape[1])
    value = int(act[r, s])
    ds.clear()
    return Roi(s, r, n, m), value


def write_pgm(M: np.ndarray, path) -> None:
    """Dump a matrix as binary PGM (P5), values saturated at 255."""
    img = np.clip(M, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
