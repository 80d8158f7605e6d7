"""Local sliding-window tracker.

Around the current box, (2p+1)^2 same-sized candidate windows each keep a
codeword count histogram. Once enough events have landed in the padded
search area, every candidate is scored and the best one becomes the new box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import classifier
from .events import Roi, SensorGeometry


def candidate_offsets(p: int) -> list[tuple[int, int]]:
    """Offsets ordered center-first by distance, then row-major."""
    offs = [(dx, dy) for dy in range(-p, p + 1) for dx in range(-p, p + 1)]
    return sorted(offs, key=lambda o: (o[0] ** 2 + o[1] ** 2, o[1], o[0]))


def enumerate_candidates(roi: Roi, p: int, geom: SensorGeometry) -> list[Roi]:
    if p < 0:
        raise ValueError("padding must be >= 0")
    return [roi.shifted(dx, dy).clamped(geom) for dx, dy in candidate_offsets(p)]


def trigger_threshold(roi: Roi, tau: float) -> int:
    # the tiny slack keeps e.g. 0.05 * 1200 from rounding up to 61
    return max(1, math.ceil(tau * roi.w * roi.h - 1e-9))


@njit(cache=True)
def _ingest(x, y, k, ax, ay, aw, ah, offsets, members, hist, n_events):
    cx = x - ax
    cy = y - ay
    if cx < 0 or cy < 0 or cx >= aw or cy >= ah:
        return False
    cell = cy * aw + cx
    for i in range(offsets[cell], offsets[cell + 1]):
        j = members[i]
        hist[j, k] += 1
        n_events[j] += 1
    return True


@dataclass
class ScoreStats:
    mean_score: float = 0.0
    n_successes: int = 0

    def add(self, score: float) -> None:
        self.n_successes += 1
        self.mean_score += (score - self.mean_score) / self.n_successes


def judge(score: float, stats: ScoreStats, tau_t: float) -> bool:
    """Success iff ``score >= tau_t * mean``; the mean absorbs successes only."""
    if stats.n_successes < 1:
        raise ValueError("score statistics are not initialized")
    ok = score >= tau_t * stats.mean_score
    if ok:
        stats.add(score)
    return ok


class TrackerState:
    def __init__(self, roi: Roi, K: int, padding: int = 2, tau: float = 0.05,
                 geom: SensorGeometry = SensorGeometry()):
        self.geom = geom
        self.padding = padding
        self.tau = tau
        self.K = K
        self.n_candidates = (2 * padding + 1) ** 2
        self.hist = np.zeros((self.n_candidates, K), dtype=np.int64)
        self.n_events = np.zeros(self.n_candidates, dtype=np.int64)
        self.event_count = 0
        self.recenter(roi)

    def recenter(self, roi: Roi) -> None:
        """Rebuild candidates and the pixel -> candidates table around ``roi``."""
        self.roi = roi
        self.threshold = trigger_threshold(roi, self.tau)
        self.candidates = enumerate_candidates(roi, self.padding, self.geom)
        x0 = min(c.x for c in self.candidates)
        y0 = min(c.y for c in self.candidates)
        x1 = max(c.x + c.w for c in self.candidates)
        y1 = max(c.y + c.h for c in self.candidates)
        self.area = Roi(x0, y0, x1 - x0, y1 - y0)
        aw, ah = self.area.w, self.area.h
        inside = np.zeros((ah, aw, self.n_candidates), dtype=bool)
        for j, c in enumerate(self.candidates):
            inside[c.y - y0:c.y - y0 + c.h, c.x - x0:c.x - x0 + c.w, j] = True
        flat = inside.reshape(ah * aw, self.n_candidates)
        self.offsets = np.concatenate([[0], np.cumsum(flat.sum(axis=1))]).astype(np.int64)
        self.members = np.nonzero(flat)[1].astype(np.int64)
        self.reset()

    def reset(self) -> None:
        self.hist[:] = 0
        self.n_events[:] = 0
        self.event_count = 0

    def members_of(self, x: int, y: int) -> np.ndarray:
        cx, cy = x - self.area.x, y - self.area.y
        if not (0 <= cx < self.area.w and 0 <= cy < self.area.h):
            return np.zeros(0, dtype=np.int64)
        cell = cy * self.area.w + cx
        return self.members[self.offsets[cell]:self.offsets[cell + 1]]

    def histogram(self, j: int):
        from .codebook import CountHistogram

        return CountHistogram(self.hist[j].copy(), int(self.n_events[j]))


def ingest_event(st: TrackerState, e, k: int) -> bool:
    """Route one quantized event; True once the trigger count is reached."""
    a = st.area
    if _ingest(e.x, e.y, k, a.x, a.y, a.w, a.h, st.offsets, st.members, st.hist, st.n_events):
        st.event_count += 1
        return st.event_count >= st.threshold
    return False


@dataclass
class Classification:
    roi: Roi
    score: float
    index: int
    counts: np.ndarray
    scores: np.ndarray


def classify_candidates(st: TrackerState, model: classifier.SvmModel) -> Classification:
    """Score all candidates, keep the first maximum, then reset and recenter."""
    scores = classifier.score_many(model, st.hist)
    best = int(np.argmax(scores))
    result = Classification(roi=st.candidates[best], score=float(scores[best]), index=best,
                            counts=st.hist[best].copy(), scores=scores)
    st.recenter(result.roi)
    return result
