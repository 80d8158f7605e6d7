"""Tracker/detector state machine.

``Etld.train`` learns the codebook, classifier and detector from a training
window and a user ROI; ``Etld.step`` then consumes one event at a time,
tracking locally while confident and falling back to global detection when
the tracker fails.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import classifier, detector, tracker
from .codebook import Codebook, CountHistogram, nearest_word, quantize_many, train_codebook
from .descriptor import RecentBuffer, build_grid, describe_push, describe_stream
from .errors import ConfigError, TrainingError
from .events import EventStream, Roi, SensorGeometry, validate_roi

log = logging.getLogger(__name__)

TRACKING = "TRACKING"
LOST = "LOST"


@dataclass
class EtldConfig:
    codebook_size: int = 500
    tau: float = 0.05
    tau_t: float = 0.8
    padding: int = 2
    train_ms: float = 500.0
    rings: int = 5
    wedges: int = 12
    r_min: float = 2.0
    r_max: float = 24.0
    recent: int = 5000
    map_order: int = 1
    map_period: float = 0.5
    svm_epochs: int = 50
    svm_lambda: float = 1e-4
    update_steps: int = 5
    width: int = 240
    height: int = 180
    seed: int = 0

    def validate(self) -> "EtldConfig":
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if not 0 < self.tau_t <= 1:
            raise ConfigError(f"tau_t must be in (0, 1], got {self.tau_t}")
        if self.codebook_size < 2:
            raise ConfigError("codebook size must be >= 2")
        if self.padding < 0:
            raise ConfigError("padding must be >= 0")
        if self.train_ms <= 0:
            raise ConfigError("training window must be positive")
        if self.update_steps < 0:
            raise ConfigError("update_steps must be >= 0")
        FeatureMapConfig = classifier.FeatureMapConfig
        try:
            FeatureMapConfig(self.map_order, self.map_period)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    @property
    def train_us(self) -> int:
        return int(round(self.train_ms * 1000))

    @property
    def feature_map(self) -> classifier.FeatureMapConfig:
        return classifier.FeatureMapConfig(self.map_order, self.map_period)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrackOutput:
    t: int
    roi: Roi
    score: float
    state: str


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


def _chunk_scores(svm, roi_labels, K: int, size: int) -> np.ndarray:
    """Scores of consecutive trigger-sized histograms of the ROI training events."""
    n = len(roi_labels) // size
    if n == 0:
        return np.zeros(0)
    chunks = roi_labels[: n * size].reshape(n, size)
    counts = np.stack([np.bincount(c, minlength=K) for c in chunks])
    return classifier.score_many(svm, counts)


class Etld:
    """Trained tracker/detector pair plus the per-event state."""

    def __init__(self, cfg, codebook, svm, det_model, roi, stats, buf, grid, t_start,
                 train_info=None):
        self.cfg = cfg
        self.geom = cfg.geometry
        self.codebook = codebook
        self.svm = svm
        self.det_model = det_model
        self.stats = stats
        self.buf = buf
        self.grid = grid
        self.mode = TRACKING
        self.last_roi = roi
        self.tracker = tracker.TrackerState(roi, codebook.K, cfg.padding, cfg.tau, self.geom)
        self.detection = detector.DetectionState(self.geom, cfg.tau)
        self.transitions: list[tuple[int, str]] = []
        self.train_info = train_info or {}
        self.n_steps = 0
        self.n_updates = 0
        # recent quantized events, for re-scoring detector proposals
        cap = cfg.recent
        self._rx = np.zeros(cap, dtype=np.int64)
        self._ry = np.zeros(cap, dtype=np.int64)
        self._rk = np.zeros(cap, dtype=np.int64)
        self._rhead = 0
        self._rsize = 0
        self._desc = np.zeros(grid.dim, dtype=np.float64)
        self.initial_output = TrackOutput(t_start, roi, stats.mean_score, TRACKING)

    # -- training ----------------------------------------------------------

    @classmethod
    def train(cls, events: EventStream, roi: Roi, cfg: EtldConfig,
              codebook: Codebook | None = None) -> "Etld":
        """Learn everything from ``events`` (the training window) and ``roi``.

        A pre-trained ``codebook`` skips k-means; its dimension must match the
        descriptor grid.
        """
        cfg.validate()
        geom = cfg.geometry
        validate_roi(roi, geom)
        if len(events) == 0:
            raise TrainingError("training window contains no events")
        inside = (events.x >= roi.x) & (events.x < roi.x + roi.w) & \
                 (events.y >= roi.y) & (events.y < roi.y + roi.h)
        n_in = int(inside.sum())
        n_out = len(events) - n_in
        if n_in == 0:
            raise TrainingError("no training events inside the ROI")
        if n_out == 0:
            raise TrainingError("no training events outside the ROI")

        s_codebook, s_pos, s_neg, s_svm = _seeds(cfg.seed, 4)
        grid = build_grid(cfg.rings, cfg.wedges, cfg.r_min, cfg.r_max)
        buf = RecentBuffer(geom, cfg.recent)
        desc = describe_stream(events, buf, grid)
        if codebook is None:
            codebook = train_codebook(desc, cfg.codebook_size, seed=s_codebook)
        elif codebook.d != grid.dim:
            raise ConfigError(f"codebook dimension {codebook.d} != descriptor dimension {grid.dim}")
        labels = quantize_many(desc, codebook)

        K = codebook.K
        h_pos = CountHistogram.from_labels(labels[inside], K)
        h_neg = CountHistogram.from_labels(labels[~inside], K)
        pos = classifier.bayesian_bootstrap(h_pos, n_in, np.random.default_rng(s_pos))
        neg = classifier.bayesian_bootstrap(h_neg, n_out, np.random.default_rng(s_neg))
        svm = classifier.train_svm(pos, neg, cfg.feature_map, seed=s_svm,
                                   epochs=cfg.svm_epochs, lam=cfg.svm_lambda)
        det_model = detector.train_detector(pos, neg)

        roi_score = classifier.score(svm, h_pos)
        threshold = tracker.trigger_threshold(roi, cfg.tau)
        chunk_scores = _chunk_scores(svm, labels[inside], K, threshold)
        stats = tracker.ScoreStats()
        for s in chunk_scores if len(chunk_scores) else [roi_score]:
            stats.add(float(s))
        bg_score = classifier.score(svm, h_neg)
        info = {
            "n_train_events": len(events),
            "n_inside": n_in,
            "n_outside": n_out,
            "kmeans_iterations": len(codebook.distortion) - 1,
            "roi_score": roi_score,
            "seed_mean_score": stats.mean_score,
            "seed_chunks": len(chunk_scores),
            "background_score": bg_score,
            "detector": det_model.report(),
        }
        log.info("trained: %s", info)
        t_start = int(events.t[-1]) + 1
        st = cls(cfg, codebook, svm, det_model, roi, stats, buf, grid, t_start, info)
        st._remember(events.x, events.y, labels)
        return st

    def _remember(self, xs, ys, ks):
        cap = len(self._rx)
        xs, ys, ks = xs[-cap:], ys[-cap:], ks[-cap:]
        for x, y, k in zip(xs.tolist(), ys.tolist(), ks.tolist()):
            self._push_recent(x, y, k)

    def _push_recent(self, x, y, k):
        h = self._rhead
        self._rx[h] = x
        self._ry[h] = y
        self._rk[h] = k
        self._rhead = (h + 1) % len(self._rx)
        if self._rsize < len(self._rx):
            self._rsize += 1

    def _recent_newest_first(self):
        cap, n, h = len(self._rx), self._rsize, self._rhead
        idx = (h - 1 - np.arange(n)) % cap
        return self._rx[idx], self._ry[idx], self._rk[idx]

    # -- per-event loop ------------------------------------------------------

    def describe_quantize(self, x: int, y: int, t: int) -> int:
        b, g, cb = self.buf, self.grid, self.codebook
        describe_push(x, y, t, b.counts, b.surface, b.fifo_x, b.fifo_y, b.cursor,
                      g.dx, g.dy, g.bins, self._desc)
        return int(nearest_word(self._desc, cb.centroids_t, cb.sq_norms))

    def step(self, t: int, x: int, y: int) -> TrackOutput | None:
        """Consume one event; returns an output at trigger/readiness instants."""
        k = self.describe_quantize(x, y, t)
        self.n_steps += 1
        self._push_recent(x, y, k)
        if self.mode == TRACKING:
            tr = self.tracker
            a = tr.area
            if tracker._ingest(x, y, k, a.x, a.y, a.w, a.h, tr.offsets, tr.members,
                               tr.hist, tr.n_events):
                tr.event_count += 1
                if tr.event_count >= tr.threshold:
                    return self._on_trigger(t)
            return None
        ds = self.detection
        if self.det_model.mask[k]:
            ds.M[y, x] += 1
            ds.count += 1
            if ds.count > ds.threshold:
                return self._on_ready(t)
        return None

    def _on_trigger(self, t: int) -> TrackOutput:
        mean_before = self.stats.mean_score
        res = tracker.classify_candidates(self.tracker, self.svm)
        if tracker.judge(res.score, self.stats, self.cfg.tau_t):
            self.last_roi = res.roi
            if res.score > mean_before and self.cfg.update_steps > 0:
                classifier.online_update(self.svm, CountHistogram(res.counts, int(res.counts.sum())),
                                         +1, self.cfg.update_steps)
                self.n_updates += 1
            return TrackOutput(t, res.roi, res.score, TRACKING)
        self.mode = LOST
        self.transitions.append((t, f"{TRACKING}->{LOST}"))
        self.tracker.reset()
        self.detection.clear()
        return TrackOutput(t, res.roi, res.score, LOST)

    def _on_ready(self, t: int) -> TrackOutput:
        m, n = self.last_roi.h, self.last_roi.w
        proposal, _ = detector.global_search(self.detection, m, n)
        res = self.verify_proposal(proposal)
        if res.score >= self.stats.mean_score:
            self.mode = TRACKING
            self.last_roi = res.roi
            self.transitions.append((t, f"{LOST}->{TRACKING}"))
            return TrackOutput(t, res.roi, res.score, TRACKING)
        self.tracker.reset()
        return TrackOutput(t, proposal, res.score, LOST)

    def verify_proposal(self, proposal: Roi) -> tracker.Classification:
        """Candidate scoring around a detector proposal.

        Candidate histograms are rebuilt from the most recent quantized events
        that fall in the proposal's search area, up to one trigger's worth.
        """
        tr = self.tracker
        tr.recenter(proposal)
        xs, ys, ks = self._recent_newest_first()
        a = tr.area
        sel = (xs >= a.x) & (xs < a.x + a.w) & (ys >= a.y) & (ys < a.y + a.h)
        xs, ys, ks = xs[sel][:tr.threshold], ys[sel][:tr.threshold], ks[sel][:tr.threshold]
        for x, y, k in zip(xs.tolist(), ys.tolist(), ks.tolist()):
            tracker._ingest(x, y, k, a.x, a.y, a.w, a.h, tr.offsets, tr.members, tr.hist,
                            tr.n_events)
        return tracker.classify_candidates(tr, self.svm)

    def run(self, events: EventStream) -> list[TrackOutput]:
        out = []
        for t, x, y in zip(events.t.tolist(), events.x.tolist(), events.y.tolist()):
            r = self.step(t, x, y)
            if r is not None:
                out.append(r)
        return out


def track_stream(events: EventStream, roi: Roi, cfg: EtldConfig,
                 codebook: Codebook | None = None) -> tuple[Etld, list[TrackOutput]]:
    """Train on the first ``cfg.train_ms`` and track through the remainder.

    The returned outputs start with the initial ROI at the end of training.
    """
    if len(events) == 0:
        raise TrainingError("event stream is empty")
    t0 = int(events.t[0])
    train, rest = events.split_at(t0 + cfg.train_us)
    st = Etld.train(train, roi, cfg, codebook)
    outputs = [st.initial_output]
    outputs.extend(st.run(rest))
    return st, outputs


def mode_trace(outputs: Iterable[TrackOutput]) -> list[str]:
    """Collapsed sequence of modes, e.g. [TRACKING, LOST, TRACKING]."""
    trace: list[str] = []
    for o in outputs:
        if not trace or trace[-1] != o.state:
            trace.append(o.state)
    return trace
