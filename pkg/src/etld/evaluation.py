"""Overlap success (OS) and center location error (CLE) against annotations."""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EvaluationError, ParseError
from .events import AnnotationTrack, Roi

TRACK_HEADER = ["t_us", "x", "y", "w", "h", "score", "state"]
INTERVAL_HEADER = ["t_us", "iou", "success", "center_error", "state"]


def iou(a: Roi, b: Roi) -> float:
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def center_distance(a: Roi, b: Roi) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


@dataclass(frozen=True)
class IntervalRecord:
    t: int
    iou: float
    success: bool
    center_error: float
    state: str


@dataclass
class EvalReport:
    os: float
    cle: float | None
    threshold: float
    n_intervals: int
    n_success: int
    records: list[IntervalRecord] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "os": self.os,
            "cle": self.cle,
            "threshold": self.threshold,
            "n_intervals": self.n_intervals,
            "n_success": self.n_success,
        }

    def write(self, json_path, csv_path=None, extra: dict | None = None) -> None:
        doc = self.summary()
        if extra:
            doc.update(extra)
        Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(INTERVAL_HEADER)
                for r in self.records:
                    w.writerow([r.t, f"{r.iou:.6f}", int(r.success), f"{r.center_error:.6f}", r.state])


def evaluate(outputs, annotations: AnnotationTrack, threshold: float = 0.5) -> EvalReport:
    """Compare the output in force at each annotation midpoint with the truth.

    ``outputs`` are objects with ``t``, ``roi`` and ``state`` sorted by time.
    Intervals before the first output are outside the evaluated range. An
    interval succeeds when the tracker is TRACKING and IoU >= ``threshold``.
    """
    outputs = list(outputs)
    if not outputs or len(annotations) == 0:
        raise EvaluationError("evaluation needs a non-empty track log and annotations")
    times = [o.t for o in outputs]
    records = []
    for entry in annotations:
        mid = entry.midpoint
        i = bisect.bisect_right(times, mid) - 1
        if i < 0:
            continue
        out = outputs[i]
        ov = iou(out.roi, entry.roi)
        dist = center_distance(out.roi, entry.roi)
        ok = out.state == "TRACKING" and ov >= threshold
        records.append(IntervalRecord(mid, ov, ok, dist, out.state))
    if not records:
        raise EvaluationError("track log and annotations do not overlap in time")
    succ = [r for r in records if r.success]
    os_ = len(succ) / len(records)
    cle = sum(r.center_error for r in succ) / len(succ) if succ else None
    return EvalReport(os_, cle, threshold, len(records), len(succ), records)


# --- track log I/O ------------------------------------------------------------


def write_track_log(path, outputs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for o in outputs:
            r = o.roi
            w.writerow([o.t, r.x, r.y, r.w, r.h, f"{o.score:.9g}", o.state])


def read_track_log(path) -> list:
    from .pipeline import TrackOutput

    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != TRACK_HEADER:
            raise ParseError(f"{path}: expected header {','.join(TRACK_HEADER)}", 1)
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            try:
                t, x, y, w, h = (int(v) for v in row[:5])
                score = float(row[5])
                state = row[6]
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad track row ({exc})", lineno) from None
            if state not in ("TRACKING", "LOST"):
                raise ParseError(f"unknown state {state!r}", lineno)
            out.append(TrackOutput(t, Roi(x, y, w, h), score, state))
    out.sort(key=lambda o: o.t)
    return out


def write_transitions(path, transitions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_us", "transition"])
        for t, tr in transitions:
            w.writerow([t, tr])
