"""Event streams, annotation tracks and the synthetic edge-motion generator.

All on-disk data enters the package through this module. Timestamps are kept
as integer microseconds everywhere; the text event format stores decimal
seconds and is converted on the way in and out.
"""

from __future__ import annotations

import bisect
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import BoundsError, ConfigError, ParseError, ValidationError

ANNOTATION_HEADER = "t_start_us,t_end_us,x,y,w,h"
ANNOTATION_INTERVAL_US = 10_000


@dataclass(frozen=True)
class SensorGeometry:
    width: int = 240
    height: int = 180

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"sensor geometry must be positive, got {self.width}x{self.height}")

    def contains(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box; (x, y) is the top-left pixel, w columns by h rows."""

    x: int
    y: int
    w: int
    h: int

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains(self, px, py) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h

    def inside(self, geom: SensorGeometry) -> bool:
        return (
            self.w >= 1
            and self.h >= 1
            and self.x >= 0
            and self.y >= 0
            and self.x + self.w <= geom.width
            and self.y + self.h <= geom.height
        )

    def shifted(self, dx: int, dy: int) -> "Roi":
        return Roi(self.x + dx, self.y + dy, self.w, self.h)

    def clamped(self, geom: SensorGeometry) -> "Roi":
        x = min(max(self.x, 0), geom.width - self.w)
        y = min(max(self.y, 0), geom.height - self.h)
        return Roi(x, y, self.w, self.h)

    @classmethod
    def parse(cls, text: str) -> "Roi":
        """Parse ``"x,y,w,h"``."""
        parts = text.split(",")
        if len(parts) != 4:
            raise ValueError(f"ROI must be x,y,w,h, got {text!r}")
        x, y, w, h = (int(v) for v in parts)
        if w < 1 or h < 1:
            raise ValueError(f"ROI size must be positive, got {w}x{h}")
        return cls(x, y, w, h)

    def __str__(self):
        return f"{self.x},{self.y},{self.w},{self.h}"


def validate_roi(roi: Roi, geom: SensorGeometry) -> Roi:
    if not roi.inside(geom):
        raise BoundsError(f"ROI {roi} is not inside the {geom.width}x{geom.height} sensor")
    return roi


class EventStream:
    """Column-oriented, timestamp-sorted event sequence."""

    __slots__ = ("t", "x", "y", "p")

    def __init__(self, t, x, y, p):
        self.t = np.asarray(t, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.int64)
        self.p = np.asarray(p, dtype=np.int64)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns differ in length")

    @classmethod
    def empty(cls) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z)

    @classmethod
    def from_events(cls, events: Sequence[Event]) -> "EventStream":
        if not events:
            return cls.empty()
        arr = np.array([(e.t, e.x, e.y, e.p) for e in events], dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def __len__(self):
        return len(self.t)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Event(int(self.t[idx]), int(self.x[idx]), int(self.y[idx]), int(self.p[idx]))
        return EventStream(self.t[idx], self.x[idx], self.y[idx], self.p[idx])

    def __iter__(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(t, x, y, p)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.__slots__)

    def split_at(self, t_us: int) -> tuple["EventStream", "EventStream"]:
        """Split into events with ``t < t_us`` and the rest."""
        i = int(np.searchsorted(self.t, t_us, side="left"))
        return self[:i], self[i:]

    def validate(self, geom: SensorGeometry) -> "EventStream":
        if len(self) == 0:
            return self
        if np.any(np.diff(self.t) < 0):
            raise ValidationError("event timestamps are not non-decreasing")
        if np.any(self.t < 0):
            raise ValidationError("negative timestamp")
        bad = (self.x < 0) | (self.x >= geom.width) | (self.y < 0) | (self.y >= geom.height)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise BoundsError(f"event {i} at ({self.x[i]},{self.y[i]}) outside sensor")
        if np.any((self.p != 0) & (self.p != 1)):
            raise ValidationError("polarity must be 0 or 1")
        return self


# --- text event files -------------------------------------------------------


def _seconds_to_us(token: str) -> int:
    return int(round(float(token) * 1_000_000))


def parse_event_line(line: str, geom: SensorGeometry = SensorGeometry(), lineno=None) -> Event:
    """Parse one ``"t_seconds x y p"`` record."""
    parts = line.split()
    if len(parts) != 4:
        raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
    try:
        t = _seconds_to_us(parts[0])
        x = int(parts[1])
        y = int(parts[2])
        p = int(parts[3])
    except ValueError as exc:
        raise ParseError(f"non-numeric field ({exc})", lineno) from None
    if t < 0:
        raise ParseError("negative timestamp", lineno)
    if p not in (0, 1):
        raise ParseError(f"polarity must be 0 or 1, got {p}", lineno)
    if not geom.contains(x, y):
        where = f"line {lineno}: " if lineno is not None else ""
        raise BoundsError(f"{where}({x},{y}) outside {geom.width}x{geom.height} sensor")
    return Event(t, x, y, p)


def format_event_line(e: Event) -> str:
    return f"{e.t // 1_000_000}.{e.t % 1_000_000:06d} {e.x} {e.y} {e.p}"


def read_events(path, geom: SensorGeometry = SensorGeometry()) -> EventStream:
    ts, xs, ys, ps = [], [], [], []
    last_t = -1
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            e = parse_event_line(line, geom, lineno)
            if e.t < last_t:
                raise ValidationError(f"line {lineno}: timestamp decreases ({e.t} < {last_t})")
            last_t = e.t
            ts.append(e.t)
            xs.append(e.x)
            ys.append(e.y)
            ps.append(e.p)
    return EventStream(ts, xs, ys, ps)


def write_events(path, events: EventStream) -> None:
    sec, frac = np.divmod(events.t, 1_000_000)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for s, f, x, y, p in zip(sec.tolist(), frac.tolist(), events.x.tolist(),
                                 events.y.tolist(), events.p.tolist()):
            fh.write(f"{s}.{f:06d} {x} {y} {p}\n")


# --- annotations ------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationEntry:
    t_start: int
    t_end: int
    roi: Roi

    @property
    def midpoint(self) -> int:
        return (self.t_start + self.t_end) // 2


@dataclass
class AnnotationTrack:
    entries: list[AnnotationEntry] = field(default_factory=list)

    def __post_init__(self):
        self._starts = [e.t_start for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lookup(self, t: int) -> AnnotationEntry | None:
        """Entry whose half-open interval [t_start, t_end) contains t."""
        i = bisect.bisect_right(self._starts, t) - 1
        if i >= 0 and t < self.entries[i].t_end:
            return self.entries[i]
        return None

    def validate(self, geom: SensorGeometry = SensorGeometry()) -> "AnnotationTrack":
        prev = None
        for e in self.entries:
            if e.t_end <= e.t_start:
                raise ValidationError(f"empty interval [{e.t_start},{e.t_end})")
            if prev is not None and e.t_start < prev.t_end:
                raise ValidationError(
                    f"overlapping intervals [{prev.t_start},{prev.t_end}) and [{e.t_start},{e.t_end})"
                )
            validate_roi(e.roi, geom)
            prev = e
        return self


def load_annotations(path, geom: SensorGeometry = SensorGeometry()) -> AnnotationTrack:
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.replace(" ", "") == ANNOTATION_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ParseError(f"expected 6 fields, got {len(parts)}", lineno)
            try:
                t0, t1, x, y, w, h = (int(v) for v in parts)
            except ValueError as exc:
                raise ParseError(f"non-integer field ({exc})", lineno) from None
            entries.append(AnnotationEntry(t0, t1, Roi(x, y, w, h)))
    entries.sort(key=lambda e: (e.t_start, e.t_end))
    return AnnotationTrack(entries).validate(geom)


def write_annotations(path, track: AnnotationTrack) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(ANNOTATION_HEADER + "\n")
        for e in track:
            r = e.roi
            fh.write(f"{e.t_start},{e.t_end},{r.x},{r.y},{r.w},{r.h}\n")


# --- synthetic generator ----------------------------------------------------


@dataclass
class SynthConfig:
    """Scene description for the synthetic edge-motion generator.

    Densities are edge segments per 1000 px^2; ``object_x``/``object_y`` of -1
    center the object on the sensor.
    """

    width: int = 240
    height: int = 180
    object_w: int = 40
    object_h: int = 30
    object_x: int = -1
    object_y: int = -1
    object_vx: float = 0.0
    object_vy: float = 0.0
    object_texture: float = 0.0
    clutter_density: float = 0.0
    drift_vx: float = 0.0
    drift_vy: float = 0.0
    event_rate: float = 20.0
    segment_min: int = 3
    segment_max: int = 8
    occlusions: list = field(default_factory=list)
    step_us: int = 1000
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.object_w < 1 or self.object_h < 1:
            raise ConfigError(f"object must have positive area, got {self.object_w}x{self.object_h}")
        if self.object_w > self.width or self.object_h > self.height:
            raise ConfigError("object larger than the sensor")
        for name in ("object_texture", "clutter_density", "event_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.step_us < 1:
            raise ConfigError("step_us must be >= 1")
        if self.event_rate * self.step_us / 1e6 > 1.0:
            raise ConfigError("event_rate * step exceeds one event per edge pixel per step")
        if not 1 <= self.segment_min <= self.segment_max:
            raise ConfigError("need 1 <= segment_min <= segment_max")
        prev_end = None
        for w in self.occlusions:
            a, b = w
            if b <= a:
                raise ConfigError(f"empty occlusion window {w}")
            if prev_end is not None and a < prev_end:
                raise ConfigError("occlusion windows must be sorted and non-overlapping")
            prev_end = b
        SensorGeometry(self.width, self.height)
        return self

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    def initial_position(self) -> tuple[float, float]:
        x = (self.width - self.object_w) / 2.0 if self.object_x < 0 else float(self.object_x)
        y = (self.height - self.object_h) / 2.0 if self.object_y < 0 else float(self.object_y)
        return x, y

    def occluded(self, t_us) -> bool:
        return any(a <= t_us < b for a, b in self.occlusions)


def _format_occlusions(windows) -> str:
    return ",".join(f"{a}:{b}" for a, b in windows)


def _parse_occlusions(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    out = []
    for item in text.split(","):
        a, b = item.split(":")
        out.append((int(a), int(b)))
    return out


def load_synth_config(path) -> SynthConfig:
    """Read a flat ``key=value`` file; unknown keys are an error."""
    fields = {f.name: f for f in dataclasses.fields(SynthConfig)}
    kwargs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key == "occlusions":
                kwargs[key] = _parse_occlusions(value)
            elif fields[key].type == "int":
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno) from None
    return SynthConfig(**kwargs).validate()


def dump_synth_config(cfg: SynthConfig, path) -> None:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={_format_occlusions(v) if f.name == 'occlusions' else v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _segment_pixels(rng, n, lo_x, hi_x, lo_y, hi_y, len_min, len_max):
    """Rasterize ``n`` random straight segments with endpoints in the box."""
    if n <= 0:
        return np.zeros((0, 2), dtype=np.float64)
    cx = rng.uniform(lo_x, hi_x, n)
    cy = rng.uniform(lo_y, hi_y, n)
    theta = rng.uniform(0.0, np.pi, n)
    length = rng.integers(len_min, len_max + 1, n)
    pts = []
    for i in range(n):
        s = np.arange(length[i]) - (length[i] - 1) / 2.0
        px = np.round(cx[i] + s * np.cos(theta[i]))
        py = np.round(cy[i] + s * np.sin(theta[i]))
        pts.append(np.stack([px, py], axis=1))
    return np.unique(np.concatenate(pts), axis=0)


def _object_mask(cfg: SynthConfig, rng) -> np.ndarray:
    """Integer (dx, dy) offsets of object edge pixels relative to its top-left."""
    w, h = cfg.object_w, cfg.object_h
    outline = set()
    for dx in range(w):
        outline.add((dx, 0))
        outline.add((dx, h - 1))
    for dy in range(h):
        outline.add((0, dy))
        outline.add((w - 1, dy))
    n_tex = int(round(cfg.object_texture * w * h / 1000.0))
    tex = _segment_pixels(rng, n_tex, 1, w - 2, 1, h - 2, cfg.segment_min, cfg.segment_max)
    for px, py in tex.astype(np.int64).tolist():
        if 0 < px < w - 1 and 0 < py < h - 1:
            outline.add((px, py))
    return np.array(sorted(outline), dtype=np.int64)


def _reflect(u, lo, hi):
    span = hi - lo
    if span <= 0:
        return np.full_like(u, lo)
    v = np.mod(u - lo, 2.0 * span)
    return lo + np.where(v > span, 2.0 * span - v, v)


def object_position(cfg: SynthConfig, t_us):
    """Top-left object position (float) at time(s) ``t_us``; bounces off borders."""
    x0, y0 = cfg.initial_position()
    t = np.asarray(t_us, dtype=np.float64) / 1e6
    x = _reflect(x0 + cfg.object_vx * t, 0.0, float(cfg.width - cfg.object_w))
    y = _reflect(y0 + cfg.object_vy * t, 0.0, float(cfg.height - cfg.object_h))
    return x, y


def synthesize_sequence(cfg: SynthConfig, duration_us: int) -> tuple[EventStream, AnnotationTrack]:
    """Generate events at moving edge pixels plus 10 ms ground-truth boxes.

    Every edge pixel fires with probability ``event_rate * step`` per time
    step. Background edges move with the camera drift; the object moves with
    its own velocity in sensor coordinates and hides the background behind it.
    """
    cfg.validate()
    if duration_us <= 0:
        raise ConfigError("duration must be positive")
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.width, cfg.height
    obj = _object_mask(cfg, rng)

    # background lives on a world plane large enough for the whole drift path
    dur_s = duration_us / 1e6
    ex = abs(cfg.drift_vx) * dur_s
    ey = abs(cfg.drift_vy) * dur_s
    lo_x = -ex if cfg.drift_vx < 0 else 0.0
    lo_y = -ey if cfg.drift_vy < 0 else 0.0
    world_w, world_h = W + ex, H + ey
    n_bg = int(round(cfg.clutter_density * world_w * world_h / 1000.0))
    bg = _segment_pixels(rng, n_bg, lo_x, lo_x + world_w, lo_y, lo_y + world_h,
                         cfg.segment_min, cfg.segment_max)

    step = cfg.step_us
    p_fire = cfg.event_rate * step / 1e6
    n_steps = -(-duration_us // step)
    chunks_t, chunks_x, chunks_y = [], [], []
    for s in range(n_steps):
        t0 = s * step
        t1 = min(t0 + step, duration_us)
        tm = 0.5 * (t0 + t1)
        ox, oy = object_position(cfg, tm)
        oxi, oyi = int(round(float(ox))), int(round(float(oy)))
        visible = not cfg.occluded(tm)

        bx = np.round(bg[:, 0] - cfg.drift_vx * tm / 1e6).astype(np.int64)
        by = np.round(bg[:, 1] - cfg.drift_vy * tm / 1e6).astype(np.int64)
        keep = (bx >= 0) & (bx < W) & (by >= 0) & (by < H)
        if visible:
            keep &= ~((bx >= oxi) & (bx < oxi + cfg.object_w) & (by >= oyi) & (by < oyi + cfg.object_h))
        px, py = bx[keep], by[keep]
        if visible:
            px = np.concatenate([obj[:, 0] + oxi, px])
            py = np.concatenate([obj[:, 1] + oyi, py])
        fire = rng.random(len(px)) < p_fire
        nf = int(fire.sum())
        if nf:
            chunks_t.append(rng.integers(t0, t1, nf))
            chunks_x.append(px[fire])
            chunks_y.append(py[fire])

    if chunks_t:
        t = np.concatenate(chunks_t)
        x = np.concatenate(chunks_x)
        y = np.concatenate(chunks_y)
        order = np.argsort(t, kind="stable")
        t, x, y = t[order], x[order], y[order]
        p = rng.integers(0, 2, len(t))
    else:
        t = x = y = p = np.zeros(0, dtype=np.int64)
    events = EventStream(t, x, y, p)

    entries = []
    for t0 in range(0, duration_us - ANNOTATION_INTERVAL_US + 1, ANNOTATION_INTERVAL_US):
        mid = t0 + ANNOTATION_INTERVAL_US / 2
        if cfg.occluded(mid):
            continue
        ox, oy = object_position(cfg, mid)
        roi = Roi(int(round(float(ox))), int(round(float(oy))), cfg.object_w, cfg.object_h)
        entries.append(AnnotationEntry(t0, t0 + ANNOTATION_INTERVAL_US, roi))
    return events, AnnotationTrack(entries)
