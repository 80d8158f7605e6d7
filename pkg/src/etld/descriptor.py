"""Log-polar event-context descriptor.

Each event is described by a rings x wedges histogram of the recent events
around it. The grid is computed once for a fixed origin and reused for every
event; a per-pixel count map of the recent-event FIFO makes a descriptor cost
one pass over the disk offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError
from .events import EventStream, SensorGeometry

OUTSIDE = -1


@dataclass(frozen=True, eq=False)
class LogPolarGrid:
    rings: int
    wedges: int
    r_min: float
    r_max: float
    table: np.ndarray  # (2R+1, 2R+1) bin index per (dy+R, dx+R), OUTSIDE beyond r_max
    dx: np.ndarray  # in-disk offsets, row-major
    dy: np.ndarray
    bins: np.ndarray

    @property
    def dim(self) -> int:
        return self.rings * self.wedges

    @property
    def radius(self) -> int:
        return (self.table.shape[0] - 1) // 2

    def bin_of(self, dx: int, dy: int) -> int:
        R = self.radius
        if abs(dx) > R or abs(dy) > R:
            return OUTSIDE
        return int(self.table[dy + R, dx + R])


def build_grid(rings: int = 5, wedges: int = 12, r_min: float = 2.0, r_max: float = 24.0) -> LogPolarGrid:
    if rings < 1 or wedges < 1:
        raise ConfigError("rings and wedges must be >= 1")
    if not 0 < r_min < r_max:
        raise ConfigError(f"need 0 < r_min < r_max, got r_min={r_min}, r_max={r_max}")
    R = int(math.floor(r_max))
    off = np.arange(-R, R + 1)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    r = np.hypot(dx, dy)

    ring = np.zeros(r.shape, dtype=np.int64)
    far = r >= r_min
    frac = np.log(r[far] / r_min) / math.log(r_max / r_min)
    ring[far] = np.minimum(np.floor(frac * rings).astype(np.int64), rings - 1)

    ang = np.mod(np.arctan2(dy, dx), 2.0 * math.pi)
    wedge = np.minimum(np.floor(ang / (2.0 * math.pi / wedges)).astype(np.int64), wedges - 1)

    table = ring * wedges + wedge
    table[r > r_max] = OUTSIDE
    inside = table != OUTSIDE
    return LogPolarGrid(
        rings=rings,
        wedges=wedges,
        r_min=float(r_min),
        r_max=float(r_max),
        table=table,
        dx=dx[inside].astype(np.int64),
        dy=dy[inside].astype(np.int64),
        bins=table[inside].astype(np.int64),
    )


class RecentBuffer:
    """FIFO of the ``capacity`` most recent events plus per-pixel views of it.

    ``counts`` holds how many FIFO events sit on each pixel; ``surface`` is the
    latest timestamp seen per pixel (-1 if never).
    """

    def __init__(self, geom: SensorGeometry = SensorGeometry(), capacity: int = 5000):
        if capacity < 1:
            raise ConfigError("recent-event capacity must be >= 1")
        self.geom = geom
        self.capacity = capacity
        self.counts = np.zeros((geom.height, geom.width), dtype=np.int32)
        self.surface = np.full((geom.height, geom.width), -1, dtype=np.int64)
        self.fifo_x = np.zeros(capacity, dtype=np.int64)
        self.fifo_y = np.zeros(capacity, dtype=np.int64)
        # [head, size]
        self.cursor = np.zeros(2, dtype=np.int64)

    def __len__(self):
        return int(self.cursor[1])

    def push(self, x: int, y: int, t: int) -> None:
        _push(x, y, t, self.counts, self.surface, self.fifo_x, self.fifo_y, self.cursor)


@njit(cache=True)
def _push(x, y, t, counts, surface, fifo_x, fifo_y, cursor):
    cap = fifo_x.shape[0]
    head = cursor[0]
    if cursor[1] == cap:
        counts[fifo_y[head], fifo_x[head]] -= 1
    else:
        cursor[1] += 1
    fifo_x[head] = x
    fifo_y[head] = y
    cursor[0] = (head + 1) % cap
    counts[y, x] += 1
    surface[y, x] = t


@njit(cache=True)
def _describe(x, y, counts, gdx, gdy, gbins, out):
    h, w = counts.shape
    for i in range(out.shape[0]):
        out[i] = 0.0
    total = 0
    for i in range(gdx.shape[0]):
        qx = x + gdx[i]
        qy = y + gdy[i]
        if qx < 0 or qy < 0 or qx >= w or qy >= h:
            continue
        c = counts[qy, qx]
        if c != 0:
            out[gbins[i]] += c
            total += c
    if total > 0:
        inv = 1.0 / total
        for i in range(out.shape[0]):
            out[i] *= inv
    return total


@njit(cache=True)
def describe_push(x, y, t, counts, surface, fifo_x, fifo_y, cursor, gdx, gdy, gbins, out):
    """Descriptor of (x, y) against the buffer, then push the event."""
    total = _describe(x, y, counts, gdx, gdy, gbins, out)
    _push(x, y, t, counts, surface, fifo_x, fifo_y, cursor)
    return total


@njit(cache=True)
def _describe_stream(xs, ys, ts, counts, surface, fifo_x, fifo_y, cursor, gdx, gdy, gbins, out):
    for i in range(xs.shape[0]):
        describe_push(xs[i], ys[i], ts[i], counts, surface, fifo_x, fifo_y, cursor,
                      gdx, gdy, gbins, out[i])


def describe_event(e, buf: RecentBuffer, grid: LogPolarGrid) -> np.ndarray:
    """Return the L1-normalized descriptor of ``e`` and push ``e`` into ``buf``."""
    out = np.zeros(grid.dim, dtype=np.float64)
    describe_push(e.x, e.y, e.t, buf.counts, buf.surface, buf.fifo_x, buf.fifo_y, buf.cursor,
                  grid.dx, grid.dy, grid.bins, out)
    return out


def describe_stream(events: EventStream, buf: RecentBuffer, grid: LogPolarGrid) -> np.ndarray:
    """Descriptors for a whole stream, in order; ``buf`` ends up holding its tail."""
    out = np.zeros((len(events), grid.dim), dtype=np.float64)
    if len(events):
        _describe_stream(events.x, events.y, events.t, buf.counts, buf.surface, buf.fifo_x,
                         buf.fifo_y, buf.cursor, grid.dx, grid.dy, grid.bins, out)
    return out
