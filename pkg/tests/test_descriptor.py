import math

import numpy as np
from hypothesis import given, settings, strategies as st

from etld.descriptor import OUTSIDE, RecentBuffer, build_grid, describe_event, describe_stream
from etld.events import Event, EventStream, SensorGeometry

GRID = build_grid()


def direct_bin(dx, dy, rings=5, wedges=12, r_min=2.0, r_max=24.0):
    """Independent per-offset evaluation of the log-polar layout."""
    r = math.sqrt(dx * dx + dy * dy)
    if r > r_max:
        return OUTSIDE
    ring = 0 if r < r_min else min(int(math.log(r / r_min) / math.log(r_max / r_min) * rings), rings - 1)
    ang = math.atan2(dy, dx) % (2 * math.pi)
    wedge = min(int(ang // (2 * math.pi / wedges)), wedges - 1)
    return ring * wedges + wedge


def direct_descriptor(history, x, y, capacity=5000):
    """Histogram over the last ``capacity`` events, computed from scratch."""
    out = np.zeros(60)
    for hx, hy in history[-capacity:]:
        b = direct_bin(hx - x, hy - y)
        if b != OUTSIDE:
            out[b] += 1
    s = out.sum()
    return out / s if s else out


def test_grid_dimension():
    assert GRID.dim == 60
    assert GRID.radius == 24


def test_grid_table_matches_direct_evaluation():
    R = GRID.radius
    for dy in range(-R, R + 1):
        for dx in range(-R, R + 1):
            assert GRID.bin_of(dx, dy) == direct_bin(dx, dy), (dx, dy)


def test_grid_uses_every_bin():
    assert set(GRID.bins.tolist()) == set(range(60))


def test_first_event_has_empty_descriptor():
    buf = RecentBuffer()
    d = describe_event(Event(0, 50, 50, 0), buf, GRID)
    assert d.sum() == 0
    assert len(buf) == 1


point = st.tuples(st.integers(0, 239), st.integers(0, 179))


@settings(max_examples=40, deadline=None)
@given(st.lists(point, min_size=1, max_size=80), st.integers(1, 30))
def test_table_descriptor_matches_direct_oracle(pts, capacity):
    buf = RecentBuffer(capacity=capacity)
    for i, (x, y) in enumerate(pts):
        d = describe_event(Event(i, x, y, 0), buf, GRID)
        np.testing.assert_allclose(d, direct_descriptor(pts[:i], x, y, capacity), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=2, max_size=40),
       st.integers(-60, 60), st.integers(-40, 40))
def test_translation_invariance(rel, sx, sy):
    # a cloud centred in the sensor, shifted so nothing leaves it
    base = [(120 + dx, 90 + dy) for dx, dy in rel]
    shifted = [(x + sx, y + sy) for x, y in base]
    a, b = RecentBuffer(), RecentBuffer()
    for i in range(len(base)):
        da = describe_event(Event(i, *base[i], 0), a, GRID)
        db = describe_event(Event(i, *shifted[i], 0), b, GRID)
        np.testing.assert_array_equal(da, db)


def test_descriptor_is_l1_normalized(short_scene):
    events, _, _ = short_scene
    D = describe_stream(events[:3000], RecentBuffer(), GRID)
    sums = D.sum(axis=1)
    nz = sums > 0
    np.testing.assert_allclose(sums[nz], 1.0)
    assert np.all(D >= 0)


def test_stream_equals_per_event(short_scene):
    events, _, _ = short_scene
    part = events[:500]
    D = describe_stream(part, RecentBuffer(capacity=200), GRID)
    buf = RecentBuffer(capacity=200)
    for i, e in enumerate(part):
        np.testing.assert_array_equal(D[i], describe_event(e, buf, GRID))


def test_fifo_eviction_counts():
    buf = RecentBuffer(SensorGeometry(10, 10), capacity=3)
    for t, (x, y) in enumerate([(1, 1), (1, 1), (2, 2), (3, 3)]):
        buf.push(x, y, t)
    assert buf.counts[1, 1] == 1
    assert buf.counts.sum() == 3
    assert buf.surface[3, 3] == 3
