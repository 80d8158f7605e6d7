import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etld.detector import (
    DetectionState,
    box_sums,
    global_search,
    ingest_event_detect,
    train_detector,
    write_pgm,
)
from etld.errors import TrainingError
from etld.events import Event, Roi, SensorGeometry


def naive_box_sums(M, m, n):
    h, w = M.shape
    out = np.zeros((h - m + 1, w - n + 1), dtype=np.int64)
    for r in range(h - m + 1):
        for s in range(w - n + 1):
            out[r, s] = M[r:r + m, s:s + n].sum()
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_box_sums_match_naive(h, w, data):
    m = data.draw(st.integers(1, h))
    n = data.draw(st.integers(1, w))
    M = np.array(data.draw(st.lists(st.integers(0, 50), min_size=h * w, max_size=h * w))).reshape(h, w)
    np.testing.assert_array_equal(box_sums(M, m, n), naive_box_sums(M, m, n))


def test_global_search_finds_planted_blob():
    ds = DetectionState(SensorGeometry(60, 40))
    ds.M[10:20, 30:45] = 3
    roi, value = global_search(ds, 10, 15)
    assert roi == Roi(30, 10, 15, 10)
    assert value == 3 * 150
    assert ds.M.sum() == 0 and ds.count == 0


def test_global_search_tie_is_first_row_major():
    ds = DetectionState(SensorGeometry(20, 20))
    roi, value = global_search(ds, 5, 5)
    assert roi == Roi(0, 0, 5, 5) and value == 0


def test_global_search_rejects_oversized_window():
    with pytest.raises(ValueError):
        global_search(DetectionState(SensorGeometry(20, 20)), 21, 5)


def test_train_detector_selects_strict_excess():
    pos = np.array([[5, 1, 2, 0], [5, 1, 2, 0]])
    neg = np.array([[1, 1, 3, 0], [1, 1, 0, 0]])
    det = train_detector(pos, neg)
    # bin 1 ties and bin 3 is empty, so neither is selected
    assert det.object_clusters.tolist() == [0, 2]
    assert det.mask.tolist() == [True, False, True, False]
    assert det.report()["sample_ratio_neg_to_pos"] == 1.0


def test_sign_rule_excludes_zero_difference():
    det = train_detector(np.array([[5, 0, 2]]), np.array([[1, 3, 2]]))
    assert det.h_diff.tolist() == [4, -3, 0]
    assert det.object_clusters.tolist() == [0]


def test_train_detector_needs_an_object_cluster():
    with pytest.raises(TrainingError):
        train_detector(np.array([[1, 1]]), np.array([[2, 2]]))


def test_detection_readiness_is_strict():
    det = train_detector(np.array([[3, 0]]), np.array([[0, 3]]))
    ds = DetectionState(SensorGeometry(10, 10), tau=0.05)
    assert ds.threshold == 5
    ready = [ingest_event_detect(ds, Event(i, 1, 1, 0), 0, det) for i in range(6)]
    assert ready == [False] * 5 + [True]
    # background codewords leave M untouched
    ingest_event_detect(ds, Event(9, 2, 2, 0), 1, det)
    assert ds.count == 6 and ds.M[2, 2] == 0 and ds.M[1, 1] == 6


def test_write_pgm(tmp_path):
    M = np.array([[0, 300], [7, 1]])
    p = tmp_path / "m.pgm"
    write_pgm(M, p)
    data = p.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 255, 7, 1]
