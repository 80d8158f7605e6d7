import numpy as np
import pytest

from etld.errors import ConfigError, TrainingError
from etld.events import EventStream, Roi
from etld.pipeline import LOST, TRACKING, Etld, EtldConfig, mode_trace, track_stream


@pytest.fixture(scope="module")
def short_run(short_scene):
    events, _, roi = short_scene
    return track_stream(events, roi, EtldConfig())


def test_config_defaults():
    c = EtldConfig()
    assert (c.codebook_size, c.tau, c.tau_t, c.padding, c.train_ms) == (500, 0.05, 0.8, 2, 500)
    assert c.train_us == 500_000


@pytest.mark.parametrize("field,value", [("tau", 0.0), ("tau_t", 0.0), ("tau_t", 1.5),
                                         ("codebook_size", 1), ("padding", -1), ("train_ms", 0)])
def test_config_rejects_out_of_range(field, value):
    with pytest.raises(ConfigError):
        EtldConfig(**{field: value}).validate()


def test_first_output_is_initial_roi(short_run, short_scene):
    st, outs = short_run
    _, _, roi = short_scene
    assert outs[0].roi == roi and outs[0].state == TRACKING
    assert outs[0].t < outs[1].t
    assert outs[0].t <= 500_000


def test_outputs_are_time_ordered_and_inside(short_run):
    _, outs = short_run
    ts = [o.t for o in outs]
    assert ts == sorted(ts)
    assert all(o.roi.inside(EtldConfig().geometry) for o in outs)
    assert all(o.state in (TRACKING, LOST) for o in outs)


def test_transitions_alternate(short_run):
    st, outs = short_run
    kinds = [k for _, k in st.transitions]
    for a, b in zip(kinds, kinds[1:]):
        assert a != b
    assert len(mode_trace(outs)) == len(kinds) + 1


def test_training_info(short_run):
    st, _ = short_run
    info = st.train_info
    assert info["n_inside"] + info["n_outside"] == info["n_train_events"]
    assert info["roi_score"] > info["background_score"]
    assert st.codebook.K == 500


def test_training_rejects_empty_roi():
    # a ROI away from both events of a two-event stream
    tiny = EventStream([0, 1], [0, 1], [0, 1], [0, 0])
    with pytest.raises(TrainingError):
        Etld.train(tiny, Roi(200, 150, 10, 10), EtldConfig(codebook_size=2))
    with pytest.raises(TrainingError):
        track_stream(EventStream.empty(), Roi(0, 0, 10, 10), EtldConfig())


def test_lost_mode_runs_detector(short_scene):
    from etld.evaluation import iou

    events, ann, roi = short_scene
    train, rest = events.split_at(500_000)
    st = Etld.train(train, roi, EtldConfig())
    st.mode = LOST
    outs = st.run(rest)
    # readiness needs more than tau * sensor-area object-cluster events
    assert outs, "detector never became ready"
    assert st.detection.threshold == 2160
    # with the object in view every detector proposal lands on it
    lost_rows = [o for o in outs if o.state == LOST]
    for o in lost_rows:
        assert iou(o.roi, ann.lookup(o.t).roi) >= 0.5
    assert len(st.transitions) == (1 if any(o.state == TRACKING for o in outs) else 0)


def test_mode_trace_collapses():
    from etld.pipeline import TrackOutput

    r = Roi(0, 0, 1, 1)
    outs = [TrackOutput(i, r, 0.0, s) for i, s in enumerate([TRACKING, TRACKING, LOST, LOST, TRACKING])]
    assert mode_trace(outs) == [TRACKING, LOST, TRACKING]


def test_pretrained_codebook_dimension_checked(short_scene):
    from etld.codebook import Codebook

    events, _, roi = short_scene
    bad = Codebook(np.random.default_rng(0).random((10, 7)))
    with pytest.raises(ConfigError):
        track_stream(events, roi, EtldConfig(codebook_size=10), bad)
