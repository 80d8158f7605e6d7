import json

import pytest

from etld.cli import main
from etld.events import Roi, SensorGeometry
from etld.cli import _offset_roi



@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--fixture", "translation", "--duration-ms", "1500", "--out-dir", str(d)]) == 0
    roi = (d / "init_roi.txt").read_text().strip()
    return d, roi


@pytest.fixture(scope="module")
def tracked(scene, tmp_path_factory):
    d, roi = scene
    out = tmp_path_factory.mktemp("track")
    rc = main(["track", "--events", str(d / "events.txt"), "--roi", roi,
               "--annotations", str(d / "annotations.csv"), "--out-dir", str(out)])
    assert rc == 0
    return out


def test_synth_outputs(scene):
    d, roi = scene
    for name in ("events.txt", "annotations.csv", "synth.cfg", "init_roi.txt"):
        assert (d / name).exists()
    Roi.parse(roi)


def test_track_outputs(tracked):
    for name in ("track.csv", "transitions.csv", "report.json", "intervals.csv", "manifest.json",
                 "codebook.bin", "svm.bin"):
        assert (tracked / name).exists(), name
    rep = json.loads((tracked / "report.json").read_text())
    assert 0.0 <= rep["os"] <= 1.0


def test_manifest_reproducible_fields(tracked, scene):
    man = json.loads((tracked / "manifest.json").read_text())
    assert man["config"]["seed"] == 0
    assert man["config"]["codebook_size"] == 500
    assert len(man["inputs"]) == 2
    assert all(len(v) == 64 for v in man["inputs"].values())
    assert "time" not in json.dumps(man).lower()


def test_eval_matches_track_report(tracked, scene, tmp_path):
    d, _ = scene
    assert main(["eval", "--track", str(tracked / "track.csv"), "--annotations",
                 str(d / "annotations.csv"), "--out-dir", str(tmp_path)]) == 0
    a = json.loads((tmp_path / "report.json").read_text())
    b = json.loads((tracked / "report.json").read_text())
    b.pop("n_transitions")
    assert a == b
    assert (tmp_path / "intervals.csv").read_bytes() == (tracked / "intervals.csv").read_bytes()


@pytest.mark.parametrize("param,value", [("tau", "0.05"), ("init_offset_percent", "0")])
def test_sweep_single_value_equals_track(param, value, tracked, scene, tmp_path):
    d, roi = scene
    rc = main(["sweep", "--param", param, "--values", value, "--events", str(d / "events.txt"),
               "--roi", roi, "--annotations", str(d / "annotations.csv"), "--out-dir", str(tmp_path)])
    assert rc == 0
    sub = tmp_path / f"{param}_{float(value)}"
    for name in ("track.csv", "transitions.csv", "report.json"):
        assert (sub / name).read_bytes() == (tracked / name).read_bytes(), name
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == f"{param},os,cle" and len(lines) == 2


def test_offset_roi_clamps():
    g = SensorGeometry()
    assert _offset_roi(Roi(10, 10, 40, 30), 25, g) == Roi(20, 18, 40, 30)
    assert _offset_roi(Roi(200, 150, 40, 30), 50, g) == Roi(200, 150, 40, 30)


def test_usage_errors(scene, tmp_path):
    d, roi = scene
    ev = str(d / "events.txt")
    assert main(["track", "--events", ev, "--out-dir", str(tmp_path)]) == 1
    assert main(["track", "--events", ev, "--roi", roi, "--tau", "0", "--out-dir", str(tmp_path)]) == 1
    assert main(["track", "--events", ev, "--roi", "1,2,3", "--out-dir", str(tmp_path)]) == 1
    assert main(["sweep", "--param", "nope", "--values", "1", "--events", ev, "--roi", roi,
                 "--annotations", str(d / "annotations.csv"), "--out-dir", str(tmp_path)]) == 1
    assert main(["frobnicate"]) == 1


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0.0 500 5 0\n")
    assert main(["track", "--events", str(bad), "--roi", "0,0,10,10", "--out-dir", str(tmp_path)]) == 2
    assert main(["track", "--events", str(tmp_path / "missing.txt"), "--roi", "0,0,10,10",
                 "--out-dir", str(tmp_path)]) == 2


def test_training_error_exit_code(tmp_path):
    ev = tmp_path / "ev.txt"
    ev.write_text("0.000001 5 5 0\n0.000002 100 100 1\n")
    assert main(["track", "--events", str(ev), "--roi", "0,0,10,10", "--out-dir", str(tmp_path)]) == 3


def test_bench_empty_file(tmp_path):
    ev = tmp_path / "ev.txt"
    ev.write_text("")
    assert main(["bench", "--events", str(ev), "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "bench.json").read_text())
    assert doc["n_events"] == 0 and "median_us" not in doc


def test_codebook_then_track(scene, tmp_path):
    d, roi = scene
    assert main(["codebook", "--events", str(d / "events.txt"), "--out-dir", str(tmp_path / "cb")]) == 0
    rc = main(["track", "--events", str(d / "events.txt"), "--roi", roi, "--codebook",
               str(tmp_path / "cb" / "codebook.bin"), "--out-dir", str(tmp_path / "run")])
    assert rc == 0
    assert (tmp_path / "run" / "track.csv").exists()
