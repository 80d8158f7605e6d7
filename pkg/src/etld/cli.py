"""Command-line interface.

    etld synth    --fixture translation --out-dir data/
    etld codebook --events data/events.txt --out-dir run/
    etld track    --events data/events.txt --roi 96,72,40,30 --annotations data/annotations.csv --out-dir run/
    etld eval     --track run/track.csv --annotations data/annotations.csv --out-dir run/
    etld sweep    --param tau --values 0.05,0.1,0.2 --events ... --roi ... --out-dir sweep/
    etld bench    --events data/events.txt --roi 96,72,40,30 --out-dir bench/

Exit codes: 0 success, 1 usage error, 2 data error, 3 training error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import Codebook, train_codebook
from .descriptor import RecentBuffer, build_grid, describe_stream
from .errors import ConfigError, EtldError, UsageError
from .evaluation import evaluate, read_track_log, write_track_log, write_transitions
from .events import (
    Roi,
    SensorGeometry,
    dump_synth_config,
    load_annotations,
    load_synth_config,
    read_events,
    synthesize_sequence,
    write_annotations,
    write_events,
)
from .fixtures import FIXTURE_DURATION_US, FIXTURES, init_roi
from .pipeline import Etld, EtldConfig, track_stream

log = logging.getLogger("etld")

SWEEP_PARAMS = ("codebook_size", "tau", "tau_t", "init_offset_percent")
LATENCY_TARGET_US = 45.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _roi_arg(text):
    try:
        return Roi.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--codebook-size", "-K", type=int, default=500, help="codebook size K")
    g.add_argument("--tau", type=float, default=0.05, help="trigger fraction")
    g.add_argument("--tau-t", type=float, default=0.8, help="tracker confidence fraction")
    g.add_argument("--padding", type=int, default=2, help="search padding p in pixels")
    g.add_argument("--train-ms", type=float, default=500.0, help="training window length")
    g.add_argument("--rings", type=int, default=5)
    g.add_argument("--wedges", type=int, default=12)
    g.add_argument("--r-min", type=float, default=2.0)
    g.add_argument("--r-max", type=float, default=24.0)
    g.add_argument("--recent", type=int, default=5000, help="recent-event FIFO length")
    g.add_argument("--map-order", type=int, default=1)
    g.add_argument("--map-period", type=float, default=0.5)
    g.add_argument("--update-steps", type=int, default=5)
    g.add_argument("--width", type=int, default=240)
    g.add_argument("--height", type=int, default=180)
    g.add_argument("--seed", type=int, default=0)


def _add_track_inputs(p, roi_required=True):
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--roi", type=_roi_arg, required=roi_required, help="x,y,w,h")
    p.add_argument("--annotations", type=Path)
    p.add_argument("--codebook", type=Path, help="pre-trained codebook file")
    p.add_argument("--threshold", type=float, default=0.5, help="IoU success threshold")
    p.add_argument("--out-dir", type=Path, required=True)


def _config_from_args(a) -> EtldConfig:
    if a.seed < 0 or a.seed >= 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return EtldConfig(
        codebook_size=a.codebook_size, tau=a.tau, tau_t=a.tau_t, padding=a.padding,
        train_ms=a.train_ms, rings=a.rings, wedges=a.wedges, r_min=a.r_min, r_max=a.r_max,
        recent=a.recent, map_order=a.map_order, map_period=a.map_period,
        update_steps=a.update_steps, width=a.width, height=a.height, seed=a.seed,
    ).validate()


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest(command, cfg, roi, inputs, extra=None) -> dict:
    doc = {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(cfg) if cfg is not None else None,
        "roi": str(roi) if roi is not None else None,
        "inputs": {str(p): _digest(p) for p in inputs if p is not None},
    }
    if extra:
        doc.update(extra)
    return doc


# --- commands -----------------------------------------------------------------


def run_track(events_path: Path, roi: Roi, cfg: EtldConfig, out_dir: Path, annotations=None,
              codebook_path=None, threshold=0.5) -> dict:
    """Train, track, and write the standard output files; returns the summary."""
    geom = cfg.geometry
    out_dir.mkdir(parents=True, exist_ok=True)
    events = read_events(events_path, geom)
    ann = load_annotations(annotations, geom) if annotations else None
    codebook = Codebook.load(codebook_path) if codebook_path else None
    st, outputs = track_stream(events, roi, cfg, codebook)

    write_track_log(out_dir / "track.csv", outputs)
    write_transitions(out_dir / "transitions.csv", st.transitions)
    st.codebook.save(out_dir / "codebook.bin")
    st.svm.save(out_dir / "svm.bin")
    summary = {"n_outputs": len(outputs), "n_transitions": len(st.transitions),
               "n_online_updates": st.n_updates, "training": st.train_info}
    if ann is not None:
        report = evaluate(outputs, ann, threshold)
        report.write(out_dir / "report.json", out_dir / "intervals.csv",
                     extra={"n_transitions": len(st.transitions)})
        summary.update(report.summary())
    _write_json(out_dir / "manifest.json",
                _manifest("track", cfg, roi, [events_path, annotations, codebook_path],
                          {"threshold": threshold}))
    return summary


def cmd_track(a) -> int:
    cfg = _config_from_args(a)
    summary = run_track(a.events, a.roi, cfg, a.out_dir, a.annotations, a.codebook, a.threshold)
    if "os" in summary:
        cle = summary["cle"]
        print(f"OS={summary['os']:.4f} CLE={'n/a' if cle is None else f'{cle:.4f}'} "
              f"transitions={summary['n_transitions']}")
    else:
        print(f"outputs={summary['n_outputs']} transitions={summary['n_transitions']}")
    return 0


def cmd_eval(a) -> int:
    geom = SensorGeometry(a.width, a.height)
    outputs = read_track_log(a.track)
    ann = load_annotations(a.annotations, geom)
    report = evaluate(outputs, ann, a.threshold)
    a.out_dir.mkdir(parents=True, exist_ok=True)
    report.write(a.out_dir / "report.json", a.out_dir / "intervals.csv")
    cle = report.cle
    print(f"OS={report.os:.4f} CLE={'n/a' if cle is None else f'{cle:.4f}'}")
    return 0


def cmd_synth(a) -> int:
    if (a.config is None) == (a.fixture is None):
        raise UsageError("give exactly one of --config or --fixture")
    cfg = load_synth_config(a.config) if a.config else FIXTURES[a.fixture](seed=a.seed or 0)
    if a.seed is not None:
        cfg.seed = a.seed
    duration = int(round(a.duration_ms * 1000)) if a.duration_ms else FIXTURE_DURATION_US
    events, ann = synthesize_sequence(cfg, duration)
    a.out_dir.mkdir(parents=True, exist_ok=True)
    write_events(a.out_dir / "events.txt", events)
    write_annotations(a.out_dir / "annotations.csv", ann)
    dump_synth_config(cfg, a.out_dir / "synth.cfg")
    try:
        roi = init_roi(ann, int(round(a.train_ms * 1000)))
        (a.out_dir / "init_roi.txt").write_text(f"{roi}\n")
    except LookupError:
        roi = None
    print(f"events={len(events)} annotations={len(ann)} init_roi={roi}")
    return 0


def cmd_codebook(a) -> int:
    cfg = _config_from_args(a)
    geom = cfg.geometry
    events = read_events(a.events, geom)
    train, _ = events.split_at((int(events.t[0]) if len(events) else 0) + cfg.train_us)
    grid = build_grid(cfg.rings, cfg.wedges, cfg.r_min, cfg.r_max)
    desc = describe_stream(train, RecentBuffer(geom, cfg.recent), grid)
    cb = train_codebook(desc, cfg.codebook_size, seed=cfg.seed)
    a.out_dir.mkdir(parents=True, exist_ok=True)
    cb.save(a.out_dir / "codebook.bin")
    _write_json(a.out_dir / "manifest.json", _manifest("codebook", cfg, None, [a.events]))
    print(f"K={cb.K} d={cb.d} iterations={len(cb.distortion) - 1}")
    return 0


def _offset_roi(roi: Roi, percent: float, geom: SensorGeometry) -> Roi:
    dx = int(round(roi.w * percent / 100.0))
    dy = int(round(roi.h * percent / 100.0))
    return roi.shifted(dx, dy).clamped(geom)


def _parse_values(param, text):
    try:
        if param == "codebook_size":
            return [int(v) for v in text.split(",")]
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from None


def cmd_sweep(a) -> int:
    if a.param not in SWEEP_PARAMS:
        raise UsageError(f"unknown sweep parameter {a.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if a.annotations is None:
        raise UsageError("sweep needs --annotations")
    base = _config_from_args(a)
    values = _parse_values(a.param, a.values)
    a.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        cfg, roi = dataclasses.replace(base), a.roi
        if a.param == "init_offset_percent":
            if not 0 <= v <= 100:
                raise UsageError("init_offset_percent must be in [0, 100]")
            roi = _offset_roi(a.roi, v, cfg.geometry)
        else:
            setattr(cfg, a.param, v)
            cfg.validate()
        sub = a.out_dir / f"{a.param}_{v}"
        s = run_track(a.events, roi, cfg, sub, a.annotations, a.codebook, a.threshold)
        rows.append((v, s["os"], s["cle"]))
        log.info("%s=%s OS=%.4f", a.param, v, s["os"])
    with open(a.out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([a.param, "os", "cle"])
        for v, os_, cle in rows:
            w.writerow([v, f"{os_:.6f}", "" if cle is None else f"{cle:.6f}"])
    for v, os_, cle in rows:
        print(f"{a.param}={v} OS={os_:.4f} CLE={'n/a' if cle is None else f'{cle:.4f}'}")
    return 0


def measure_latency(events, roi: Roi, cfg: EtldConfig) -> dict:
    """Per-event wall-clock step latency over everything after training."""
    doc = {"n_events": 0, "target_median_us": LATENCY_TARGET_US}
    if len(events) == 0:
        doc["note"] = "no events"
        return doc
    train, rest = events.split_at(int(events.t[0]) + cfg.train_us)
    st = Etld.train(train, roi, cfg)
    ts, xs, ys = rest.t.tolist(), rest.x.tolist(), rest.y.tolist()
    lat = np.empty(len(ts), dtype=np.float64)
    clock = time.perf_counter_ns
    step = st.step
    for i in range(len(ts)):
        t0 = clock()
        step(ts[i], xs[i], ys[i])
        lat[i] = clock() - t0
    lat /= 1000.0
    doc["n_events"] = len(ts)
    if len(ts):
        doc.update(mean_us=float(lat.mean()), median_us=float(np.median(lat)),
                   p99_us=float(np.percentile(lat, 99)))
        doc["pass"] = doc["median_us"] <= LATENCY_TARGET_US
        if not doc["pass"]:
            doc["note"] = "median step latency above target on this host"
    return doc


def cmd_bench(a) -> int:
    cfg = _config_from_args(a)
    events = read_events(a.events, cfg.geometry)
    if len(events) and a.roi is None:
        raise UsageError("bench needs --roi for a non-empty event file")
    doc = measure_latency(events, a.roi, cfg)
    a.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(a.out_dir / "bench.json", doc)
    if doc["n_events"]:
        print(f"events={doc['n_events']} mean={doc['mean_us']:.2f}us "
              f"median={doc['median_us']:.2f}us p99={doc['p99_us']:.2f}us")
    else:
        print("events=0")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="etld", description="Event-based long-term object tracking.")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("track", help="train on the first window, then track")
    _add_track_inputs(t)
    _add_pipeline_flags(t)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score an existing track log")
    e.add_argument("--track", required=True, type=Path)
    e.add_argument("--annotations", required=True, type=Path)
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--width", type=int, default=240)
    e.add_argument("--height", type=int, default=180)
    e.add_argument("--out-dir", type=Path, required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic sequence")
    s.add_argument("--config", type=Path, help="key=value scene file")
    s.add_argument("--fixture", choices=sorted(FIXTURES))
    s.add_argument("--duration-ms", type=float)
    s.add_argument("--train-ms", type=float, default=500.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", type=Path, required=True)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("codebook", help="train and save a codebook")
    c.add_argument("--events", required=True, type=Path)
    c.add_argument("--out-dir", type=Path, required=True)
    _add_pipeline_flags(c)
    c.set_defaults(func=cmd_codebook)

    w = sub.add_parser("sweep", help="repeat track over parameter values")
    _add_track_inputs(w)
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True, help="comma-separated values")
    _add_pipeline_flags(w)
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="per-event latency benchmark")
    _add_track_inputs(b, roi_required=False)
    _add_pipeline_flags(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except EtldError as exc:
        print(f"etld: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"etld: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
