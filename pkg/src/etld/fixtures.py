"""Deterministic synthetic scenes used by the CLI and the acceptance suite."""

from __future__ import annotations

from .events import AnnotationTrack, Roi, SynthConfig

FIXTURE_DURATION_US = 10_000_000
OCCLUSION_WINDOW_US = (4_000_000, 5_000_000)


def translation_fixture(seed: int = 0, occlusions=()) -> SynthConfig:
    """Textured 40x30 object translating over sparse clutter with camera drift."""
    return SynthConfig(
        object_w=40,
        object_h=30,
        object_vx=8.0,
        object_vy=5.0,
        object_texture=12.0,
        clutter_density=4.0,
        drift_vx=-6.0,
        drift_vy=3.0,
        event_rate=30.0,
        occlusions=list(occlusions),
        seed=seed,
    ).validate()


def occlusion_fixture(seed: int = 0) -> SynthConfig:
    return translation_fixture(seed, occlusions=[OCCLUSION_WINDOW_US])


FIXTURES = {
    "translation": translation_fixture,
    "occlusion": occlusion_fixture,
}


def init_roi(annotations: AnnotationTrack, train_us: int, t0: int = 0) -> Roi:
    """Ground-truth box at the middle of the training window.

    A moving object sweeps through the training window; the box in force at
    its middle is the space-time-tight choice.
    """
    entry = annotations.lookup(t0 + train_us // 2)
    if entry is None:
        raise LookupError("no annotation at the middle of the training window")
    return entry.roi
