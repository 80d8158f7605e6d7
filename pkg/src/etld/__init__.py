"""Event-based long-term object tracking: learn an object from its first
events, follow it with a local classifier, and re-detect it after loss."""

__version__ = "0.1.0"

from .events import EventStream, Roi, SensorGeometry  # noqa: E402
from .pipeline import Etld, EtldConfig, TrackOutput, track_stream  # noqa: E402

__all__ = ["Etld", "EtldConfig", "EventStream", "Roi", "SensorGeometry", "TrackOutput",
           "track_stream", "__version__"]
