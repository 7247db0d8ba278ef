"""Zone-based RSS fingerprint tracking for wireless sensor networks.

The package covers radio-map construction, KNN/WKNN/adaptive-WKNN matching,
per-zone channel planning with coordinated forwarding, adaptive sounding
with energy accounting, and a deterministic event-driven simulator tying
them together.
"""

from .errors import ZonetrackError
from .geometry import Position, RadioMap, Rect, Zone
from .localization import AwknnParams, Measurement, awknn_estimate, knn_estimate, wknn_estimate
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import SimReport, run_scenario

__all__ = [
    "AwknnParams",
    "Measurement",
    "Position",
    "RadioMap",
    "Rect",
    "Scenario",
    "SimReport",
    "Zone",
    "ZonetrackError",
    "awknn_estimate",
    "knn_estimate",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "wknn_estimate",
]

__version__ = "0.1.0"
