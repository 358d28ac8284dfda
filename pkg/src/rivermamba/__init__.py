"""River discharge forecasting with bidirectional selective state-space blocks.

Points on a grid are serialized along space-filling curves, embedded from
several meteorological and hydrological sources, mixed by Mamba-style blocks
over a hindcast window and then rolled forward one lead time at a time.
"""

from .curves import CurveKind, serialize
from .data import generate_network, simulate
from .geometry import GeoPoint, PointSet
from .hydrology import FloodThresholds, fit_thresholds
from .model import ModelConfig, RiverMamba

__all__ = ["CurveKind", "FloodThresholds", "GeoPoint", "ModelConfig", "PointSet", "RiverMamba", "fit_thresholds",
           "generate_network", "serialize", "simulate"]
__version__ = "0.1.0"
