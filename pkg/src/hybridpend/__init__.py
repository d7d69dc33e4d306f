"""Hybrid LQG / neural control of a cart-pole inverted pendulum.

Simulation, LQG synthesis, a genetically trained MLP controller, a
region-based switching supervisor and the experiment harness around them.
"""

from .closedloop import SimSetup, Trace, simulate
from .config import Config, load_config, parse_config, serialize_config
from .lqg import LqgDesign, LqgWeights, synthesize
from .plant import PlantParams, PlantState, SensorModel
from .rng import RngStream
from .switching import Hypercube, SwitchConfig

__all__ = [
    "Config", "Hypercube", "LqgDesign", "LqgWeights", "PlantParams", "PlantState", "RngStream",
    "SensorModel", "SimSetup", "SwitchConfig", "Trace", "load_config", "parse_config",
    "serialize_config", "simulate", "synthesize",
]

__version__ = "0.1.0"
