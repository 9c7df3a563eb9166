"""Sim-to-sim transfer testbed for a buoyancy-assisted biped."""

from .actuator import ActuatorParams
from .config import MorphologyConfig
from .dynamics import ExternalForce, RobotState
from .trajectory import Trajectory

__all__ = ["ActuatorParams", "MorphologyConfig", "ExternalForce",
           "RobotState", "Trajectory"]
__version__ = "0.1.0"
