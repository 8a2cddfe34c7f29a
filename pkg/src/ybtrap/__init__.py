"""Simulation toolkit for electrodynamically trapped Yb+ ions."""

from .atomic import HyperfineConfig, LevelScheme, Sublevel, build_scheme
from .master import DriveField, Liouvillian, evolve, steady_state
from .trap import TrapConfig, crystal_geometry, equilibrium_positions

__version__ = "0.1.0"
