from .gridworld import Gridworld, GridworldConfig
from .zones import ZoneConfig, ZoneWorld

__all__ = ["Gridworld", "GridworldConfig", "ZoneConfig", "ZoneWorld"]
