"""Cloud-controlled battery storage / load-frequency control simulator.

A distribution grid, a frequency meter, a cloud PID controller and a
battery management system exchange packets over attackable network links.
Everything advances on a deterministic 20 ms tick, so any run is exactly
reproducible from (scenario, seed, command schedule).
"""

__version__ = "0.1.0"

from bessim.engine import Simulation, SimClock, EngineCommand, build_simulation
from bessim.scenario import ScenarioConfig, parse_scenario

__all__ = [
    "Simulation",
    "SimClock",
    "EngineCommand",
    "ScenarioConfig",
    "parse_scenario",
    "build_simulation",
]
