"""Multi-robot indoor exploration simulator with energy-aware planning."""
from .config import Scenario, ScenarioError, build_scenario, load_scenario
from .engine import MissionResult, replay_coverage, run, run_strategy_matrix
from .world import WorldMap, load_map, read_map, serialize_map

__all__ = [
    "MissionResult",
    "Scenario",
    "ScenarioError",
    "WorldMap",
    "build_scenario",
    "load_map",
    "load_scenario",
    "read_map",
    "replay_coverage",
    "run",
    "run_strategy_matrix",
    "serialize_map",
]
__version__ = "0.1.0"
