"""Numerical laboratory for boundary dynamics of holomorphic maps on Fatou components."""
from .maps import Blaschke, ExpFamily, FatouBaker, Polynomial, SineFamily, map_from_dict
from .runner import RunReport, run_scenario
from .scenario import Scenario, load_scenario, parse_scenario, serialize_scenario

__all__ = [
    "Blaschke", "ExpFamily", "FatouBaker", "Polynomial", "SineFamily", "map_from_dict",
    "RunReport", "run_scenario", "Scenario", "load_scenario", "parse_scenario", "serialize_scenario",
]
__version__ = "0.1.0"
