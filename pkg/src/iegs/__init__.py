"""Integrated electricity-gas system modelling, state estimation and FDIA analysis."""
from importlib import resources

from .errors import (DomainError, IegsError, InfeasibleAttackError, ModelError, ModelParseError,
                     RankDeficiencyError, SolverError)
from .estimator import detect_bad_data, estimate_gas, estimate_iegs, estimate_power
from .netmodel import IegsModel, load_model, read_model
from .scenario import DispatchSpec, NoiseModel, sample_measurements, solve_energy_flow

__version__ = "0.1.0"

FIXTURES = ("iegs-9-7", "iegs-39-20")


def fixture_path(name: str, scenario: bool = False):
    """Path of a bundled fixture model (or its scenario document)."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    suffix = ".scenario.json" if scenario else ".json"
    return resources.files(__name__) / "data" / f"{name}{suffix}"


__all__ = [
    "DispatchSpec", "DomainError", "FIXTURES", "IegsError", "IegsModel", "InfeasibleAttackError",
    "ModelError", "ModelParseError", "NoiseModel", "RankDeficiencyError", "SolverError",
    "detect_bad_data", "estimate_gas", "estimate_iegs", "estimate_power", "fixture_path",
    "load_model", "read_model", "sample_measurements", "solve_energy_flow",
]
