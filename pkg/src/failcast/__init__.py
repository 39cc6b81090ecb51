"""Warranty analytics that fuse part failures with diagnostic trouble codes.

Weibull failure models are learned by Metropolis-Hastings from failure
records alone or together with DTC occurrences and service observations,
then used to forecast failures and to choose cost-optimal warranty periods.
"""

from .bayesnet import DependencyParams, ObservationMask, PriorConfig, WeibullParams
from .domain import EventLog, PartDataset, Window, WindowKind, assemble_sets
from .forecast import FleetState, expected_failures, weibull_cdf
from .fusion import CaseId, FitResult, fit_best_scenario, fit_case1, fit_fused, fit_part
from .mcmc import McmcConfig, Trace, run_mh
from .simulator import FleetConfig, GroundTruth, simulate_fleet
from .warranty import WarrantyCostModel, grid_search_warranty, optimize_warranty, warranty_cost

__version__ = "0.1.0"

__all__ = [
    "CaseId", "DependencyParams", "EventLog", "FitResult", "FleetConfig", "FleetState",
    "GroundTruth", "McmcConfig", "ObservationMask", "PartDataset", "PriorConfig", "Trace",
    "WarrantyCostModel", "WeibullParams", "Window", "WindowKind", "assemble_sets",
    "expected_failures", "fit_best_scenario", "fit_case1", "fit_fused", "fit_part",
    "grid_search_warranty", "optimize_warranty", "run_mh", "simulate_fleet",
    "warranty_cost", "weibull_cdf",
]
