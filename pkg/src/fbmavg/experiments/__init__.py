"""Averaging experiments producing convergence reports."""
from .config import ConfigError, config_hash, from_mapping, to_mapping
from .feedback import (AveragedField, AveragingGerm, FeedbackConfig, UniformBoundReport, averaging_defect_norms,
                       averaging_germ_factory, cosimulate, run_feedback, sewing_equals_young_check,
                       uniform_bound_experiment)
from .nofeedback import (NoFeedbackConfig, NonStationaryLaunchError, PeriodicConfig, ResampledChain,
                         TwoStateChain, mixing_certificate, run_nofeedback, run_periodic_example, strong_mixing)
from .registry import Coefficient, bessel_ratio, coefficient, fast_system
from .report import ConvergenceReport, PointCache, build_report, monotone_within_bands

__all__ = [
    "AveragedField", "AveragingGerm", "Coefficient", "ConfigError", "ConvergenceReport", "FeedbackConfig",
    "NoFeedbackConfig", "NonStationaryLaunchError", "PeriodicConfig", "PointCache", "ResampledChain",
    "TwoStateChain", "UniformBoundReport", "averaging_defect_norms", "averaging_germ_factory", "bessel_ratio",
    "build_report", "coefficient", "config_hash", "cosimulate", "fast_system", "from_mapping",
    "mixing_certificate", "monotone_within_bands", "run_feedback", "run_nofeedback", "run_periodic_example",
    "sewing_equals_young_check", "strong_mixing", "to_mapping", "uniform_bound_experiment",
]
