"""Simulation and ergodicity diagnostics for regime-switching damped Hamiltonian systems."""
from .errors import (BlowUpError, ConfigurationError, DominationError, HamSwitchError,
                     InvariantViolation, NormalizationError, OutputError, PreconditionError,
                     RunawaySwitchingError, UnknownSystemError, UnsupportedOrderError)
from .model import HybridState, SystemSpec, TestFunction, builtin_test_functions, \
    eval_generator, eval_Lk, eval_Q
from .rng import RngStream
from .systems import get_system
from .simulate import Target, estimate_transition, run_ensemble, simulate_killed, \
    simulate_trajectory
from .series import check_resolvent_bounds, check_series, killed_lower_bound, series_term
from .lyapunov import DriftGrid, check_theorem_conditions, ldp_ratio_probe, verify_drift
from .ergodicity import Binning, OccupationMeasure, fit_decay, occupation_measure, \
    passage_times, tv_distance

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
