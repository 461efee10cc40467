"""Exact fluctuation analysis of the two-sided block race."""
from .analysis import DEFAULT_N_MAX, DEFAULT_TOL, BackendUnavailable, ExitAnalysis, default_tail_extent
from .exit import (
    BACKENDS,
    ExitIndexSeries,
    NonConvergence,
    analyze_exit,
    choose_backend,
    exit_index_series,
    prob_attacker_wins,
)
from .series import (
    GeometricPGF,
    PowerSeries,
    TruncationError,
    convolve,
    nb_partial_sums,
    nb_power_coefficients,
    partial_sum,
)

__all__ = [
    "BACKENDS",
    "BackendUnavailable",
    "DEFAULT_N_MAX",
    "DEFAULT_TOL",
    "ExitAnalysis",
    "ExitIndexSeries",
    "GeometricPGF",
    "NonConvergence",
    "PowerSeries",
    "TruncationError",
    "analyze_exit",
    "choose_backend",
    "convolve",
    "default_tail_extent",
    "exit_index_series",
    "nb_partial_sums",
    "nb_power_coefficients",
    "partial_sum",
    "prob_attacker_wins",
]
