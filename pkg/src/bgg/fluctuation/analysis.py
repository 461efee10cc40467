"""Shared result type and tuning knobs for the exact exit computations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import NetworkParams, derive_geometric_terms

DEFAULT_TOL = 1e-12
DEFAULT_N_MAX = 100_000
# a clamped negative entry larger than this means something is numerically wrong
NEGATIVE_DUST = 1e-12


class BackendUnavailable(ValueError):
    """The requested backend cannot handle these parameters."""


@dataclass(frozen=True, eq=False)
class ExitAnalysis:
    """Everything the analytic layer knows about one parameter set.

    All masses are restricted to the trace {nu < mu} (attacker crosses
    strictly first), so they sum to P{nu < mu}, not to one.

    p[n]            P{nu = n, nu < mu} for n = 0..N
    prev_pmf[k]     P{A_{nu-1} = k, nu < mu}, k = 0..T+L (A_{-1} := A_0)
    exit_pmf[j]     P{A_nu = T + j, nu < mu}, j = 0..L
    *_remainder     mass lying past the last tabulated block count
    decision_time   E[tau_{nu-1} 1{nu < mu}] with tau_{-1} = 0
    """

    threshold: int
    tail_extent: int
    p: np.ndarray
    truncation_error_bound: float
    converged: bool
    prev_pmf: np.ndarray
    prev_remainder: float
    exit_pmf: np.ndarray
    exit_remainder: float
    decision_time: float
    backend: str

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.p))

    @property
    def exit_index_moment(self) -> float:
        """E[nu 1{nu < mu}]."""
        return float(math.fsum(np.arange(len(self.p)) * self.p))


def default_tail_extent(params: NetworkParams, tol: float) -> int:
    """How far above the threshold the A_nu law is tabulated.

    Geometric increments make the overshoot memoryless, so the mass past
    T + t is at most a**(t+1) with a the larger attacker failure parameter.
    The result is capped at max(10 * mean step, M - T); the cap never cuts
    below M - T so every raised threshold ceil(M(1+alpha)/2) is covered.
    """
    terms = derive_geometric_terms(params)
    a = max(terms.alpha_A, terms.alpha_A0)
    T = params.threshold
    cap = max(int(math.ceil(10 * params.mean_observation_gap * params.lambda_attacker)), params.total_nodes - T)
    if a == 0.0:
        return 0
    t = int(math.ceil(math.log(tol) / math.log(a)))
    return max(0, min(t, cap))


def clamp_dust(x: np.ndarray, what: str) -> np.ndarray:
    lo = float(np.min(x)) if len(x) else 0.0
    if lo < -NEGATIVE_DUST:
        raise FloatingPointError(f"{what}: negative mass {lo:.3e} beyond roundoff")
    return np.maximum(x, 0.0)
