"""Decision quantities read off the exit analysis.

Everything is restricted to the trace {nu < mu}; conditional versions divide
by the trace mass and are NaN when that mass is zero.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .fluctuation import DEFAULT_TOL, analyze_exit
from .fluctuation.analysis import DEFAULT_N_MAX
from .model import GeometricTerms, NetworkParams, derive_geometric_terms

BurstProbabilities = namedtuple("BurstProbabilities", ["q0", "q1_alpha", "p_A_prev"])


@dataclass(frozen=True, eq=False)
class DefectiveDistribution:
    """Masses on start, start+1, ... plus a lumped remainder past the last one."""

    start: int
    masses: np.ndarray
    total_mass: float
    remainder: float
    support_note: str

    @property
    def pmf(self) -> Dict[int, float]:
        return {self.start + i: float(m) for i, m in enumerate(self.masses) if m > 0}

    @property
    def stop(self) -> int:
        """Last tabulated value."""
        return self.start + len(self.masses) - 1

    def mass(self, k: int) -> float:
        i = k - self.start
        return float(self.masses[i]) if 0 <= i < len(self.masses) else 0.0

    def tail(self, k: int) -> float:
        """P{X >= k} on the trace; the remainder counts for every k past the table."""
        i = max(0, k - self.start)
        return math.fsum(self.masses[i:]) + self.remainder

    def conditional(self) -> "DefectiveDistribution":
        if not self.total_mass > 0:
            raise ZeroDivisionError(f"{self.support_note}: empty trace, no conditional law")
        z = self.total_mass
        return DefectiveDistribution(
            self.start, self.masses / z, 1.0, self.remainder / z, self.support_note + " (conditional)"
        )


@dataclass(frozen=True)
class DecisionMoments:
    """Exit-index and decision-time moments.

    ``expected_decision_time`` follows E[tau_{nu-1}] = d0 + d (E[nu] - 1)
    applied to the restricted E[nu]; the ``*_conditional`` twin applies it
    to E[nu | nu < mu].  That identity ignores the coupling between gap
    lengths and block counts, so ``exact_decision_time`` (restricted) and
    its conditional twin carry the true expectation E[tau_{nu-1} 1{nu < mu}].
    """

    trace_mass: float
    expected_exit_index: float
    expected_exit_index_conditional: float
    expected_decision_time: float
    expected_decision_time_conditional: float
    exact_decision_time: float
    exact_decision_time_conditional: float


def _analysis(params, terms, tol, backend, n_max=DEFAULT_N_MAX, tail_extent=None):
    if terms is not None and terms != derive_geometric_terms(params):
        raise ValueError("terms do not match params")
    return analyze_exit(params, tol=tol, n_max=n_max, backend=backend, tail_extent=tail_extent)


def _ratio(x: float, z: float) -> float:
    return x / z if z > 0 else float("nan")


def expected_exit_index(
    params: NetworkParams, terms: Optional[GeometricTerms] = None, tol: float = DEFAULT_TOL, backend: str = "auto"
) -> float:
    """E[nu 1{nu < mu}]."""
    return _analysis(params, terms, tol, backend).exit_index_moment


def expected_decision_time(
    params: NetworkParams, terms: Optional[GeometricTerms] = None, tol: float = DEFAULT_TOL, backend: str = "auto"
) -> DecisionMoments:
    a = _analysis(params, terms, tol, backend)
    d0, d = params.mean_initial_observation, params.mean_observation_gap
    z = a.total_mass
    e_nu = a.exit_index_moment
    e_nu_c = _ratio(e_nu, z)
    return DecisionMoments(
        trace_mass=z,
        expected_exit_index=e_nu,
        expected_exit_index_conditional=e_nu_c,
        expected_decision_time=d0 + d * (e_nu - 1.0),
        expected_decision_time_conditional=d0 + d * (e_nu_c - 1.0),
        exact_decision_time=a.decision_time,
        exact_decision_time_conditional=_ratio(a.decision_time, z),
    )


def pmf_A_prev(
    params: NetworkParams, terms: Optional[GeometricTerms] = None, tol: float = DEFAULT_TOL, backend: str = "auto"
) -> DefectiveDistribution:
    """Law of A_{nu-1} on the trace; values >= T come only from nu = 0 (A_{-1} := A_0)."""
    a = _analysis(params, terms, tol, backend)
    return DefectiveDistribution(0, a.prev_pmf, a.total_mass, a.prev_remainder, "A_{nu-1} on {nu < mu}")


def pmf_A_exit(
    params: NetworkParams,
    terms: Optional[GeometricTerms] = None,
    tol: float = DEFAULT_TOL,
    tail_extent: Optional[int] = None,
    backend: str = "auto",
) -> DefectiveDistribution:
    """Law of A_nu on the trace, tabulated on T..T+tail_extent."""
    a = _analysis(params, terms, tol, backend, tail_extent=tail_extent)
    return DefectiveDistribution(a.threshold, a.exit_pmf, a.total_mass, a.exit_remainder, "A_nu on {nu < mu}")


def raised_threshold(total_nodes: int, alpha: float) -> int:
    """ceil(M (1 + alpha) / 2), rounded first so 20 * 1.1 / 2 stays 11."""
    return int(math.ceil(round(total_nodes * (1.0 + alpha) / 2.0, 9)))


def burst_probabilities(
    params: NetworkParams,
    terms: Optional[GeometricTerms] = None,
    alpha: float = 0.0,
    tol: float = DEFAULT_TOL,
    backend: str = "auto",
) -> BurstProbabilities:
    """(q0, q1_alpha, p_A_prev).

    q0 is the trace mass, q1_alpha the trace mass with A_nu at or above the
    raised threshold, and p_A_prev the trace mass with A_{nu-1} below T.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    a = _analysis(params, terms, tol, backend)
    q0 = a.total_mass
    p_prev = math.fsum(a.prev_pmf[: a.threshold])
    return BurstProbabilities(q0, float(q1_curve(a, params.total_nodes, [alpha])[0]), p_prev)


def q1_curve(analysis, total_nodes: int, alphas) -> np.ndarray:
    """q1 for each alpha from one exit analysis; nonincreasing when alphas are sorted."""
    T = analysis.threshold
    q0 = analysis.total_mass
    exit_pmf = analysis.exit_pmf
    # tails[j] = P{A_nu >= T + j}; a reversed cumulative sum is monotone by construction
    tails = np.cumsum(exit_pmf[::-1])[::-1] + analysis.exit_remainder
    out = np.empty(len(alphas))
    for i, alpha in enumerate(alphas):
        j = raised_threshold(total_nodes, alpha) - T
        if j <= 0:
            out[i] = q0
        elif j < len(tails):
            out[i] = min(q0, float(tails[j]))
        else:
            # past the table: the remainder bounds it from above
            out[i] = min(q0, analysis.exit_remainder)
    return out
