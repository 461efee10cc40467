"""Backend selection and the public exit-index entry points."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..model import GeometricTerms, NetworkParams, derive_geometric_terms
from . import dense, factorized
from .analysis import DEFAULT_N_MAX, DEFAULT_TOL, BackendUnavailable, ExitAnalysis, default_tail_extent

BACKENDS = ("auto", "dense", "factorized")
# auto picks dense below this threshold, where the two agree to ~1e-12
AUTO_DENSE_MAX_THRESHOLD = 25


class NonConvergence(RuntimeError):
    """The exit series did not reach the tolerance within n_max terms."""


def choose_backend(params: NetworkParams, backend: str = "auto") -> str:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}")
    factorizable = params.mean_initial_observation >= params.mean_observation_gap * (1.0 - 1e-12)
    if backend == "factorized" and not factorizable:
        raise BackendUnavailable(
            "factorized backend needs mean_initial_observation >= mean_observation_gap; use dense"
        )
    if backend != "auto":
        return backend
    if params.threshold <= AUTO_DENSE_MAX_THRESHOLD or not factorizable:
        return "dense"
    return "factorized"


@functools.lru_cache(maxsize=64)
def _analyze_cached(params, tol, n_max, backend, tail_extent):
    impl = dense.analyze if backend == "dense" else factorized.analyze
    return impl(params, tol, n_max, tail_extent)


def analyze_exit(
    params: NetworkParams,
    tol: float = DEFAULT_TOL,
    n_max: int = DEFAULT_N_MAX,
    backend: str = "auto",
    tail_extent: Optional[int] = None,
) -> ExitAnalysis:
    """Exact exit-index law plus the A_{nu-1}, A_nu and decision-time pieces.

    Results are cached per (params, tol, n_max, backend, tail_extent); the
    returned arrays are shared, so treat them as read-only.
    """
    params.check()
    if not tol > 0:
        raise ValueError("tol must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    chosen = choose_backend(params, backend)
    if tail_extent is None:
        tail_extent = default_tail_extent(params, tol)
    return _analyze_cached(params, float(tol), int(n_max), chosen, int(tail_extent))


@dataclass(frozen=True, eq=False)
class ExitIndexSeries:
    """p[n] = P{nu = n, nu < mu}; bound caps the mass past len(p) - 1."""

    p: np.ndarray
    truncation_error_bound: float
    converged: bool

    def __len__(self):
        return len(self.p)

    @property
    def total(self) -> float:
        return math.fsum(self.p)


def exit_index_series(
    params: NetworkParams,
    terms: Optional[GeometricTerms] = None,
    N_max: int = DEFAULT_N_MAX,
    tol: float = DEFAULT_TOL,
    backend: str = "auto",
) -> ExitIndexSeries:
    """Exit-index pmf on the trace {nu < mu}.

    ``terms``, when given, must match ``params``; it is accepted so callers
    holding precomputed geometric pairs can assert consistency cheaply.
    """
    if terms is not None and terms != derive_geometric_terms(params):
        raise ValueError("terms do not match params")
    a = analyze_exit(params, tol=tol, n_max=N_max, backend=backend)
    return ExitIndexSeries(a.p.copy(), a.truncation_error_bound, a.converged)


def prob_attacker_wins(
    params: NetworkParams,
    N_max: int = DEFAULT_N_MAX,
    tol: float = DEFAULT_TOL,
    backend: str = "auto",
    strict: bool = False,
) -> float:
    """P{nu < mu}: the attacker reaches the threshold strictly first.

    With ``strict`` a non-converged series raises NonConvergence instead
    of returning a lower bound.
    """
    a = analyze_exit(params, tol=tol, n_max=N_max, backend=backend)
    if strict and not a.converged:
        raise NonConvergence(
            f"exit series not converged after {len(a.p) - 1} terms (bound {a.truncation_error_bound:.3e})"
        )
    return a.total_mass
