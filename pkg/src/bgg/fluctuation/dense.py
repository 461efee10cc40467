"""Brute-force bivariate backend: full (u, v) coefficient grids.

Nothing here relies on the conditional split used by the factorized path.
The joint increment PGF gamma(u, v) = beta / (1 - pA u - pH v) is applied to
whole coefficient grids, and the inverse operator at level (T-1, T-1) is a
plain grid sum:

    P{nu = n, nu < mu} = D[gamma0 gamma^(n-1) gamma(1, v)] - D[gamma0 gamma^n]

Multiplying a grid by 1 / (1 - pA u - pH v) is the recursion
h[i, j] = src[i, j] + pA h[i-1, j] + pH h[i, j-1], run column by column.
Memory is O((T + L) T); meant for thresholds up to a few hundred.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ..model import NetworkParams
from .analysis import ExitAnalysis, clamp_dust

DENSE_MAX_THRESHOLD = 500


class _Kernel:
    """One observation gap with mean d: its joint block-count PGF on grids."""

    def __init__(self, mean_gap: float, lam_a: float, lam_h: float):
        s = 1.0 + mean_gap * (lam_a + lam_h)
        self.beta, self.pA, self.pH = 1.0 / s, mean_gap * lam_a / s, mean_gap * lam_h / s
        # E[gap | x, y blocks] = (1 + x + y) d / s, and (1 + u d/du + v d/dv) gamma = beta / D^2
        self.time_scale = mean_gap / s

    def solve(self, src: np.ndarray, rows: int, cols: int) -> np.ndarray:
        """src / (1 - pA u - pH v), truncated to rows x cols."""
        out = np.zeros((rows, cols))
        r, c = min(rows, src.shape[0]), min(cols, src.shape[1])
        prev = np.zeros(rows)
        col = np.zeros(rows)
        for j in range(cols):
            col[:] = 0.0
            if j < c:
                col[:r] = src[:r, j]
            col += self.pH * prev
            prev = lfilter([1.0], [1.0, -self.pA], col)
            out[:, j] = prev
        return out

    def times(self, f, rows, cols):
        """f * gamma."""
        return self.beta * self.solve(f, rows, cols)

    def times_time(self, f, rows, cols):
        """f * E[gap; X = x, Y = y] as a grid."""
        return self.time_scale * self.beta * self.solve(self.solve(f, rows, cols), rows, cols)


def joint_increment_grid(mean_gap: float, lam_a: float, lam_h: float, rows: int, cols: int) -> np.ndarray:
    """Coefficients of beta / (1 - pA u - pH v) for degrees < (rows, cols)."""
    unit = np.ones((1, 1))
    return _Kernel(mean_gap, lam_a, lam_h).times(unit, rows, cols)


def analyze(params: NetworkParams, tol: float, n_max: int, tail_extent: int) -> ExitAnalysis:
    T, L = params.threshold, tail_extent
    if T > DENSE_MAX_THRESHOLD:
        raise ValueError(f"dense backend limited to threshold <= {DENSE_MAX_THRESHOLD}")
    lam_a, lam_h = params.lambda_attacker, params.lambda_honest
    d0, d = params.mean_initial_observation, params.mean_observation_gap
    rows = T + L + 1
    k0, k = _Kernel(d0, lam_a, lam_h), _Kernel(d, lam_a, lam_h)
    unit = np.ones((1, 1))

    g0 = k0.times(unit, rows, T)
    g = k.times(unit, T, T)
    aH = d * lam_h / (1.0 + d * lam_h)
    # y_cdf[m] = P{Y <= m} for one regular gap
    y_cdf = 1.0 - aH ** np.arange(1, T + 1)

    # Rm[i, j] = P{X >= T - i, Y < T - j} for one regular gap, i, j < T
    cum = np.cumsum(np.cumsum(g, axis=0), axis=1)
    ii, jj = np.meshgrid(np.arange(T), np.arange(T), indexing="ij")
    Rm = y_cdf[T - jj - 1] - cum[T - ii - 1, T - jj - 1]

    aH0 = d0 * lam_h / (1.0 + d0 * lam_h)
    f = g0[:T, :T].copy()
    tf = k0.times_time(unit, T, T)
    p = [(1.0 - aH0**T) - f.sum()]
    exit_pmf = g0[T:, :].sum(axis=1)
    prev_pmf = np.zeros(rows)
    prev_pmf[T:] = exit_pmf
    time = 0.0

    n, bound, converged = 0, float(f.sum()), False
    while True:
        if bound < tol:
            converged = True
            break
        if n >= n_max:
            break
        n += 1
        full = k.times(f, rows, T)
        # P{A_{n-1} < T, H_n < T}: honest side of one more gap only
        G = float(f.sum(axis=0) @ y_cdf[::-1])
        p.append(G - full[:T, :].sum())
        exit_pmf += full[T:, :].sum(axis=1)
        prev_pmf[:T] += (f * Rm).sum(axis=1)
        time += float((tf * Rm).sum())
        tf = k.times(tf, T, T) + k.times_time(f, T, T)
        f = full[:T, :].copy()
        bound = float(f.sum())

    p = clamp_dust(np.asarray(p), "exit index")
    prev_pmf = clamp_dust(prev_pmf, "A_prev pmf")
    total = math.fsum(p)
    return ExitAnalysis(
        threshold=T,
        tail_extent=L,
        p=p,
        truncation_error_bound=bound,
        converged=converged,
        prev_pmf=prev_pmf,
        prev_remainder=max(0.0, total - math.fsum(prev_pmf)),
        exit_pmf=exit_pmf,
        exit_remainder=max(0.0, total - math.fsum(exit_pmf)),
        decision_time=time,
        backend="dense",
    )
