"""Per-step factorized evaluation of the exit functional.

Both block streams share the observation clock, so the per-gap increments
(X, Y) are not independent: their joint PGF is beta / (1 - pA u - pH v),
a negative multinomial.  Seen as a stream of trials (attacker block with
probability pA, honest block pH, observation beta) the honest count before
the r-th observation, given the attacker count a, is negative binomial with
shape r + a and success probability q = 1 - pH.  That gives an exact split:

    P{A_{r-1} = a, A_r = l, H_r < T} = P{A_{r-1} = a} P{X = l - a} I_q(r + l, T)

where the u-side is a geometric-power series and the v-side is a partial
sum of another.  Each step then costs O(T) instead of O(T^2).

A first gap with a larger mean than the later ones is handled by writing
Exp(mean d0) as a sum of K ~ Geometric(d / d0) regular gaps.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ..model import NetworkParams
from .analysis import BackendUnavailable, ExitAnalysis, clamp_dust
from .series import GeometricPGF, nb_partial_sums, nb_power_coefficients, partial_sum

# tail of the first-gap mixture is dropped once below tol * this
_MIXTURE_TAIL_FACTOR = 1e-3
_MAX_TAIL_STEPS = 200_000


class _Setup:
    def __init__(self, params: NetworkParams):
        d0, d = params.mean_initial_observation, params.mean_observation_gap
        if d0 < d * (1.0 - 1e-12):
            raise BackendUnavailable(
                "factorized backend needs mean_initial_observation >= mean_observation_gap; use dense"
            )
        lam_a, lam_h = params.lambda_attacker, params.lambda_honest
        s = 1.0 + d * (lam_a + lam_h)
        self.T = params.threshold
        self.attacker = GeometricPGF(1.0 / (1.0 + d * lam_a), d * lam_a / (1.0 + d * lam_a))
        self.honest = GeometricPGF(1.0 / (1.0 + d * lam_h), d * lam_h / (1.0 + d * lam_h))
        self.pH = d * lam_h / s
        # honest blocks between consecutive non-honest trials
        self.gap_law = GeometricPGF(1.0 - self.pH, self.pH)
        self.trial_time = d / s
        self.mix_p = min(1.0, d / d0)


def _mixture(mix_p: float, tol: float):
    if mix_p >= 1.0 - 1e-15:
        return np.array([1.0]), 0.0
    k_max = int(math.ceil(math.log(tol * _MIXTURE_TAIL_FACTOR) / math.log1p(-mix_p)))
    k = np.arange(1, k_max + 1)
    w = mix_p * (1.0 - mix_p) ** (k - 1)
    return w, (1.0 - mix_p) ** k_max


class _HonestCDF:
    """C[s] = P{NB(s; q) <= m}, grown on demand."""

    def __init__(self, law: GeometricPGF, m: int):
        self.law, self.m = law, m
        self.values = np.zeros(0)

    def upto(self, s_max: int) -> np.ndarray:
        if len(self.values) <= s_max:
            n = max(s_max + 1, 2 * len(self.values))
            self.values = nb_partial_sums(self.law, np.arange(n), self.m)
        return self.values


def _attacker_pmf(setup: _Setup, r: int, m: int) -> np.ndarray:
    """P{A_r = a} for a = 0..m after r regular gaps (r = 0: point mass)."""
    if r == 0:
        out = np.zeros(m + 1)
        out[0] = 1.0
        return out
    return nb_power_coefficients(setup.attacker, r, m).coefficients


def analyze(params: NetworkParams, tol: float, n_max: int, tail_extent: int) -> ExitAnalysis:
    st = _Setup(params)
    T, L = st.T, tail_extent
    w, mix_tail = _mixture(st.mix_p, tol)
    k_max = len(w)
    C = _HonestCDF(st.gap_law, T - 1)

    # pass 1: how many observations until the surviving mass drops below tol
    alive = [1.0]
    n_obs, bound, converged = 0, 1.0, False
    r = 0
    while True:
        r += 1
        c = C.upto(r + T)
        alive.append(float(_attacker_pmf(st, r, T - 1) @ c[r : r + T]))
        if r < k_max:
            continue
        n_obs = r - k_max
        bound = float(w @ np.asarray(alive[n_obs + 1 : n_obs + k_max + 1])) + mix_tail
        if bound < tol:
            converged = True
            break
        if n_obs >= n_max:
            break
    R = k_max + n_obs

    # pass 2: exact terms for r = 1..R
    aA, bA = st.attacker.alpha_, st.attacker.beta
    extra = 0 if aA == 0.0 else min(_MAX_TAIL_STEPS, int(math.ceil(math.log(1e-17) / math.log(aA))))
    s_top = R + T + L + 2 + extra
    c = C.upto(s_top)[: s_top + 1]
    c2 = _HonestCDF(st.gap_law, T - 2).upto(s_top)[: s_top + 1]
    # D[s] = sum_j aA**j C[s + j]
    D = _discounted_tail(c, aA)
    D2 = _discounted_tail(c2, aA)

    a_idx = np.arange(T)
    land = bA * aA ** (T - a_idx)          # P{X = T - a}
    jumps = aA ** np.arange(L + 1)

    E = np.zeros(R + 1)
    exit_pmf = np.zeros(L + 1)
    prev_pmf = np.zeros(T + L + 1)
    trials = 0.0
    cw = np.concatenate([[0.0], np.cumsum(w)])
    ratio = st.pH / st.gap_law.beta
    for r in range(1, R + 1):
        # weight of pairs (k, n) with k + n = r, 1 <= k <= k_max, 1 <= n <= n_obs
        lo, hi = max(1, r - n_obs), min(k_max, r - 1)
        weight = cw[hi] - cw[lo - 1] if hi >= lo else 0.0
        f = _attacker_pmf(st, r - 1, T - 1)
        fl = f * land
        S = float(np.sum(fl))
        E[r] = S * D[r + T]
        if weight == 0.0:
            continue
        exit_pmf += weight * S * jumps * c[r + T : r + T + L + 1]
        prev_pmf[:T] += weight * fl * D[r + T]
        trials += weight * float(fl @ (r - 1 + a_idx)) * (D[r + T] + ratio * D2[r + T + 1])

    # nu = 0: attacker already at or above T at the first observation
    p0 = 0.0
    for k in range(1, k_max + 1):
        f = _attacker_pmf(st, k, T + L)
        h_cdf = partial_sum(nb_power_coefficients(st.honest, k, T - 1), T - 1)
        z = max(0.0, h_cdf - float(f[:T] @ c[k : k + T]))
        p0 += w[k - 1] * z
        zl = f[T:] * c[k + T : k + T + L + 1]
        exit_pmf += w[k - 1] * zl
        prev_pmf[T:] += w[k - 1] * zl

    p = np.zeros(n_obs + 1)
    p[0] = p0
    for n in range(1, n_obs + 1):
        ks = np.arange(1, min(k_max, R - n) + 1)
        p[n] = float(w[ks - 1] @ E[ks + n])
    p = clamp_dust(p, "exit index")
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
        decision_time=trials * st.trial_time,
        backend="factorized",
    )


def _discounted_tail(c: np.ndarray, a: float) -> np.ndarray:
    """D[s] = C[s] + a * D[s + 1], run backwards from the end of C."""
    # past the end C is nonincreasing, so C_last / (1 - a) bounds the rest
    beyond = c[-1] / (1.0 - a)
    rev, _ = lfilter([1.0], [1.0, -a], c[::-1], zi=[a * beyond])
    return rev[::-1].copy()
