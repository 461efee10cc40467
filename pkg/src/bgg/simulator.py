"""Monte Carlo race between attacker and honest block streams.

Episodes are simulated in fixed blocks of CHUNK_SIZE.  Chunk c draws from
``Generator(Philox(SeedSequence(base_seed, spawn_key=(c,))))`` and is always
simulated in full, so episode i's path depends only on (base_seed, i) and
never on the batch size or on how chunks are spread over workers.  Chunk
tallies are integer counts plus float sums merged in chunk order, which keeps
every estimate bit-identical for any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .marginals import raised_threshold
from .model import NetworkParams

CHUNK_SIZE = 16_384
CENSORING_LIMIT = 0.01
GAP_LAWS = ("exponential", "deterministic", "gamma")
_NOT_YET = np.iinfo(np.int64).max


class ExcessiveCensoring(RuntimeError):
    """More than CENSORING_LIMIT of the episodes hit the observation cap."""

    def __init__(self, fraction: float, cap: int):
        self.fraction, self.cap = fraction, cap
        super().__init__(f"{fraction:.4%} of episodes censored at {cap} observations (limit {CENSORING_LIMIT:.0%})")


def _rng(seed, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def default_max_observations(params: NetworkParams, top_threshold: Optional[int] = None) -> int:
    """20 times the expected number of observations the slower side needs to cross."""
    T = params.threshold
    top = max(T, top_threshold or T)
    steps = []
    for level, lam in ((top, params.lambda_attacker), (T, params.lambda_honest)):
        if lam > 0:
            first = params.mean_initial_observation * lam
            steps.append(1.0 + max(0.0, level - first) / (params.mean_observation_gap * lam))
    return int(math.ceil(20 * max(steps)))


def _draw_gaps(rng, law: str, mean: float, shape: float, n: int) -> np.ndarray:
    if law == "exponential":
        return rng.exponential(mean, n)
    if law == "deterministic":
        return np.full(n, mean)
    return rng.gamma(shape, mean / shape, n)


@dataclass
class _Paths:
    """Per-episode outcomes of one chunk."""

    nu: np.ndarray
    mu: np.ndarray
    A0: np.ndarray
    A_prev: np.ndarray
    A_exit: np.ndarray
    H_prev: np.ndarray
    H_exit: np.ndarray
    tau_prev: np.ndarray
    tau_exit: np.ndarray
    nu_raised: np.ndarray  # one row per raised threshold
    censored: np.ndarray


def _simulate(params: NetworkParams, rng, n: int, raised: Sequence[int], cap: int, law: str, shape: float) -> _Paths:
    T = params.threshold
    lam_a, lam_h = params.lambda_attacker, params.lambda_honest
    top = max([T, *raised])
    A = np.zeros(n, np.int64)
    H = np.zeros(n, np.int64)
    t = np.zeros(n)
    nu = np.full(n, _NOT_YET)
    mu = np.full(n, _NOT_YET)
    nu_raised = np.full((len(raised), n), _NOT_YET)
    out = {k: np.zeros(n, np.int64) for k in ("A0", "A_prev", "A_exit", "H_prev", "H_exit")}
    tau_prev = np.zeros(n)
    tau_exit = np.zeros(n)
    active = np.ones(n, bool)

    for k in range(cap + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        mean = params.mean_initial_observation if k == 0 else params.mean_observation_gap
        dt = _draw_gaps(rng, law, mean, shape, idx.size)
        a_old, h_old, t_old = A[idx], H[idx], t[idx]
        a_new = a_old + rng.poisson(lam_a * dt)
        h_new = h_old + rng.poisson(lam_h * dt)
        t_new = t_old + dt
        A[idx], H[idx], t[idx] = a_new, h_new, t_new
        if k == 0:
            out["A0"][idx] = a_new

        hit = (nu[idx] == _NOT_YET) & (a_new >= T)
        j = idx[hit]
        nu[j] = k
        out["A_exit"][j] = a_new[hit]
        out["H_exit"][j] = h_new[hit]
        tau_exit[j] = t_new[hit]
        if k == 0:
            # no observation before the first: A_{-1} := A_0, tau_{-1} := 0
            out["A_prev"][j] = a_new[hit]
            out["H_prev"][j] = h_new[hit]
        else:
            out["A_prev"][j] = a_old[hit]
            out["H_prev"][j] = h_old[hit]
            tau_prev[j] = t_old[hit]

        mu[idx[(mu[idx] == _NOT_YET) & (h_new >= T)]] = k
        for g, level in enumerate(raised):
            row = nu_raised[g]
            row[idx[(row[idx] == _NOT_YET) & (a_new >= level)]] = k

        attacker_done = (a_new >= top) | (lam_a == 0)
        honest_done = (mu[idx] != _NOT_YET) | (lam_h == 0)
        active[idx[attacker_done & honest_done]] = False

    return _Paths(nu=nu, mu=mu, tau_prev=tau_prev, tau_exit=tau_exit, nu_raised=nu_raised, censored=active, **out)


@dataclass(frozen=True)
class ExitSummary:
    """One episode.  ``nu``/``mu`` are None when that side never crosses
    (zero rate) or had not crossed when the cap was hit (``censored``)."""

    nu: Optional[int]
    mu: Optional[int]
    A_prev: int
    A_exit: int
    H_prev: int
    H_exit: int
    tau_prev: float
    tau_exit: float
    attacker_wins: bool
    censored: bool


def _wins(nu, mu):
    return (nu != _NOT_YET) & (nu < mu)


def simulate_episode(
    params: NetworkParams,
    seed,
    max_observations: Optional[int] = None,
    gap_law: str = "exponential",
    gap_shape: float = 1.0,
) -> ExitSummary:
    params.check()
    cap = max_observations or default_max_observations(params)
    if cap < 1:
        raise ValueError("max_observations must be positive")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    p = _simulate(params, rng, 1, [], cap, gap_law, gap_shape)
    nu, mu = int(p.nu[0]), int(p.mu[0])
    found = nu != _NOT_YET
    return ExitSummary(
        nu=nu if found else None,
        mu=mu if mu != _NOT_YET else None,
        A_prev=int(p.A_prev[0]),
        A_exit=int(p.A_exit[0]),
        H_prev=int(p.H_prev[0]),
        H_exit=int(p.H_exit[0]),
        tau_prev=float(p.tau_prev[0]),
        tau_exit=float(p.tau_exit[0]),
        attacker_wins=bool(_wins(p.nu, p.mu)[0]),
        censored=bool(p.censored[0]),
    )


def _bincount(x: np.ndarray, size: int = 0) -> np.ndarray:
    return np.bincount(x, minlength=size).astype(np.int64)


def _add_counts(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(len(a), len(b))
    return np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b)))


@dataclass
class _Tally:
    episodes: int = 0
    wins: int = 0
    ties: int = 0
    losses: int = 0
    undecided: int = 0
    censored: int = 0
    nu_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    prev_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    exit_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    q1_tail: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    q1_resolved: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    prev_below: int = 0
    # float sums of tau_prev and tau_prev^2 over winning episodes
    tau_sum: float = 0.0
    tau_sq: float = 0.0
    a0_sum: int = 0
    a0_sq: int = 0

    def merge(self, o: "_Tally") -> "_Tally":
        return _Tally(
            episodes=self.episodes + o.episodes,
            wins=self.wins + o.wins,
            ties=self.ties + o.ties,
            losses=self.losses + o.losses,
            undecided=self.undecided + o.undecided,
            censored=self.censored + o.censored,
            nu_counts=_add_counts(self.nu_counts, o.nu_counts),
            prev_counts=_add_counts(self.prev_counts, o.prev_counts),
            exit_counts=_add_counts(self.exit_counts, o.exit_counts),
            q1_tail=_add_counts(self.q1_tail, o.q1_tail),
            q1_resolved=_add_counts(self.q1_resolved, o.q1_resolved),
            prev_below=self.prev_below + o.prev_below,
            tau_sum=self.tau_sum + o.tau_sum,
            tau_sq=self.tau_sq + o.tau_sq,
            a0_sum=self.a0_sum + o.a0_sum,
            a0_sq=self.a0_sq + o.a0_sq,
        )


def _tally_chunk(args) -> _Tally:
    params, base_seed, chunk, n, levels, cap, law, shape = args
    p = _simulate(params, _rng(base_seed, chunk), CHUNK_SIZE, levels, cap, law, shape)
    sl = slice(0, n)
    nu, mu = p.nu[sl], p.mu[sl]
    win = _wins(nu, mu)
    tie = (nu != _NOT_YET) & (nu == mu)
    lose = (mu != _NOT_YET) & (mu < nu)
    T = params.threshold
    tau = p.tau_prev[sl][win]
    a0 = p.A0[sl]
    return _Tally(
        episodes=n,
        wins=int(win.sum()),
        ties=int(tie.sum()),
        losses=int(lose.sum()),
        undecided=int(n - win.sum() - tie.sum() - lose.sum()),
        censored=int(p.censored[sl].sum()),
        nu_counts=_bincount(nu[win]),
        prev_counts=_bincount(p.A_prev[sl][win]),
        exit_counts=_bincount(p.A_exit[sl][win]),
        q1_tail=np.array([int((win & (p.A_exit[sl] >= lv)).sum()) for lv in levels], np.int64),
        q1_resolved=np.array(
            [int(_wins(p.nu_raised[g][sl], mu).sum()) for g in range(len(levels))], np.int64
        ),
        prev_below=int((p.A_prev[sl][win] < T).sum()),
        tau_sum=float(tau.sum()),
        tau_sq=float((tau * tau).sum()),
        a0_sum=int(a0.sum()),
        a0_sq=int((a0 * a0).sum()),
    )


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def _freq(count: int, n: int) -> Estimate:
    p = count / n
    return Estimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n))


def _freqs(counts: np.ndarray, n: int) -> np.ndarray:
    p = counts / n
    return np.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True, eq=False)
class SimEstimates:
    """Empirical counterparts of the analytic quantities.

    Every frequency is over all episodes, so trace-restricted quantities
    compare directly with their defective analytic versions.
    """

    params: NetworkParams
    base_seed: int
    max_observations: int
    gap_law: str
    alpha_grid: np.ndarray
    tally: _Tally = field(repr=False)

    @property
    def episode_count(self) -> int:
        return self.tally.episodes

    @property
    def censored_fraction(self) -> float:
        return self.tally.censored / self.tally.episodes

    @property
    def p_win(self) -> Estimate:
        return _freq(self.tally.wins, self.tally.episodes)

    @property
    def p_lose(self) -> Estimate:
        return _freq(self.tally.losses, self.tally.episodes)

    @property
    def tie_fraction(self) -> Estimate:
        return _freq(self.tally.ties, self.tally.episodes)

    @property
    def undecided_fraction(self) -> float:
        return self.tally.undecided / self.tally.episodes

    def _pmf(self, counts: np.ndarray):
        n = self.tally.episodes
        return counts / n, _freqs(counts, n)

    @property
    def exit_index_pmf(self):
        """(P{nu = k, win}, standard errors) for k = 0.."""
        return self._pmf(self.tally.nu_counts)

    @property
    def A_prev_pmf(self):
        return self._pmf(self.tally.prev_counts)

    @property
    def A_exit_pmf(self):
        return self._pmf(self.tally.exit_counts)

    @property
    def q0(self) -> Estimate:
        return self.p_win

    @property
    def q1_tail(self) -> List[Estimate]:
        """P{A_nu >= raised threshold, win} per grid alpha."""
        return [_freq(int(c), self.tally.episodes) for c in self.tally.q1_tail]

    @property
    def q1_resolved(self) -> List[Estimate]:
        """P{attacker reaches the raised threshold before honest reaches T}."""
        return [_freq(int(c), self.tally.episodes) for c in self.tally.q1_resolved]

    @property
    def p_A_prev(self) -> Estimate:
        return _freq(self.tally.prev_below, self.tally.episodes)

    def _moment(self, total: float, square: float, n: int) -> Estimate:
        m = total / n
        var = max(square / n - m * m, 0.0)
        return Estimate(m, math.sqrt(var / n))

    @property
    def exit_index_moment(self) -> Estimate:
        """E[nu 1{win}]."""
        c = self.tally.nu_counts
        k = np.arange(len(c))
        return self._moment(float(k @ c), float((k * k) @ c), self.tally.episodes)

    @property
    def exit_index_conditional(self) -> Estimate:
        c = self.tally.nu_counts
        k = np.arange(len(c))
        w = self.tally.wins
        return self._moment(float(k @ c), float((k * k) @ c), w) if w else Estimate(float("nan"), float("nan"))

    @property
    def decision_time(self) -> Estimate:
        """E[tau_{nu-1} 1{win}]."""
        return self._moment(self.tally.tau_sum, self.tally.tau_sq, self.tally.episodes)

    @property
    def decision_time_conditional(self) -> Estimate:
        w = self.tally.wins
        if not w:
            return Estimate(float("nan"), float("nan"))
        return self._moment(self.tally.tau_sum, self.tally.tau_sq, w)

    @property
    def mean_A0(self) -> Estimate:
        return self._moment(float(self.tally.a0_sum), float(self.tally.a0_sq), self.tally.episodes)


def run_batch(
    params: NetworkParams,
    episodes: int,
    base_seed: int = 0,
    alpha_grid: Sequence[float] = (),
    workers: int = 1,
    max_observations: Optional[int] = None,
    gap_law: str = "exponential",
    gap_shape: float = 1.0,
    allow_censoring: bool = False,
) -> SimEstimates:
    """Simulate ``episodes`` races and aggregate them.

    Raises ExcessiveCensoring when more than 1% of episodes hit the cap,
    unless ``allow_censoring`` is set.
    """
    params.check()
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if gap_law not in GAP_LAWS:
        raise ValueError(f"gap_law must be one of {', '.join(GAP_LAWS)}")
    if gap_law == "gamma" and not gap_shape > 0:
        raise ValueError("gap_shape must be positive")
    grid = np.asarray(alpha_grid, float)
    levels = [raised_threshold(params.total_nodes, a) for a in grid]
    cap = max_observations or default_max_observations(params, max(levels, default=None))
    if cap < 1:
        raise ValueError("max_observations must be positive")

    jobs = []
    for c in range(-(-episodes // CHUNK_SIZE)):
        n = min(CHUNK_SIZE, episodes - c * CHUNK_SIZE)
        jobs.append((params, base_seed, c, n, levels, cap, gap_law, gap_shape))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_tally_chunk, jobs))
    else:
        parts = [_tally_chunk(j) for j in jobs]
    tally = _Tally()
    for part in parts:
        tally = tally.merge(part)

    est = SimEstimates(params, base_seed, cap, gap_law, grid, tally)
    if not allow_censoring and est.censored_fraction > CENSORING_LIMIT:
        raise ExcessiveCensoring(est.censored_fraction, cap)
    return est


@dataclass(frozen=True)
class Discrepancy:
    quantity: str
    analytic: float
    empirical: float
    se: float
    z: float
    passed: bool


@dataclass(frozen=True)
class CompareReport:
    z_threshold: float
    rows: List[Discrepancy]
    tv_distances: Dict[str, tuple]  # name -> (tv, 3-sigma aggregate bound)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(tv <= bound for tv, bound in self.tv_distances.values())

    @property
    def failures(self) -> List[str]:
        bad = [r.quantity for r in self.rows if not r.passed]
        return bad + [k for k, (tv, bound) in self.tv_distances.items() if tv > bound]


def _z(analytic: float, emp: float, se: float) -> float:
    if analytic == emp:
        return 0.0
    return (emp - analytic) / se if se > 0 else math.inf


def compare_report(analytic: Dict, sim: SimEstimates, z_threshold: float = 3.0) -> CompareReport:
    """z-scores per quantity and TV distances for the two A-laws.

    ``analytic`` maps names to values: p_win, E_nu, E_tau_prev, p_A_prev,
    q1 (sequence aligned with sim.alpha_grid), pmf_A_prev, pmf_A_exit,
    exit_index (arrays), and ``params`` for the consistency check.
    """
    if analytic.get("params") is not None and analytic["params"] != sim.params:
        raise ValueError("analytic results and simulation use different parameters")
    n = sim.episode_count
    # a zero-variance estimate (frequency 0 or 1) gets the binomial floor 1/n instead
    floor = 1.0 / n
    rows = []

    def add(name, a, est: Estimate):
        se = max(est.se, floor)
        z = _z(a, est.value, se)
        rows.append(Discrepancy(name, a, est.value, est.se, z, abs(z) <= z_threshold))

    if "p_win" in analytic:
        add("p_win", analytic["p_win"], sim.p_win)
        add("q0", analytic["p_win"], sim.q0)
    if "E_nu" in analytic:
        add("E_nu", analytic["E_nu"], sim.exit_index_moment)
    if "E_tau_prev" in analytic:
        add("E_tau_prev", analytic["E_tau_prev"], sim.decision_time)
    if "p_A_prev" in analytic:
        add("p_A_prev", analytic["p_A_prev"], sim.p_A_prev)
    if "q1" in analytic:
        for alpha, a, est in zip(sim.alpha_grid, analytic["q1"], sim.q1_tail):
            add(f"q1[{alpha:g}]", float(a), est)

    tvs = {}
    for key, emp in (("pmf_A_prev", sim.A_prev_pmf), ("pmf_A_exit", sim.A_exit_pmf), ("exit_index", sim.exit_index_pmf)):
        if key not in analytic:
            continue
        start, masses = analytic[key]
        p_hat, se = emp
        size = max(start + len(masses), len(p_hat))
        a = np.zeros(size)
        a[start : start + len(masses)] = masses
        e = np.pad(p_hat, (0, size - len(p_hat)))
        s = np.pad(se, (0, size - len(se)))
        for k in np.flatnonzero((a > 0) | (e > 0)):
            add(f"{key}[{k}]", float(a[k]), Estimate(float(e[k]), float(s[k])))
        # TV between defective laws against half the summed pointwise z-sigma bands
        tv = 0.5 * float(np.abs(a - e).sum())
        bound = 0.5 * z_threshold * float(np.sum(np.sqrt(a * (1 - a) / n))) + floor
        tvs[key] = (tv, bound)
    return CompareReport(z_threshold, rows, tvs)
