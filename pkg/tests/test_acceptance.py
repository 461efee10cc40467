"""Acceptance gate: each test records one PASS/FAIL line, printed at the end of the run."""
import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bgg.cli import bundled_config, main
from bgg.config import parse_config
from bgg.fluctuation import analyze_exit
from bgg.game import cost_action, cost_action_expanded, optimal_alpha, total_cost
from bgg.marginals import expected_decision_time, q1_curve
from bgg.model import NetworkParams
from bgg.simulator import compare_report, run_batch

REF_CFG = Path(__file__).resolve().parents[1] / "src" / "bgg" / "data" / "reference_m20.cfg"
ALPHAS = (0.0, 0.1, 0.2, 0.5)

PARAM_SETS = {
    "symmetric": (1.0, 1.0, 1.0, 1.0),
    "attacker-weak": (0.4, 1.5, 1.5, 0.8),
    "attacker-strong": (2.5, 0.9, 3.0, 0.7),
}


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.slow
def test_reference_scenario_matches_monte_carlo(reference, record_criterion):
    start = time.perf_counter()
    a = analyze_exit(reference, tol=1e-12)
    m = expected_decision_time(reference, tol=1e-12)
    est = run_batch(reference, 1_000_000, base_seed=0, alpha_grid=ALPHAS)
    analytic = {
        "params": reference,
        "p_win": a.total_mass,
        "E_nu": a.exit_index_moment,
        "E_tau_prev": m.exact_decision_time,
        "p_A_prev": math.fsum(a.prev_pmf[: a.threshold]),
        "q1": q1_curve(a, reference.total_nodes, ALPHAS),
        "pmf_A_prev": (0, a.prev_pmf),
        "pmf_A_exit": (a.threshold, a.exit_pmf),
    }
    rep = compare_report(analytic, est)
    elapsed = time.perf_counter() - start
    worst = max(rep.rows, key=lambda r: abs(r.z))
    tv = ", ".join(f"TV({k}) {tv:.2e} <= {b:.2e}" for k, (tv, b) in rep.tv_distances.items())
    ok = rep.passed and elapsed < 120
    record_criterion(
        "oracle agreement, M=20 reference vs 1e6 episodes",
        ok,
        f"{len(rep.rows)} quantities + pointwise PMFs within 3 se, max |z| {abs(worst.z):.2f} ({worst.quantity}); "
        f"{tv}; {elapsed:.1f}s",
    )
    assert rep.passed, rep.failures
    assert elapsed < 120


def _max_gap(x, y):
    n = max(len(x), len(y))
    xa, ya = np.zeros(n), np.zeros(n)
    xa[: len(x)], ya[: len(y)] = x, y
    return float(np.max(np.abs(xa - ya)))


def test_dense_and_factorized_backends_agree(record_criterion):
    worst = 0.0
    for lam_a, lam_h, d0, d in PARAM_SETS.values():
        for M in (2, 5, 10, 20, 50):
            p = NetworkParams(M, lam_a, lam_h, d0, d)
            f = analyze_exit(p, tol=1e-13, backend="factorized", tail_extent=40)
            g = analyze_exit(p, tol=1e-13, backend="dense", tail_extent=40)
            gaps = [
                _max_gap(f.p, g.p),
                _max_gap(f.prev_pmf, g.prev_pmf),
                _max_gap(f.exit_pmf, g.exit_pmf),
                _max_gap(q1_curve(f, M, ALPHAS), q1_curve(g, M, ALPHAS)),
                abs(f.total_mass - g.total_mass),
                abs(f.exit_index_moment - g.exit_index_moment),
                abs(f.decision_time - g.decision_time),
                abs(f.prev_remainder - g.prev_remainder),
                abs(f.exit_remainder - g.exit_remainder),
            ]
            worst = max(worst, *gaps)
    record_criterion("dense vs factorized backend, 15 cases", worst <= 1e-10, f"max abs difference {worst:.2e}")
    assert worst <= 1e-10


def test_micro_case(micro, record_criterion):
    # With no honest blocks the race ends when the attacker holds one block.
    # The first interval contains an attacker block with probability 1/2 (nu = 0);
    # each later interval does with probability 1/2 as well, so
    # P{nu = n} = 1/2 * 1/2 * (1/2)^(n-1) = 0.25 * 0.5^(n-1) for n >= 1, and E[nu] = 1.
    # A_{nu-1} = 0 exactly when nu >= 1, i.e. with probability 1/2.
    # A gap with no attacker block has mean 1/2, so the exact E[tau_{nu-1}] is
    # sum_n 0.25 * 0.5^(n-1) * n / 2 = 0.5, while d0 + d(E[nu] - 1) = 1.
    a = analyze_exit(micro, tol=1e-15)
    m = expected_decision_time(micro, tol=1e-15)
    expect = np.array([0.5] + [0.25 * 0.5 ** (n - 1) for n in range(1, len(a.p))])
    errs = {
        "p_win": abs(a.total_mass - 1.0),
        "P{nu=n}": float(np.max(np.abs(a.p - expect))),
        "E[nu]": abs(m.expected_exit_index - 1.0),
        "E[tau] identity": abs(m.expected_decision_time - 1.0),
        "E[tau] exact": abs(m.exact_decision_time - 0.5),
        "P{A_prev=0}": abs(a.prev_pmf[0] - 0.5),
    }
    worst = max(errs, key=errs.get)
    ok = errs[worst] <= 1e-9
    record_criterion(
        "closed-form micro case (M=2, lambda_H=0)",
        ok,
        f"max error {errs[worst]:.1e} ({worst}); E[tau_prev] = 1 via d0 + d(E[nu]-1), exact value 0.5",
    )
    assert ok, errs


def test_decision_time_identity(record_criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        M = int(rng.integers(2, 41))
        lam_a, lam_h = rng.uniform(0.1, 3.0, 2)
        d0, d = rng.uniform(0.2, 2.0, 2)
        p = NetworkParams(M, float(lam_a), float(lam_h), float(d0), float(d))
        m = expected_decision_time(p)
        gap = m.expected_decision_time - d0 - d * (m.expected_exit_index - 1.0)
        worst = max(worst, abs(gap))
    record_criterion("decision-time identity, 20 random points", worst <= 1e-12, f"max residual {worst:.1e}")
    assert worst <= 1e-12


def test_game_algebra(record_criterion):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10_000):
        c = float(rng.uniform(0, 1e6))
        B = float(rng.uniform(1, 1e7))
        q = float(rng.uniform(0, 1))
        a, b = cost_action(c, B, q), cost_action_expanded(c, B, q)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    hand = total_cost(0.05, 0.01, 0.9, 4750, 2e6)
    ok = worst <= 1e-9 and hand == 32275
    record_criterion("game-layer algebra", ok, f"max relative gap {worst:.1e}; hand value {hand!r}")
    assert ok


def test_large_network_example_pinned(tmp_path, record_criterion):
    start = time.perf_counter()
    out = tmp_path / "pe"
    assert main(["paper-example", "--out", str(out)]) == 0
    elapsed = time.perf_counter() - start
    metrics = dict(tuple(r) for r in _csv(out / "metrics.csv")[1:])
    sweep = _csv(out / "alpha_sweep.csv")
    golden = (metrics["alpha_star"], metrics["alpha_star_cost"]) == ("0", "0")

    # injected side scenario: brute force over the grid with the same arithmetic
    cfg = parse_config(bundled_config("large_network_injected.cfg"))
    inj, cost, M = cfg.injection, cfg.cost, cfg.network.total_nodes
    grid = cost.alpha_grid()
    q1 = inj.q1_values(grid)
    best = (0.0, 2e6 * inj.q0)
    for alpha, q in zip(grid, q1):
        c_a = cost.node_reserve_unit_cost * alpha * M
        if alpha > 0 and cost_action(c_a, cost.token_value, q) <= cost.token_value * inj.q0:
            t = total_cost(inj.q0, q, inj.p_A_prev, c_a, cost.token_value)
            if t < best[1]:
                best = (alpha, t)
    rep = optimal_alpha(inj.q0, inj.p_A_prev, grid, q1, cost.token_value, cost.node_reserve_unit_cost, M)
    injected = (rep.alpha_star, rep.alpha_star_cost) == best
    written = (metrics["injected_alpha_star"], metrics["injected_alpha_star_cost"]) == ("0.095", "59603.2872282")

    ok = golden and injected and written and len(sweep) == len(grid) + 1 and elapsed < 300
    record_criterion(
        "large-network example (b, c): calibrated run pinned, injected optimum recovered",
        ok,
        f"calibrated alpha*=0 cost 0; injected alpha*={rep.alpha_star:g} cost {rep.alpha_star_cost:.7f}; "
        f"{elapsed:.1f}s",
    )
    assert ok


@pytest.mark.xfail(strict=True, reason="calibrated rates give q0 below 1e-300, so the sweep is flat")
def test_large_network_example_interior_minimum(tmp_path, record_criterion):
    cfg = parse_config(bundled_config("large_network.cfg"))
    a = analyze_exit(cfg.network, tol=cfg.compute.tol)
    out = tmp_path / "pe"
    assert main(["paper-example", "--out", str(out)]) == 0
    report = (out / "report.txt").read_text().splitlines()
    interior = "unique interior minimum of the sweep: yes" in report[:12]
    record_criterion(
        "large-network example (a): unique interior minimum under calibrated rates",
        interior,
        f"q0 = {a.total_mass:.3g} (underflow, true value below 1e-300) at M=100000, lambda_A=10, lambda_H=150; cost curve is c_alpha p + B q0 (1-p), "
        "minimized at alpha=0",
    )
    assert interior


def test_monotonicity(reference, record_criterion):
    a = analyze_exit(reference, tol=1e-12)
    alphas = np.linspace(0, 1, 101)
    q1 = q1_curve(a, reference.total_nodes, alphas)
    q1_ok = bool(np.all(np.diff(q1) <= 0))

    wins = []
    for i, lam_a in enumerate((0.6, 0.8, 1.0, 1.2, 1.4)):
        p = NetworkParams(20, lam_a, 2.0, 1.0, 1.0)
        wins.append(run_batch(p, 100_000, base_seed=100 + i).p_win)
    zs = [(b.value - a.value) / math.hypot(a.se, b.se) for a, b in zip(wins, wins[1:])]
    win_ok = min(zs) >= -3
    record_criterion(
        "monotonicity: q1 in alpha, empirical p_win in lambda_A",
        q1_ok and win_ok,
        "p_win " + ", ".join(f"{w.value:.4f}" for w in wins) + f"; min step z {min(zs):.1f}",
    )
    assert q1_ok and win_ok


def test_simulate_is_deterministic(tmp_path, record_criterion):
    text = REF_CFG.read_text().replace("simulation.episodes = 1000000", "simulation.episodes = 40000")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    runs = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--workers", str(workers)]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    ok = runs[0] == runs[1] == runs[2] and len(runs[0]) >= 4
    record_criterion(
        "determinism of simulate CSVs",
        ok,
        f"{len(runs[0])} CSVs byte-identical across 2 repeats and workers 1 vs 3",
    )
    assert ok
