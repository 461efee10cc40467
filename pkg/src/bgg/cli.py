"""``bgg`` command line: analyze, simulate, optimize, paper-example.

Exit codes: 0 ok, 2 configuration error, 3 exit series did not converge,
4 too many censored simulation episodes.  Outputs are staged in a scratch
directory and moved into place only when the whole subcommand succeeds; on
failure a JSON error record goes to stderr and ``<out>/error.json``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import shutil
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .config import RunConfig, parse_config
from .fluctuation import BackendUnavailable, NonConvergence, analyze_exit
from .game import GovernanceReport, optimal_alpha
from .marginals import expected_decision_time, q1_curve
from .model import ConfigError
from .simulator import ExcessiveCensoring, compare_report, run_batch

SUBCOMMANDS = ("analyze", "simulate", "optimize", "paper-example")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_CENSORED = 0, 2, 3, 4
SIG_DIGITS = 12
REFERENCE_FIGURE = {"alpha": 0.095, "cost": 59600.0}


def fmt(v) -> str:
    """12 significant digits; bools as 1/0; no negative zero."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if v == 0:
        return "0"
    return f"{v:.{SIG_DIGITS}g}"


class _Outputs:
    """Files written to a scratch directory and published together."""

    def __init__(self):
        self.files: Dict[str, str] = {}

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in row])
        self.files[name] = buf.getvalue()

    def text(self, name: str, lines: Iterable[str]):
        self.files[name] = "".join(line + "\n" for line in lines)

    def publish(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".bgg-", dir=out_dir))
        try:
            for name, content in self.files.items():
                with open(stage / name, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(content)
            for name in self.files:
                os.replace(stage / name, out_dir / name)
        finally:
            shutil.rmtree(stage, ignore_errors=True)
        stale = out_dir / "error.json"
        if stale.exists():
            stale.unlink()


def _analysis(cfg: RunConfig):
    c = cfg.compute
    a = analyze_exit(cfg.network, tol=c.tol, n_max=c.n_max, backend=c.backend, tail_extent=c.tail_extent)
    if not a.converged:
        raise NonConvergence(
            f"exit series not below tol {c.tol:g} after {len(a.p) - 1} terms "
            f"(bound {a.truncation_error_bound:.3e}); raise compute.n_max or compute.tol"
        )
    return a


def _network_rows(cfg: RunConfig):
    n = cfg.network
    return [
        ("total_nodes", n.total_nodes),
        ("threshold", n.threshold),
        ("lambda_attacker", n.lambda_attacker),
        ("lambda_honest", n.lambda_honest),
        ("mean_initial_observation", n.mean_initial_observation),
        ("mean_observation_gap", n.mean_observation_gap),
    ]


def _analytic_summary(cfg: RunConfig):
    a = _analysis(cfg)
    m = expected_decision_time(cfg.network, tol=cfg.compute.tol, backend=cfg.compute.backend)
    p_prev = math.fsum(a.prev_pmf[: a.threshold])
    return a, m, p_prev


def _write_analytic(out: _Outputs, cfg: RunConfig, a, m, p_prev):
    rows = _network_rows(cfg) + [
        ("p_win", a.total_mass),
        ("truncation_error_bound", a.truncation_error_bound),
        ("exit_terms", len(a.p)),
        ("E_nu", m.expected_exit_index),
        ("E_nu_conditional", m.expected_exit_index_conditional),
        ("E_tau_prev", m.expected_decision_time),
        ("E_tau_prev_conditional", m.expected_decision_time_conditional),
        ("E_tau_prev_exact", m.exact_decision_time),
        ("E_tau_prev_exact_conditional", m.exact_decision_time_conditional),
        ("q0", a.total_mass),
        ("p_A_prev", p_prev),
        ("pmf_A_prev_remainder", a.prev_remainder),
        ("pmf_A_exit_remainder", a.exit_remainder),
    ]
    out.csv("metrics.csv", ("metric", "value"), rows)
    z = a.total_mass

    def cond(x):
        return x / z if z > 0 else float("nan")

    out.csv("exit_index.csv", ("n", "p", "conditional"), ((n, p, cond(p)) for n, p in enumerate(a.p)))
    out.csv("pmf_A_prev.csv", ("k", "mass", "conditional"), ((k, p, cond(p)) for k, p in enumerate(a.prev_pmf)))
    out.csv(
        "pmf_A_exit.csv",
        ("k", "mass", "conditional"),
        ((a.threshold + j, p, cond(p)) for j, p in enumerate(a.exit_pmf)),
    )
    return rows


def cmd_analyze(cfg: RunConfig, out: _Outputs) -> List[str]:
    a, m, p_prev = _analytic_summary(cfg)
    _write_analytic(out, cfg, a, m, p_prev)
    return [
        f"backend: {a.backend}",
        f"threshold T = {a.threshold}",
        f"P(attacker crosses first) = {fmt(a.total_mass)} (series bound {a.truncation_error_bound:.3e})",
        f"E[nu; win] = {fmt(m.expected_exit_index)}, E[nu | win] = {fmt(m.expected_exit_index_conditional)}",
        f"E[tau_prev; win] exact = {fmt(m.exact_decision_time)}, "
        f"via d0 + d(E[nu] - 1) = {fmt(m.expected_decision_time)}",
        f"E[tau_prev | win] exact = {fmt(m.exact_decision_time_conditional)}, "
        f"via d0 + d(E[nu|win] - 1) = {fmt(m.expected_decision_time_conditional)}",
        f"p_A_prev = {fmt(p_prev)}",
    ]


def _simulate(cfg: RunConfig):
    s = cfg.simulation
    return run_batch(
        cfg.network,
        s.episodes,
        base_seed=s.base_seed,
        alpha_grid=s.alphas,
        workers=s.workers,
        max_observations=s.max_observations,
        gap_law=s.gap_law,
        gap_shape=s.gap_shape,
    )


def cmd_simulate(cfg: RunConfig, out: _Outputs) -> List[str]:
    est = _simulate(cfg)
    rows = [
        ("episodes", est.episode_count, 0),
        ("base_seed", est.base_seed, 0),
        ("max_observations", est.max_observations, 0),
        ("censored_fraction", est.censored_fraction, 0),
        ("p_win", est.p_win.value, est.p_win.se),
        ("p_lose", est.p_lose.value, est.p_lose.se),
        ("tie_fraction", est.tie_fraction.value, est.tie_fraction.se),
        ("E_nu", est.exit_index_moment.value, est.exit_index_moment.se),
        ("E_nu_conditional", est.exit_index_conditional.value, est.exit_index_conditional.se),
        ("E_tau_prev", est.decision_time.value, est.decision_time.se),
        ("E_tau_prev_conditional", est.decision_time_conditional.value, est.decision_time_conditional.se),
        ("q0", est.q0.value, est.q0.se),
        ("p_A_prev", est.p_A_prev.value, est.p_A_prev.se),
        ("mean_A0", est.mean_A0.value, est.mean_A0.se),
    ]
    for alpha, t, r in zip(est.alpha_grid, est.q1_tail, est.q1_resolved):
        rows.append((f"q1[{fmt(alpha)}]", t.value, t.se))
        rows.append((f"q1_resolved[{fmt(alpha)}]", r.value, r.se))
    out.csv("metrics.csv", ("metric", "value", "se"), rows)
    for name, (p, se), first in (
        ("exit_index.csv", est.exit_index_pmf, "n"),
        ("pmf_A_prev.csv", est.A_prev_pmf, "k"),
        ("pmf_A_exit.csv", est.A_exit_pmf, "k"),
    ):
        out.csv(name, (first, "frequency", "se"), ((k, p[k], se[k]) for k in range(len(p))))

    lines = [
        f"episodes: {est.episode_count} (seed {est.base_seed}, gaps {est.gap_law}, cap {est.max_observations})",
        f"censored fraction: {fmt(est.censored_fraction)}",
        f"p_win = {fmt(est.p_win.value)} +- {fmt(est.p_win.se)}; ties {fmt(est.tie_fraction.value)}",
    ]
    if cfg.simulation.gap_law != "exponential":
        lines.append("analytic comparison skipped: closed forms assume exponential observation gaps")
        return lines
    a, m, p_prev = _analytic_summary(cfg)
    analytic = {
        "params": cfg.network,
        "p_win": a.total_mass,
        "E_nu": m.expected_exit_index,
        "E_tau_prev": m.exact_decision_time,
        "p_A_prev": p_prev,
        "q1": q1_curve(a, cfg.network.total_nodes, est.alpha_grid),
        "pmf_A_prev": (0, a.prev_pmf),
        "pmf_A_exit": (a.threshold, a.exit_pmf),
        "exit_index": (0, a.p),
    }
    rep = compare_report(analytic, est, cfg.simulation.z_threshold)
    out.csv(
        "compare.csv",
        ("quantity", "analytic", "empirical", "se", "z", "pass"),
        ((r.quantity, r.analytic, r.empirical, r.se, r.z, r.passed) for r in rep.rows),
    )
    lines.append(f"comparison at |z| <= {fmt(rep.z_threshold)}: {'PASS' if rep.passed else 'FAIL'}")
    for key, (tv, bound) in rep.tv_distances.items():
        lines.append(f"  TV({key}) = {fmt(tv)} (bound {fmt(bound)})")
    if rep.failures:
        lines.append("  outside band: " + ", ".join(rep.failures))
    return lines


def _governance(cfg: RunConfig) -> GovernanceReport:
    if cfg.cost is None:
        raise ConfigError("optimize needs the cost section")
    grid = cfg.cost.alpha_grid()
    B, c, M = cfg.cost.token_value, cfg.cost.node_reserve_unit_cost, cfg.network.total_nodes
    if cfg.injection is not None:
        inj = cfg.injection
        return optimal_alpha(inj.q0, inj.p_A_prev, grid, inj.q1_values(grid), B, c, M, q1_source="injected")
    a, m, p_prev = _analytic_summary(cfg)
    if cfg.q1_source == "simulation":
        est = run_batch(
            cfg.network,
            cfg.simulation.episodes,
            base_seed=cfg.simulation.base_seed,
            alpha_grid=grid,
            workers=cfg.simulation.workers,
            max_observations=cfg.simulation.max_observations,
        )
        q1 = [e.value for e in est.q1_tail]
        return optimal_alpha(
            est.q0.value, est.p_A_prev.value, grid, q1, B, c, M,
            decision_time=est.decision_time_conditional.value, q1_source="simulation",
        )
    return optimal_alpha(
        a.total_mass, p_prev, grid, q1_curve(a, M, grid), B, c, M,
        decision_time=m.exact_decision_time_conditional, q1_source="analytic",
    )


def interior_minimum(rep: GovernanceReport) -> bool:
    """True when the swept total cost has one strict minimum away from both grid ends."""
    totals = [p.cost_total for p in rep.curve]
    lo = min(totals)
    hits = [i for i, t in enumerate(totals) if t == lo]
    return len(hits) == 1 and 0 < hits[0] < len(totals) - 1


def _write_governance(out: _Outputs, rep: GovernanceReport, suffix: str = "") -> List[str]:
    out.csv(
        f"alpha_sweep{suffix}.csv",
        ("alpha", "c_alpha", "q1_alpha", "cost_action", "cost_noaction", "cost_total", "feasible"),
        ((p.alpha, p.c_alpha, p.q1_alpha, p.cost_action, p.cost_no_action, p.cost_total, p.feasible) for p in rep.curve),
    )
    lp_ok = [fmt(p.alpha) for p in rep.curve if p.lp_bound_ok]
    lines = [
        f"q1 source: {rep.q1_source}",
        f"q0 = {fmt(rep.q0)}, p_A_prev = {fmt(rep.p_A_prev_below_half)}",
        f"strategy: {rep.strategy}" + ("" if rep.action_justified else " (no action justified)"),
        f"alpha* = {fmt(rep.alpha_star)}, total cost {fmt(rep.alpha_star_cost)}",
        "first feasible alpha: " + (fmt(rep.first_feasible_alpha) if rep.first_feasible_alpha is not None else "none"),
        f"unconstrained argmin: alpha = {fmt(rep.unconstrained_alpha)}, cost {fmt(rep.unconstrained_cost)}"
        + (" (differs: feasibility binds)" if rep.constraint_binding else ""),
        "grid points with alpha >= c_alpha / (B q0 - c_alpha): " + (", ".join(lp_ok) if lp_ok else "none"),
        f"unique interior minimum of the sweep: {'yes' if interior_minimum(rep) else 'no'}",
    ]
    if rep.decision_time is not None:
        lines.append(f"decision moment E[tau_prev | win] = {fmt(rep.decision_time)}")
    return lines


def _governance_metrics(rep: GovernanceReport):
    return [
        ("q0", rep.q0),
        ("p_A_prev", rep.p_A_prev_below_half),
        ("alpha_star", rep.alpha_star),
        ("alpha_star_cost", rep.alpha_star_cost),
        ("action_justified", rep.action_justified),
        ("unconstrained_alpha", rep.unconstrained_alpha),
        ("unconstrained_cost", rep.unconstrained_cost),
        ("interior_minimum", interior_minimum(rep)),
    ]


def cmd_optimize(cfg: RunConfig, out: _Outputs) -> List[str]:
    rep = _governance(cfg)
    lines = _write_governance(out, rep)
    out.csv("metrics.csv", ("metric", "value"), _network_rows(cfg) + _governance_metrics(rep))
    return lines


def bundled_config(name: str) -> str:
    return resources.files("bgg").joinpath("data", name).read_text(encoding="utf-8")


def cmd_paper_example(cfg: RunConfig, out: _Outputs) -> List[str]:
    rep = _governance(dataclasses.replace(cfg, injection=None, q1_source="analytic"))
    lines = ["Large-network scenario with calibrated rates"]
    lines += ["  " + s for s in _write_governance(out, rep)]
    metrics = _network_rows(cfg) + _governance_metrics(rep)
    lines += [
        f"  target figure: alpha = {fmt(REFERENCE_FIGURE['alpha'])}, cost {fmt(REFERENCE_FIGURE['cost'])}",
        f"  computed:      alpha = {fmt(rep.alpha_star)}, cost {fmt(rep.alpha_star_cost)}",
        "  note: the target needs burst probabilities that cannot be derived from these inputs;",
        "  with rates calibrated to E[A0] = 10 and E[H0] = 150 the attacker almost never reaches",
        "  half of 100000 nodes first, so doing nothing is optimal.",
    ]
    side = parse_config(bundled_config("large_network_injected.cfg"))
    inj_rep = _governance(side)
    lines.append("Side scenario with injected q0, p_A_prev, q1(alpha) = q0 exp(-k alpha)")
    lines += ["  " + s for s in _write_governance(out, inj_rep, "_injected")]
    metrics += [("injected_" + k, v) for k, v in _governance_metrics(inj_rep)]
    out.csv("metrics.csv", ("metric", "value"), metrics)
    return lines


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "paper-example": cmd_paper_example,
}


def run_subcommand(name: str, cfg: RunConfig, out_dir) -> int:
    """Run one subcommand and publish its files; returns the exit status."""
    out_dir = Path(out_dir)
    out = _Outputs()
    try:
        lines = COMMANDS[name](cfg, out)
    except (ConfigError, BackendUnavailable) as e:
        return _fail(out_dir, EXIT_CONFIG, "config", getattr(e, "errors", [str(e)]))
    except NonConvergence as e:
        return _fail(out_dir, EXIT_NONCONVERGENCE, "non-convergence", [str(e)])
    except ExcessiveCensoring as e:
        return _fail(out_dir, EXIT_CENSORED, "censoring", [str(e)])
    out.text("report.txt", [f"bgg {name}", *lines])
    out.publish(out_dir)
    sys.stdout.write(out.files["report.txt"])
    return EXIT_OK


def _fail(out_dir: Optional[Path], code: int, kind: str, errors: List[str]) -> int:
    record = {"status": "error", "exit_code": code, "kind": kind, "errors": list(errors)}
    line = json.dumps(record, sort_keys=True)
    sys.stderr.write(line + "\n")
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(line + "\n", encoding="utf-8")
        except OSError:
            pass
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgg", description="Attacker/honest block race: exact analysis, simulation, reserve sizing")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="flat section.key = value file (paper-example defaults to the bundled one)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=("dense", "factorized", "auto"))
    p.add_argument("--workers", type=int, help="simulation worker processes")
    return p


def _overrides(cfg: RunConfig, args) -> RunConfig:
    errs = []
    sim = cfg.simulation
    if args.episodes is not None:
        if args.episodes < 1:
            errs.append("--episodes must be positive")
        sim = dataclasses.replace(sim, episodes=args.episodes)
    if args.seed is not None:
        if args.seed < 0:
            errs.append("--seed must be nonnegative")
        sim = dataclasses.replace(sim, base_seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            errs.append("--workers must be positive")
        sim = dataclasses.replace(sim, workers=args.workers)
    if errs:
        raise ConfigError(errs)
    compute = cfg.compute
    if args.backend is not None:
        compute = dataclasses.replace(compute, backend=args.backend)
    return dataclasses.replace(cfg, simulation=sim, compute=compute)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            if args.command != "paper-example":
                raise ConfigError("--config is required")
            text = bundled_config("large_network.cfg")
        else:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"cannot read {args.config}: {e.strerror}")
        cfg = _overrides(parse_config(text), args)
    except ConfigError as e:
        return _fail(args.out, EXIT_CONFIG, "config", e.errors)
    return run_subcommand(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
