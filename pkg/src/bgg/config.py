"""Flat ``section.key = value`` run configuration.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Unknown or
repeated keys, bad values and missing required keys are all collected and
raised together in one ConfigError.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .fluctuation import BACKENDS, DEFAULT_N_MAX, DEFAULT_TOL
from .model import ConfigError, CostParams, NetworkParams
from .simulator import GAP_LAWS

_NETWORK_RATES = ("lambda_attacker", "lambda_honest", "mean_initial_observation")
_CALIBRATION = ("initial_mean_attacker", "initial_mean_honest")


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError("must be a nonnegative integer")
    return v


def _real(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _reals(s: str) -> Tuple[float, ...]:
    return tuple(_real(x) for x in s.split(",") if x.strip())


def _choice(options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    return parse


def _integer(s: str) -> int:
    # accept 1e5-style literals as long as they are whole numbers
    v = float(s)
    if not v.is_integer():
        raise ValueError("must be an integer")
    return int(v)


KEYS = {
    "network.total_nodes": _integer,
    "network.lambda_attacker": _real,
    "network.lambda_honest": _real,
    "network.mean_initial_observation": _real,
    "network.mean_observation_gap": _real,
    "network.initial_mean_attacker": _real,
    "network.initial_mean_honest": _real,
    "cost.token_value": _real,
    "cost.node_unit_cost": _real,
    "cost.alpha_min": _real,
    "cost.alpha_max": _real,
    "cost.alpha_step": _real,
    "compute.backend": _choice(BACKENDS),
    "compute.tol": _real,
    "compute.n_max": _pos_int,
    "compute.tail_extent": _nonneg_int,
    "simulation.episodes": _pos_int,
    "simulation.base_seed": _nonneg_int,
    "simulation.max_observations": _pos_int,
    "simulation.workers": _pos_int,
    "simulation.gap_law": _choice(GAP_LAWS),
    "simulation.gap_shape": _real,
    "simulation.z_threshold": _real,
    "simulation.alphas": _reals,
    "optimize.q1_source": _choice(("analytic", "simulation")),
    "inject.q0": _real,
    "inject.p_a_prev": _real,
    "inject.q1_decay": _real,
    "inject.q1": _reals,
}

REQUIRED = (
    "network.total_nodes",
    "network.mean_observation_gap",
    "cost.token_value",
    "cost.node_unit_cost",
)


@dataclass(frozen=True)
class ComputeOptions:
    backend: str = "auto"
    tol: float = DEFAULT_TOL
    n_max: int = DEFAULT_N_MAX
    tail_extent: Optional[int] = None


@dataclass(frozen=True)
class SimulationOptions:
    episodes: int = 100_000
    base_seed: int = 0
    max_observations: Optional[int] = None
    workers: int = 1
    gap_law: str = "exponential"
    gap_shape: float = 1.0
    z_threshold: float = 3.0
    alphas: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.5)


@dataclass(frozen=True)
class Injection:
    """Externally supplied burst probabilities; q1 is a list on the cost grid
    or q0 * exp(-q1_decay * alpha)."""

    q0: float
    p_A_prev: float
    q1_decay: Optional[float] = None
    q1: Optional[Tuple[float, ...]] = None

    def q1_values(self, grid) -> List[float]:
        if self.q1 is not None:
            return list(self.q1)
        return [self.q0 * math.exp(-self.q1_decay * a) for a in grid]


@dataclass(frozen=True)
class RunConfig:
    network: NetworkParams
    cost: CostParams
    compute: ComputeOptions = field(default_factory=ComputeOptions)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    q1_source: str = "analytic"
    injection: Optional[Injection] = None
    calibrated: bool = False
    raw: Dict[str, str] = field(default_factory=dict, repr=False)


def _read_pairs(text: str, errors: List[str]) -> Dict[str, Tuple[int, str]]:
    pairs: Dict[str, Tuple[int, str]] = {}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if "=" not in s:
            errors.append(f"line {no}: expected 'section.key = value', got {s!r}")
            continue
        key, value = (p.strip() for p in s.split("=", 1))
        if key not in KEYS:
            errors.append(f"line {no}: unknown key {key!r}")
        elif key in pairs:
            errors.append(f"line {no}: duplicate key {key!r} (first set on line {pairs[key][0]})")
        elif not value:
            errors.append(f"line {no}: empty value for {key!r}")
        else:
            pairs[key] = (no, value)
    return pairs


def parse_config(text: str) -> RunConfig:
    errors: List[str] = []
    pairs = _read_pairs(text, errors)
    vals = {}
    for key, (no, raw) in pairs.items():
        try:
            vals[key] = KEYS[key](raw)
        except ValueError as e:
            errors.append(f"line {no}: {key} = {raw!r}: {e}")

    for key in REQUIRED:
        if key not in pairs:
            errors.append(f"missing required key {key}")

    net = {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith("network.")}
    calib = [k for k in _CALIBRATION if f"network.{k}" in pairs]
    rates = [k for k in _NETWORK_RATES if f"network.{k}" in pairs]
    calibrated = bool(calib)
    n_errors = len(errors)
    if calib and len(calib) != 2:
        errors.append("calibration needs both network.initial_mean_attacker and network.initial_mean_honest")
    elif calibrated and len(rates) != 1:
        errors.append(
            "calibration needs exactly one of network." + ", network.".join(_NETWORK_RATES)
            + f" (got {len(rates)})"
        )
    elif not calibrated and len(rates) != 3:
        missing = [f"network.{k}" for k in _NETWORK_RATES if k not in rates]
        errors.append(
            "missing required key(s) " + ", ".join(missing)
            + " (or give network.initial_mean_attacker and network.initial_mean_honest with one of them)"
        )

    network = None
    needed = ("total_nodes", "mean_observation_gap", *calib, *rates)
    if len(errors) == n_errors and all(k in net for k in needed):
        try:
            if calibrated:
                network = NetworkParams.from_initial_means(
                    net["total_nodes"],
                    net["initial_mean_attacker"],
                    net["initial_mean_honest"],
                    net["mean_observation_gap"],
                    **{k: net[k] for k in rates},
                )
            else:
                network = NetworkParams(
                    net["total_nodes"],
                    net["lambda_attacker"],
                    net["lambda_honest"],
                    net["mean_initial_observation"],
                    net["mean_observation_gap"],
                )
        except ConfigError as e:
            errors.extend(e.errors)
        if network is not None:
            errors.extend(network.violations())

    cost = None
    if "cost.token_value" in vals and "cost.node_unit_cost" in vals:
        cost = CostParams(
            vals["cost.token_value"],
            vals["cost.node_unit_cost"],
            vals.get("cost.alpha_min", 0.0),
            vals.get("cost.alpha_max", 0.2),
            vals.get("cost.alpha_step", 0.005),
        )
        errors.extend(cost.violations())

    compute = ComputeOptions(
        backend=vals.get("compute.backend", "auto"),
        tol=vals.get("compute.tol", DEFAULT_TOL),
        n_max=vals.get("compute.n_max", DEFAULT_N_MAX),
        tail_extent=vals.get("compute.tail_extent"),
    )
    if not compute.tol > 0:
        errors.append("compute.tol must be positive")

    sim = SimulationOptions(
        **{k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith("simulation.")}
    )
    if not sim.gap_shape > 0:
        errors.append("simulation.gap_shape must be positive")
    if not sim.z_threshold > 0:
        errors.append("simulation.z_threshold must be positive")
    if any(not 0 <= a <= 1 for a in sim.alphas):
        errors.append("simulation.alphas must lie in [0, 1]")

    injection = None
    inj = {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith("inject.")}
    if inj:
        if "q0" not in inj or "p_a_prev" not in inj:
            errors.append("inject needs both inject.q0 and inject.p_a_prev")
        if ("q1" in inj) == ("q1_decay" in inj):
            errors.append("inject needs exactly one of inject.q1, inject.q1_decay")
        for k in ("q0", "p_a_prev"):
            if k in inj and not 0 <= inj[k] <= 1:
                errors.append(f"inject.{k} must lie in [0, 1]")
        if "q1" in inj and any(not 0 <= q <= 1 for q in inj["q1"]):
            errors.append("inject.q1 values must lie in [0, 1]")
        if "q1_decay" in inj and inj["q1_decay"] < 0:
            errors.append("inject.q1_decay must be nonnegative")
        if "q1" in inj and cost is not None and not cost.violations():
            n = len(cost.alpha_grid())
            if len(inj["q1"]) != n:
                errors.append(f"inject.q1 has {len(inj['q1'])} values, alpha grid has {n}")
        if not errors:
            injection = Injection(inj["q0"], inj["p_a_prev"], inj.get("q1_decay"), inj.get("q1"))

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        network=network,
        cost=cost,
        compute=compute,
        simulation=sim,
        q1_source=vals.get("optimize.q1_source", "analytic"),
        injection=injection,
        calibrated=calibrated,
        raw={k: v for k, (_, v) in pairs.items()},
    )
