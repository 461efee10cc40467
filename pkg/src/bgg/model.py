"""Model parameters for the attacker/honest block race.

Two marked Poisson block streams (attacker rate ``lambda_attacker``, honest
rate ``lambda_honest``) are observed at the epochs of a delayed renewal
process whose first epoch has mean ``mean_initial_observation`` and whose
later gaps have mean ``mean_observation_gap``.  A player "crosses" at the
first observation where its cumulative block count reaches
``threshold(M) = ceil(M / 2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds every violation found, not just the first.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def threshold(total_nodes: int) -> int:
    """Integer crossing level ceil(M/2); the attacker crosses when A_k >= it."""
    return -(-int(total_nodes) // 2)


@dataclass(frozen=True)
class NetworkParams:
    total_nodes: int
    lambda_attacker: float
    lambda_honest: float
    mean_initial_observation: float
    mean_observation_gap: float

    @property
    def threshold(self) -> int:
        return threshold(self.total_nodes)

    def violations(self) -> List[str]:
        errs = []
        if not isinstance(self.total_nodes, (int, np.integer)) or isinstance(self.total_nodes, bool):
            errs.append("total_nodes must be an integer")
        elif self.total_nodes < 2:
            errs.append("total_nodes below minimum (M >= 2)")
        bad = []
        for name in ("lambda_attacker", "lambda_honest", "mean_initial_observation", "mean_observation_gap"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                bad.append(f"{name} must be a finite number")
        if bad:
            return errs + bad
        if self.lambda_attacker < 0:
            errs.append("lambda_attacker must be nonnegative")
        if self.lambda_honest < 0:
            errs.append("lambda_honest must be nonnegative")
        if self.lambda_attacker == 0 and self.lambda_honest == 0:
            errs.append("block rates cannot both be zero")
        if self.mean_initial_observation <= 0:
            errs.append("initial observation mean must be positive")
        if self.mean_observation_gap <= 0:
            errs.append("observation gap must be positive")
        return errs

    def check(self) -> "NetworkParams":
        errs = self.violations()
        if errs:
            raise ConfigError(errs)
        return self

    @classmethod
    def from_initial_means(
        cls,
        total_nodes: int,
        initial_mean_attacker: float,
        initial_mean_honest: float,
        mean_observation_gap: float,
        *,
        mean_initial_observation: Optional[float] = None,
        lambda_attacker: Optional[float] = None,
        lambda_honest: Optional[float] = None,
    ) -> "NetworkParams":
        """Calibrate rates so that E[A0] and E[H0] hit the given targets.

        In the memoryless model E[A0] = d0 * lambda_A and E[H0] = d0 * lambda_H,
        so exactly one of ``mean_initial_observation``, ``lambda_attacker`` or
        ``lambda_honest`` must be fixed; the rest follow.
        """
        given = [x is not None for x in (mean_initial_observation, lambda_attacker, lambda_honest)]
        if sum(given) != 1:
            raise ConfigError(
                "calibration needs exactly one of mean_initial_observation, lambda_attacker, lambda_honest"
            )
        errs = []
        if initial_mean_attacker < 0 or initial_mean_honest < 0:
            errs.append("initial block means must be nonnegative")
        if initial_mean_attacker == 0 and initial_mean_honest == 0:
            errs.append("initial block means cannot both be zero")
        if errs:
            raise ConfigError(errs)
        if mean_initial_observation is not None:
            d0 = float(mean_initial_observation)
        elif lambda_attacker is not None:
            if lambda_attacker <= 0 or initial_mean_attacker == 0:
                raise ConfigError("fixing lambda_attacker needs lambda_attacker > 0 and a positive attacker mean")
            d0 = initial_mean_attacker / lambda_attacker
        else:
            if lambda_honest <= 0 or initial_mean_honest == 0:
                raise ConfigError("fixing lambda_honest needs lambda_honest > 0 and a positive honest mean")
            d0 = initial_mean_honest / lambda_honest
        if not d0 > 0:
            raise ConfigError("initial observation mean must be positive")
        return cls(
            total_nodes=total_nodes,
            lambda_attacker=initial_mean_attacker / d0,
            lambda_honest=initial_mean_honest / d0,
            mean_initial_observation=d0,
            mean_observation_gap=mean_observation_gap,
        )


@dataclass(frozen=True)
class GeometricTerms:
    """Success/failure pairs of the four geometric block-count laws.

    ``beta_A0``/``alpha_A0``: attacker blocks by the first observation;
    ``beta_A``/``alpha_A``: attacker blocks per later gap; same for honest.
    The law with pair (beta, alpha) puts mass beta * alpha**k on k.
    """

    beta_A0: float
    alpha_A0: float
    beta_A: float
    alpha_A: float
    beta_H0: float
    alpha_H0: float
    beta_H: float
    alpha_H: float

    def pairs(self):
        return {
            "A0": (self.beta_A0, self.alpha_A0),
            "A": (self.beta_A, self.alpha_A),
            "H0": (self.beta_H0, self.alpha_H0),
            "H": (self.beta_H, self.alpha_H),
        }


def _geometric_pair(mean_gap: float, rate: float):
    x = mean_gap * rate
    return 1.0 / (1.0 + x), x / (1.0 + x)


def derive_geometric_terms(params: NetworkParams) -> GeometricTerms:
    params.check()
    bA0, aA0 = _geometric_pair(params.mean_initial_observation, params.lambda_attacker)
    bA, aA = _geometric_pair(params.mean_observation_gap, params.lambda_attacker)
    bH0, aH0 = _geometric_pair(params.mean_initial_observation, params.lambda_honest)
    bH, aH = _geometric_pair(params.mean_observation_gap, params.lambda_honest)
    return GeometricTerms(bA0, aA0, bA, aA, bH0, aH0, bH, aH)


@dataclass(frozen=True)
class CostParams:
    token_value: float
    node_reserve_unit_cost: float
    alpha_min: float = 0.0
    alpha_max: float = 0.2
    alpha_step: float = 0.005

    def violations(self) -> List[str]:
        errs = []
        if not self.token_value >= 0:
            errs.append("token_value must be nonnegative")
        if not self.node_reserve_unit_cost >= 0:
            errs.append("node_reserve_unit_cost must be nonnegative")
        if not self.alpha_step > 0:
            errs.append("alpha grid step must be positive")
        if not (0 <= self.alpha_min < self.alpha_max <= 1):
            errs.append("alpha grid is empty (need 0 <= min < max <= 1)")
        return errs

    def alpha_grid(self) -> np.ndarray:
        errs = self.violations()
        if errs:
            raise ConfigError(errs)
        n = int(math.floor((self.alpha_max - self.alpha_min) / self.alpha_step + 1e-9)) + 1
        grid = self.alpha_min + self.alpha_step * np.arange(n)
        # snap away float drift so grid points print and compare cleanly
        return np.round(grid, 12)

    def reserve_cost(self, alpha: float, total_nodes: int) -> float:
        """c_alpha = c * alpha * M; zero at alpha = 0."""
        return self.node_reserve_unit_cost * alpha * total_nodes


@dataclass(frozen=True)
class ValidatedConfig:
    network: NetworkParams
    cost: CostParams
    terms: GeometricTerms = field(repr=False)


def validate(params: NetworkParams, cost: CostParams) -> ValidatedConfig:
    """Check both parameter blocks and report every violation at once."""
    errs = params.violations() + cost.violations()
    if errs:
        raise ConfigError(errs)
    return ValidatedConfig(params, cost, derive_geometric_terms(params))
