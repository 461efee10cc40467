"""Reserve-node cost game: DoNothing versus releasing an alpha fraction of backups."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np


def cost_no_action(B: float, q0: float) -> float:
    return B * q0


def cost_action(c_alpha: float, B: float, q1: float) -> float:
    """Reserves are paid either way; the token is lost only on a burst."""
    return c_alpha + B * q1


def cost_action_expanded(c_alpha: float, B: float, q1: float) -> float:
    """Same cost written out per outcome: c(1 - q1) + (c + B) q1."""
    return c_alpha * (1.0 - q1) + (c_alpha + B) * q1


def total_cost(q0: float, q1_alpha: float, p_A_prev: float, c_alpha: float, B: float) -> float:
    """Defender acts with probability p_A_prev (attacker still below T one step before)."""
    return cost_action(c_alpha, B, q1_alpha) * p_A_prev + cost_no_action(B, q0) * (1.0 - p_A_prev)


@dataclass(frozen=True)
class CostCurvePoint:
    alpha: float
    c_alpha: float
    q1_alpha: float
    cost_action: float
    cost_no_action: float
    cost_total: float
    feasible: bool
    # pointwise check alpha >= c_alpha / (B q0 - c_alpha)
    lp_bound_ok: bool


@dataclass(frozen=True)
class GovernanceReport:
    q0: float
    p_A_prev_below_half: float
    curve: List[CostCurvePoint]
    alpha_star: float
    alpha_star_cost: float
    action_justified: bool
    first_feasible_alpha: Optional[float]
    unconstrained_alpha: float
    unconstrained_cost: float
    constraint_binding: bool
    decision_time: Optional[float]
    q1_source: str

    @property
    def strategy(self) -> str:
        return f"Action(alpha={self.alpha_star:g})" if self.action_justified else "DoNothing"


Q1Provider = Union[Sequence[float], Callable[[float], float]]


def _lp_bound_ok(alpha: float, c_alpha: float, B: float, q0: float) -> bool:
    denom = B * q0 - c_alpha
    return denom > 0 and alpha >= c_alpha / denom


def optimal_alpha(
    q0: float,
    p_A_prev: float,
    grid: Sequence[float],
    q1: Q1Provider,
    B: float,
    unit_cost: float,
    total_nodes: int,
    decision_time: Optional[float] = None,
    q1_source: str = "analytic",
) -> GovernanceReport:
    """Sweep the alpha grid and pick the cheapest justified reserve.

    A point is feasible when alpha > 0 and acting costs no more than doing
    nothing.  alpha* minimizes the total cost over {0} and the feasible
    points, with alpha = 0 (DoNothing) as the baseline and ties going to
    the smallest alpha.  The unconstrained grid argmin is reported too.
    """
    grid = [float(a) for a in grid]
    if not grid:
        raise ValueError("alpha grid is empty")
    if isinstance(q1, Callable):
        q1_values = [float(q1(a)) for a in grid]
    else:
        q1_values = [float(v) for v in q1]
        if len(q1_values) != len(grid):
            raise ValueError("q1 values must align with the alpha grid")
    no_act = cost_no_action(B, q0)

    curve = []
    for a, q in zip(grid, q1_values):
        c_a = unit_cost * a * total_nodes
        act = cost_action(c_a, B, q)
        curve.append(
            CostCurvePoint(
                alpha=a,
                c_alpha=c_a,
                q1_alpha=q,
                cost_action=act,
                cost_no_action=no_act,
                cost_total=total_cost(q0, q, p_A_prev, c_a, B),
                feasible=a > 0 and act <= no_act,
                lp_bound_ok=_lp_bound_ok(a, c_a, B, q0),
            )
        )

    # np.argmin returns the first index, which is the smallest alpha on a sorted grid
    totals = np.array([pt.cost_total for pt in curve])
    order = np.argsort(grid, kind="stable")
    i_free = int(order[np.argmin(totals[order])])

    best_alpha, best_cost = 0.0, no_act
    for i in order:
        pt = curve[i]
        if pt.feasible and pt.cost_total < best_cost:
            best_alpha, best_cost = pt.alpha, pt.cost_total
    feasible = [curve[i].alpha for i in order if curve[i].feasible]

    return GovernanceReport(
        q0=q0,
        p_A_prev_below_half=p_A_prev,
        curve=curve,
        alpha_star=best_alpha,
        alpha_star_cost=best_cost,
        action_justified=best_alpha > 0,
        first_feasible_alpha=feasible[0] if feasible else None,
        unconstrained_alpha=curve[i_free].alpha,
        unconstrained_cost=curve[i_free].cost_total,
        constraint_binding=curve[i_free].alpha != best_alpha,
        decision_time=decision_time,
        q1_source=q1_source,
    )
