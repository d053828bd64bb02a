"""Comparison schemes: equal power, no pairing, and single-band operation."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .channel import ChannelGains
from .dual import (
    SolveReport,
    assign_pairs,
    candidate_table,
    identity_pairs,
    solve_problem,
)
from .model import Band, ScenarioConfig
from .problem import Allocation, AllocationProblem, CellAllocation, CellProblem, check_feasibility

__all__ = [
    "equal_power_cell",
    "solve_equal_power",
    "solve_no_pairing",
    "solve_band_restricted",
]


def equal_power_cell(cell: CellProblem, assign=assign_pairs) -> CellAllocation:
    """Every pair gets ``P / U``; tuples and pairing maximize the rate at that power."""
    table = candidate_table(cell)
    p = cell.power_budget / cell.U
    Z = 0.5 * cell.weights * np.log2(1.0 + table.alpha * p)  # (U, U, K)
    k = Z.argmax(axis=-1)  # first maximum: lowest user index on ties
    best = np.take_along_axis(Z, k[..., None], axis=-1)[..., 0]
    pairing = assign(best)
    rows = np.arange(cell.U)
    user = k[rows, pairing]
    return CellAllocation(
        pairing=pairing,
        user=user,
        relay=table.relay[rows, pairing, user],
        alpha=table.alpha[rows, pairing, user],
        power=np.full(cell.U, p),
        weights=cell.weights,
        unit_band=cell.unit_band,
        cell_index=cell.cell_index,
        user_origin=cell.user_origin,
    )


def solve_equal_power(scenario: ScenarioConfig, gains: ChannelGains) -> tuple[Allocation, SolveReport]:
    problem = AllocationProblem.from_scenario(scenario, gains)
    allocation = Allocation(tuple(equal_power_cell(c) for c in problem.cells))
    feas = check_feasibility(allocation, problem)
    L = len(problem.cells)
    report = SolveReport(
        converged=True,
        iterations=1,
        tau=np.full(L, np.nan),
        delta=tuple(np.zeros(c.K) for c in problem.cells),
        primal_objective=allocation.objective(),
        dual_objective=float("nan"),
        user_rates=feas.user_rates,
        feasibility=feas,
        flags=set() if feas.min_rate_met else {"infeasible_min_rate"},
    )
    return allocation, report


def solve_no_pairing(scenario: ScenarioConfig, gains: ChannelGains, trace: bool = False) -> tuple[Allocation, SolveReport]:
    """Dual loop with each second hop pinned to the first hop's own unit."""
    problem = AllocationProblem.from_scenario(scenario, gains)
    return solve_problem(problem, scenario.solver, identity_pairs, trace)


def solve_band_restricted(
    scenario: ScenarioConfig, gains: ChannelGains, bands: Iterable, trace: bool = False
) -> tuple[Allocation, SolveReport]:
    """Full dual solver on the bands in ``bands`` only.

    Small cells left with no band hand their users to the macro cell (LTE).
    """
    bands = {Band(b) for b in bands}
    if not bands:
        raise ValueError("band restriction is empty")
    problem = AllocationProblem.from_scenario(scenario, gains, bands=bands)
    return solve_problem(problem, scenario.solver, None, trace)
