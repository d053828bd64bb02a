"""Low-complexity pairing by greedy activity selection.

Unit pairs are the activities and the two units of a pair are the resources
they hold. Taking pairs in decreasing score order and skipping any pair that
reuses a unit always ends in a perfect matching whose score is at least half
the optimum.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelGains
from .dual import SolveReport, solve_problem
from .model import ScenarioConfig
from .problem import Allocation, AllocationProblem, check_score_matrix

__all__ = ["greedy_assign", "solve_greedy"]


def greedy_assign(scores) -> np.ndarray:
    """Greedy perfect matching; ties are taken in (first-hop, second-hop) index order."""
    s = check_score_matrix(scores)
    U = s.shape[0]
    rows, cols = np.divmod(np.arange(U * U), U)
    # lexsort keys are applied last-first: primary -score, then row, then col
    order = np.lexsort((cols, rows, -s.ravel()))
    pairing = np.full(U, -1)
    row_used = np.zeros(U, dtype=bool)
    col_used = np.zeros(U, dtype=bool)
    taken = 0
    for idx in order:
        r, c = rows[idx], cols[idx]
        if row_used[r] or col_used[c]:
            continue
        pairing[r] = c
        row_used[r] = col_used[c] = True
        taken += 1
        if taken == U:
            break
    return pairing


def solve_greedy(scenario: ScenarioConfig, gains: ChannelGains, trace: bool = False) -> tuple[Allocation, SolveReport]:
    """The dual-decomposition loop with :func:`greedy_assign` as its pairing step."""
    problem = AllocationProblem.from_scenario(scenario, gains)
    return solve_problem(problem, scenario.solver, greedy_assign, trace)
