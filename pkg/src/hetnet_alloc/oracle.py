"""Brute-force reference solutions for desk-size cells.

Everything here is written from scratch against the raw gains so that it can
be used to check the dual-decomposition solver rather than mirror it.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .channel import ChannelGains
from .model import ScenarioConfig
from .problem import Allocation, AllocationProblem, CellAllocation, CellProblem

__all__ = [
    "MAX_EXHAUSTIVE_UNITS",
    "exhaustive_cell",
    "exhaustive_solve",
    "grid_cell",
    "grid_solve_min_rate",
    "waterfill",
    "pair_options",
]

MAX_EXHAUSTIVE_UNITS = 5
MAX_GRID_UNITS = 3
MAX_GRID_USERS = 2


def pair_options(cell: CellProblem, i: int, j: int) -> list[tuple[float, int, int]]:
    """``(gain, user, relay)`` of the strongest admissible link per user for pair ``i -> j``.

    Only the best link of each user matters: at equal weight a larger gain
    gives a larger rate at every power. Ties keep the lower relay index, then
    the direct link.
    """
    out = []
    for k in range(cell.K):
        direct = float(cell.fk[i, k])
        gain, relay = direct, -1
        for m in range(cell.M):
            a1, a2 = float(cell.fm[i, m]), float(cell.mk[j, m, k])
            if a1 > direct:
                eq = a1 * a2 / (a1 + a2 - direct)
                if eq > gain:
                    gain, relay = eq, m
        out.append((gain, k, relay))
    return out


def waterfill(gains, weights, budget) -> list[float]:
    """Maximize ``sum w_i/2 log2(1 + a_i p_i)`` over ``p >= 0``, ``sum p = budget``."""
    inv = [1.0 / a for a in gains]

    def used(level):
        return sum(max(w * level - v, 0.0) for w, v in zip(weights, inv))

    lo, hi = 0.0, 1.0
    while used(hi) < budget:
        hi *= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if used(mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    p = [max(w * hi - v, 0.0) for w, v in zip(weights, inv)]
    # put the bisection residue on the active channels so the budget is spent exactly
    active = [i for i, x in enumerate(p) if x > 0]
    extra = (budget - sum(p)) / len(active)
    return [x + extra if i in active else 0.0 for i, x in enumerate(p)]


def _rate(w, a, p) -> float:
    return 0.5 * w * math.log2(1.0 + a * p)


def _check_size(cell: CellProblem, max_units: int, max_users: int | None = None) -> None:
    if cell.U > max_units:
        raise ValueError(f"cell {cell.cell_index}: {cell.U} units exceeds the brute-force limit of {max_units}")
    if max_users is not None and cell.K > max_users:
        raise ValueError(f"cell {cell.cell_index}: {cell.K} users exceeds the brute-force limit of {max_users}")


def _cell_allocation(cell, perm, choice, power) -> CellAllocation:
    return CellAllocation(
        pairing=np.array(perm, dtype=int),
        user=np.array([c[1] for c in choice], dtype=int),
        relay=np.array([c[2] for c in choice], dtype=int),
        alpha=np.array([c[0] for c in choice], dtype=float),
        power=np.array(power, dtype=float),
        weights=cell.weights,
        unit_band=cell.unit_band,
        cell_index=cell.cell_index,
        user_origin=cell.user_origin,
    )


def exhaustive_cell(cell: CellProblem) -> tuple[CellAllocation, float]:
    """Optimum of one cell without min rates."""
    _check_size(cell, MAX_EXHAUSTIVE_UNITS)
    best_obj, best = -math.inf, None
    for perm in itertools.permutations(range(cell.U)):
        options = [pair_options(cell, i, perm[i]) for i in range(cell.U)]
        for choice in itertools.product(*options):
            g = [c[0] for c in choice]
            w = [float(cell.weights[c[1]]) for c in choice]
            p = waterfill(g, w, cell.power_budget)
            obj = sum(_rate(wi, gi, pi) for wi, gi, pi in zip(w, g, p))
            if obj > best_obj:
                best_obj, best = obj, (perm, choice, p)
    return _cell_allocation(cell, *best), best_obj


def exhaustive_solve(scenario: ScenarioConfig, gains: ChannelGains) -> tuple[Allocation, float]:
    """Global optimum by enumerating every matching and serving tuple.

    Exact for ``r_min == 0``; with a positive minimum rate the search falls
    back to :func:`grid_solve_min_rate`.
    """
    problem = AllocationProblem.from_scenario(scenario, gains)
    if scenario.r_min > 0:
        return grid_solve_min_rate(scenario, gains)
    cells, total = [], 0.0
    for cell in problem.cells:
        alloc, obj = exhaustive_cell(cell)
        cells.append(alloc)
        total += obj
    return Allocation(tuple(cells)), total


def _simplex_grid(U: int, levels: int, budget: float) -> np.ndarray:
    step = budget / (levels - 1)
    pts = np.array(list(itertools.product(range(levels), repeat=U)), dtype=float)
    pts = pts[pts.sum(axis=1) <= levels - 1]
    return pts * step


def grid_cell(cell: CellProblem, levels: int = 16) -> tuple[CellAllocation | None, float]:
    _check_size(cell, MAX_GRID_UNITS, MAX_GRID_USERS)
    grid = _simplex_grid(cell.U, levels, cell.power_budget)
    best_obj, best = -math.inf, None
    for perm in itertools.permutations(range(cell.U)):
        options = [pair_options(cell, i, perm[i]) for i in range(cell.U)]
        for choice in itertools.product(*options):
            g = np.array([c[0] for c in choice])
            users = np.array([c[1] for c in choice])
            w = cell.weights[users]
            terms = 0.5 * w * np.log2(1.0 + g * grid)  # (points, U)
            per_user = np.stack([terms[:, users == k].sum(axis=1) for k in range(cell.K)], axis=1)
            ok = np.all(per_user >= cell.r_min, axis=1)
            if not ok.any():
                continue
            obj = np.where(ok, terms.sum(axis=1), -np.inf)
            i = int(np.argmax(obj))
            if obj[i] > best_obj:
                best_obj, best = float(obj[i]), (perm, choice, grid[i])
    if best is None:
        return None, -math.inf
    return _cell_allocation(cell, *best), best_obj


def grid_solve_min_rate(
    scenario: ScenarioConfig, gains: ChannelGains, grid_resolution: int = 16
) -> tuple[Allocation | None, float]:
    """Best allocation meeting the minimum rate, with powers on a uniform grid.

    Each power takes ``grid_resolution`` levels from 0 to the budget (points
    over budget are dropped). Returns ``(None, -inf)`` when no grid point of
    any matching meets the minimum rate.
    """
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be at least 16")
    problem = AllocationProblem.from_scenario(scenario, gains)
    cells, total = [], 0.0
    for cell in problem.cells:
        alloc, obj = grid_cell(cell, grid_resolution)
        if alloc is None:
            return None, -math.inf
        cells.append(alloc)
        total += obj
    return Allocation(tuple(cells)), total
