"""Dual-decomposition allocator.

Per cell and per iteration: score every (first-hop unit, second-hop unit)
pair by its best serving tuple, pick an exclusive pairing, water-fill power
at the current multipliers, then take a projected subgradient step on the
power price ``tau`` and the per-user min-rate prices ``delta``.

Cells share no resources, so each one is solved on its own.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import ChannelGains
from .model import ScenarioConfig, SolverConfig
from .problem import (
    Allocation,
    AllocationProblem,
    CellAllocation,
    CellProblem,
    FeasibilityRecord,
    check_feasibility,
    check_score_matrix,
)

log = logging.getLogger(__name__)

__all__ = [
    "UnboundedWaterLevel",
    "CellDualState",
    "PairScores",
    "SolveReport",
    "optimal_power",
    "z_metric",
    "candidate_table",
    "best_tuple_per_pair",
    "assign_pairs",
    "subgradient_step",
    "recover_power",
    "dual_value",
    "solve_problem",
    "solve",
]

LN2 = math.log(2.0)


class UnboundedWaterLevel(ValueError):
    """Raised when the power price is zero, which makes the water level infinite."""


def optimal_power(w, delta, tau, alpha_eq):
    """Water-filling power ``[(1+delta)*w/(2*tau) - 1/alpha_eq]^+``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise UnboundedWaterLevel("unbounded_water_level: tau must be positive")
    level = (1.0 + np.asarray(delta)) * np.asarray(w) / (2.0 * tau)
    with np.errstate(divide="ignore"):
        inv = 1.0 / np.asarray(alpha_eq, dtype=float)
    g = np.maximum(level - inv, 0.0)
    return g if g.ndim else float(g)


def z_metric(w, delta, tau, alpha_eq):
    """Pair score: weighted rate at the optimal power minus its price.

    ``((1+delta)*w/2)*log2(1 + alpha*g) - tau*g`` with ``g`` from
    :func:`optimal_power`. Never negative.
    """
    g = optimal_power(w, delta, tau, alpha_eq)
    c = (1.0 + np.asarray(delta)) * np.asarray(w) / 2.0
    z = c * np.log2(1.0 + np.asarray(alpha_eq) * g) - np.asarray(tau) * g
    return z if np.ndim(z) else float(z)


def _lagrangian_z(c, tau, alpha):
    # Same power rule, but the price is converted to bits so the dual value
    # is a true Lagrangian bound on the log2 objective.
    g = np.maximum(c / tau - 1.0 / alpha, 0.0)
    return c * np.log2(1.0 + alpha * g) - tau * g / LN2


@dataclass(frozen=True, eq=False)
class CandidateTable:
    """Best equivalent gain per (u1, u2, k) over relays and modes.

    Ties in gain go to the lowest relay index, then to direct mode.
    ``relay`` is -1 where the direct link wins.
    """

    alpha: np.ndarray  # (U, U, K)
    relay: np.ndarray  # (U, U, K)
    direct: np.ndarray  # (U, U, K) direct-link gain, for pairs left idle


def candidate_table(cell: CellProblem) -> CandidateTable:
    U, M, K = cell.U, cell.M, cell.K
    fm = cell.fm[:, None, :, None]
    mk = cell.mk[None, :, :, :]
    fk = cell.fk[:, None, None, :]
    den = fm + mk - fk
    ok = (fm > fk) & (den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        relay = np.where(ok, fm * mk / np.where(ok, den, 1.0), -np.inf)  # (U, U, M, K)
    direct = np.broadcast_to(fk, (U, U, M, K))
    # order candidates as (m, mode) with direct before relay
    both = np.stack([direct, relay], axis=-1)  # (U, U, M, K, 2)
    both = np.moveaxis(both, 3, 2).reshape(U, U, K, M * 2)
    idx = np.argmax(both, axis=-1)
    alpha = np.take_along_axis(both, idx[..., None], axis=-1)[..., 0]
    m = idx // 2
    is_relay = (idx % 2) == 1
    return CandidateTable(alpha, np.where(is_relay, m, -1), np.broadcast_to(cell.fk[:, None, :], (U, U, K)))


@dataclass(frozen=True, eq=False)
class PairScores:
    Z: np.ndarray  # (U, U)
    user: np.ndarray
    relay: np.ndarray
    alpha: np.ndarray


def best_tuple_per_pair(table: CandidateTable, weights, delta, tau, score=None) -> PairScores:
    """Best (relay, user, mode) for every ordered unit pair at the given prices.

    Ties in score go to the lowest relay index, then lowest user, then direct
    mode. Candidates that would get zero power are reported in direct mode.
    """
    c = (1.0 + np.asarray(delta)) * np.asarray(weights) / 2.0
    if score is None:
        g = np.maximum(c / tau - 1.0 / table.alpha, 0.0)
        Z = c * np.log2(1.0 + table.alpha * g) - tau * g
    else:
        Z = score(c, tau, table.alpha)
    idle = ~(Z > 0)
    Z = np.where(idle, 0.0, Z)
    relay = np.where(idle, -1, table.relay)
    alpha = np.where(idle, table.direct, table.alpha)

    K = Z.shape[-1]
    zmax = Z.max(axis=-1)
    tied = Z == zmax[..., None]
    key = np.where(tied, np.maximum(relay, 0) * K + np.arange(K), np.iinfo(np.int64).max)
    k = np.argmin(key, axis=-1)
    pick = lambda a: np.take_along_axis(a, k[..., None], axis=-1)[..., 0]
    return PairScores(zmax, k, pick(relay), pick(alpha))


def assign_pairs(scores) -> np.ndarray:
    """Maximum-total-score perfect matching; returns the second-hop unit of each first-hop unit."""
    s = check_score_matrix(scores)
    rows, cols = linear_sum_assignment(s, maximize=True)
    out = np.empty(len(rows), dtype=int)
    out[rows] = cols
    return out


def identity_pairs(scores) -> np.ndarray:
    s = check_score_matrix(scores)
    return np.arange(s.shape[0])


@dataclass(frozen=True)
class CellDualState:
    tau: float
    delta: np.ndarray
    n: int = 1


def subgradient_step(
    state: CellDualState,
    power_used: float,
    user_rates,
    budget: float,
    r_min,
    config: SolverConfig,
    tau_ref: float | None = None,
) -> CellDualState:
    """Projected subgradient update of the power and min-rate prices.

    ``tau <- [tau - s(n)*(P - used)]^+`` and
    ``delta_k <- [delta_k - s(n)*(rate_k - r_min)]^+``. With
    ``config.normalize_subgradient`` the power residual is taken relative to
    the budget and scaled by ``tau_ref``, and each rate residual relative to
    its own ``r_min`` (users with ``r_min == 0`` are left unscaled).
    """
    s = config.step(state.n)
    power_res = budget - power_used
    rate_res = np.asarray(user_rates, dtype=float) - np.asarray(r_min, dtype=float)
    if config.normalize_subgradient:
        power_res = power_res / budget * (state.tau if tau_ref is None else tau_ref)
        rm = np.broadcast_to(np.asarray(r_min, dtype=float), rate_res.shape)
        rate_res = rate_res / np.where(rm > 0, rm, 1.0)
    tau = max(state.tau - s * power_res, 0.0)
    delta = np.maximum(state.delta - s * rate_res, 0.0)
    return CellDualState(tau, delta, state.n + 1)


def _relative_change(new, old) -> np.ndarray:
    new, old = np.atleast_1d(new), np.atleast_1d(old)
    diff = np.abs(new - old)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff == 0, 0.0, diff / np.abs(new))
    return np.where(np.isnan(rel), np.inf, rel)


def _level_for_rate(alpha: np.ndarray, w: float, rate: float) -> float:
    """Smallest water level at which water-filling over ``alpha`` reaches ``rate``."""
    if rate <= 0:
        return 0.0
    a = np.sort(alpha)[::-1]
    logs = np.cumsum(np.log2(a))
    target = 2.0 * rate / w
    for j in range(1, len(a) + 1):
        # level L satisfies sum_{i<=j} log2(a_i L) = target
        log_level = (target - logs[j - 1]) / j
        L = 2.0 ** log_level
        if j == len(a) or a[j] * L <= 1.0:
            return L
    return L  # pragma: no cover


def _total_power(levels_per_pair, inv_alpha):
    return np.maximum(levels_per_pair - inv_alpha, 0.0).sum()


def recover_power(alpha, user, weights, budget, r_min) -> tuple[np.ndarray, float, np.ndarray, bool]:
    """Exact power for a fixed assignment.

    Maximizes the weighted rate subject to the budget and per-user minimum
    rates. Returns ``(power, tau, delta, min_rates_met)``; the returned prices
    satisfy the water-filling rule exactly for the returned power. When the
    minimum rates cannot all be met on this assignment, users are served by
    plain weighted water-filling and ``min_rates_met`` is False.
    """
    alpha = np.asarray(alpha, dtype=float)
    user = np.asarray(user)
    weights = np.asarray(weights, dtype=float)
    K = len(weights)
    r_min = np.broadcast_to(np.asarray(r_min, dtype=float), (K,))
    inv = 1.0 / alpha

    floor = np.zeros(K)
    met = True
    for k in range(K):
        if r_min[k] <= 0:
            continue
        mine = user == k
        if not mine.any():
            met = False
            continue
        floor[k] = _level_for_rate(alpha[mine], weights[k], r_min[k])
    min_power = _total_power(floor[user], inv)
    if min_power > budget * (1 + 1e-12):
        met = False
        floor[:] = 0.0

    def total(nu):
        return _total_power(np.maximum(floor, weights * nu)[user], inv)

    # bracket and bisect the common level scale nu
    lo, hi = 0.0, (budget + inv.sum() + floor.max()) / weights.min()
    while total(hi) < budget:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    nu = hi
    # refine with the active set frozen: total is linear in nu there
    free = (weights * nu >= floor)[user]
    levels = np.maximum(floor, weights * nu)[user]
    active = levels > inv
    a_free = (weights[user] * (active & free)).sum()
    if a_free > 0:
        fixed = (np.where(active & ~free, levels, 0.0) - np.where(active, inv, 0.0)).sum()
        nu_exact = (budget - fixed) / a_free
        cand_levels = np.maximum(floor, weights * nu_exact)[user]
        if np.array_equal(cand_levels > inv, active) and np.array_equal((weights * nu_exact >= floor)[user], free):
            nu = nu_exact
    L = np.maximum(floor, weights * nu)
    g = np.maximum(L[user] - inv, 0.0)
    tau = 1.0 / (2.0 * nu)
    delta = np.maximum(L / (weights * nu) - 1.0, 0.0)
    return g, tau, delta, met


def _repair(table: CandidateTable, pairing, user, alpha, relay, weights, budget, r_min):
    """Exact power for a pairing, moving units toward min-rate users that cannot be served.

    While the min rates are out of reach, the user with the largest floor
    power (infinite when it holds no unit) takes over the pair where its own
    gain is highest, from a user that can spare it. Returns
    ``(user, alpha, relay, power, tau, delta, met)``.
    """
    user, alpha, relay = user.copy(), alpha.copy(), relay.copy()
    K, U = len(weights), len(user)
    rows = np.arange(U)
    for _ in range(U + 1):
        g, tau, delta, met = recover_power(alpha, user, weights, budget, r_min)
        if met:
            break
        counts = np.bincount(user, minlength=K)
        need = np.full(K, -np.inf)
        for k in np.flatnonzero(r_min > 0):
            mine = user == k
            if not mine.any():
                need[k] = np.inf
                continue
            L = _level_for_rate(alpha[mine], weights[k], r_min[k])
            need[k] = np.maximum(L - 1.0 / alpha[mine], 0.0).sum()
        k = int(np.argmax(need))
        donor = (user != k) & ((r_min[user] <= 0) | (counts[user] > 1))
        if not donor.any():
            break
        i = int(np.argmax(np.where(donor, table.alpha[rows, pairing, k], -np.inf)))
        user[i], alpha[i], relay[i] = k, table.alpha[i, pairing[i], k], table.relay[i, pairing[i], k]
    return user, alpha, relay, g, tau, delta, met


def _restore(table: CandidateTable, weights, budget, r_min, rounds: int = 6):
    """A pairing that meets the min rates at low power, or None.

    Each min-rate user gets one first-hop unit; which unit, and the second
    hop it pairs with, are chosen by alternating two assignment problems on
    the single-unit power cost. Remaining units go to their strongest user.
    Returns ``(pairing, user, alpha, relay, power, tau, delta)``.
    """
    U, _, K = table.alpha.shape
    req = np.flatnonzero(r_min > 0)
    if len(req) == 0 or len(req) > U:
        return None
    snr = 2.0 ** (2.0 * r_min / weights) - 1.0
    cost = snr / table.alpha  # (U, U, K) power to meet r_min on one pair
    strength = np.log(table.alpha * weights).max(axis=-1)
    _, pairing = linear_sum_assignment(strength, maximize=True)
    rows = np.arange(U)
    prev = None
    for _ in range(rounds):
        units, slot = linear_sum_assignment(cost[rows, pairing][:, req])
        owner = dict(zip(units, req[slot]))
        if prev == owner:
            break
        prev = owner
        chosen = np.array(sorted(owner))
        ks = np.array([owner[i] for i in chosen])
        _, cols = linear_sum_assignment(cost[chosen[:, None], rows[None, :], ks[:, None]])
        rest = np.setdiff1d(rows, chosen)
        free_cols = np.setdiff1d(rows, cols)
        pairing = np.empty(U, dtype=int)
        pairing[chosen] = cols
        if len(rest):
            _, c2 = linear_sum_assignment(strength[rest][:, free_cols], maximize=True)
            pairing[rest] = free_cols[c2]
    user = (table.alpha[rows, pairing] * weights).argmax(axis=-1)
    for i, k in prev.items():
        user[i] = k
    alpha = table.alpha[rows, pairing, user]
    relay = table.relay[rows, pairing, user]
    user, alpha, relay, g, tau, delta, met = _repair(table, pairing, user, alpha, relay, weights, budget, r_min)
    return (pairing, user, alpha, relay, g, tau, delta) if met else None


def dual_value(table: CandidateTable, weights, delta, tau, budget, r_min) -> float:
    """Lagrangian dual function in bits/s/Hz at the given prices.

    An upper bound on the weighted rate of every allocation meeting the
    budget and the min-rate constraints that ``delta`` prices.
    """
    scores = best_tuple_per_pair(table, weights, delta, tau, score=_lagrangian_z)
    pairing = assign_pairs(scores.Z)
    total = scores.Z[np.arange(len(pairing)), pairing].sum()
    return float(total + tau * budget / LN2 - np.sum(np.asarray(delta) * r_min))


def _init_tau(table: CandidateTable, weights, budget) -> float:
    # Exact power price of a relaxation that drops second-hop exclusivity:
    # each first-hop unit keeps its best (w*alpha) candidate.
    wa = table.alpha * weights  # (U, U, K)
    U = wa.shape[0]
    flat = wa.reshape(U, -1)
    best = flat.argmax(axis=1)
    k = best % len(weights)
    alpha = table.alpha.reshape(U, -1)[np.arange(U), best]
    _, tau, _, _ = recover_power(alpha, k, weights, budget, 0.0)
    return tau


@dataclass
class CellSolveResult:
    allocation: CellAllocation
    tau: float
    delta: np.ndarray
    iterations: int
    converged: bool
    min_rate_infeasible: bool
    dual_objective: float
    trace: list[dict] = field(default_factory=list)


def _individually_feasible(table: CandidateTable, cell: CellProblem) -> np.ndarray:
    """Users whose min rate is reachable at all: alone, with every unit and the whole budget."""
    ok = np.ones(cell.K, dtype=bool)
    if cell.r_min <= 0:
        return ok
    best = table.alpha.max(axis=1)  # (U, K): best second hop for each first hop
    for k in range(cell.K):
        g, _, _, _ = recover_power(best[:, k], np.zeros(cell.U, dtype=int), cell.weights[k:k + 1], cell.power_budget, 0.0)
        rate = 0.5 * cell.weights[k] * np.log2(1.0 + best[:, k] * g).sum()
        ok[k] = rate >= cell.r_min
    return ok


def solve_cell(
    cell: CellProblem,
    config: SolverConfig,
    assign: Callable[[np.ndarray], np.ndarray] = assign_pairs,
    trace: bool = False,
) -> CellSolveResult:
    table = candidate_table(cell)
    w, P = cell.weights, cell.power_budget
    reachable = _individually_feasible(table, cell)
    r_eff = np.where(reachable, cell.r_min, 0.0)
    infeasible = not reachable.all()
    if infeasible:
        log.info("cell %d: min rate unreachable for users %s", cell.cell_index, np.flatnonzero(~reachable))

    tau_ref = _init_tau(table, w, P)
    tau_floor = tau_ref * 1e-12
    state = CellDualState(tau_ref, np.zeros(cell.K), 1)
    rows = np.arange(cell.U)
    converged = False
    trace_rows = []
    prev_key = None
    best = None  # (objective, pairing, user, alpha, relay, power, tau, delta)
    if not infeasible:
        seed = _restore(table, w, P, r_eff)
        if seed is not None:
            obj = float((0.5 * w[seed[1]] * np.log2(1.0 + seed[2] * seed[4])).sum())
            best = (obj, *seed)
    # with an exact pairing step the loop's Lagrangian value is itself a bound
    exact = assign in (assign_pairs, identity_pairs)
    bound = math.inf
    for n in range(1, config.max_iterations + 1):
        tau = max(state.tau, tau_floor)
        scores = best_tuple_per_pair(table, w, state.delta, tau, score=_lagrangian_z)
        pairing = assign(scores.Z)
        user = scores.user[rows, pairing]
        alpha = scores.alpha[rows, pairing]
        relay = scores.relay[rows, pairing]
        key = (pairing.tobytes(), user.tobytes(), relay.tobytes())
        if key == prev_key and not infeasible:
            # same pairing twice in a row: solve its power exactly and move the
            # prices there; if the pairing survives those prices we are done
            u_rec, a_rec, m_rec, g_rec, tau_rec, delta_rec, met = _repair(
                table, pairing, user, alpha, relay, w, P, r_eff)
            if met:
                obj = float((0.5 * w[u_rec] * np.log2(1.0 + a_rec * g_rec)).sum())
                if best is None or obj > best[0]:
                    best = (obj, pairing, u_rec, a_rec, m_rec, g_rec, tau_rec, delta_rec)
                prev_key = None
                state = CellDualState(max(tau_rec, tau_floor), delta_rec, state.n + 1)
                continue
        prev_key = key
        if exact:
            lag = scores.Z[rows, pairing].sum() + tau * P / LN2 - float(np.dot(state.delta, r_eff))
            bound = min(bound, lag)
            if not infeasible and best is not None and best[0] >= bound - 1e-9 * abs(bound):
                converged = True  # best feasible allocation matches the bound
                break
        g = optimal_power(w[user], state.delta[user], tau, alpha)
        used = float(g.sum())
        rates = np.zeros(cell.K)
        np.add.at(rates, user, 0.5 * w[user] * np.log2(1.0 + alpha * g))
        new = subgradient_step(replace(state, tau=tau), used, rates, P, r_eff, config, tau_ref)
        if trace:
            scale = min(1.0, P / used) if used > 0 else 1.0
            trace_rows.append({
                "cell": cell.cell_index, "n": n, "tau": tau, "delta": state.delta.copy(),
                "dual": dual_value(table, w, state.delta, tau, P, r_eff),
                "primal": float((0.5 * w[user] * np.log2(1.0 + alpha * g * scale)).sum()),
            })
        d_tau = _relative_change(max(new.tau, tau_floor), tau)
        d_delta = _relative_change(new.delta, state.delta)
        state = new
        if np.all(d_tau < config.eps_tau) and np.all(d_delta < config.eps_delta):
            converged = True
            break
        if state.delta.size and state.delta.max() > config.delta_cap:
            if best is None:
                infeasible = True
                log.info("cell %d: min-rate price exceeded cap, declaring infeasible", cell.cell_index)
            break

    user, alpha, relay, power, tau_f, delta_f, met = _repair(
        table, pairing, user, alpha, relay, w, P, np.zeros(cell.K) if infeasible else r_eff)
    if not infeasible and best is not None:
        obj = float((0.5 * w[user] * np.log2(1.0 + alpha * power)).sum())
        if not met or best[0] > obj:
            _, pairing, user, alpha, relay, power, tau_f, delta_f = best
            met = True
    if not met:
        infeasible = True
        # keep the loop's relative user priorities when min rates cannot be met
        c = (1.0 + state.delta) * w
        power, tau_f, _, _ = recover_power(alpha, user, c, P, 0.0)
        delta_f = state.delta.copy()
    alloc = CellAllocation(pairing, user, relay, alpha, power, w, cell.unit_band, cell.cell_index, cell.user_origin)
    if infeasible:
        # bound the problem without min rates, priced at this assignment's own power price
        _, tau_w, _, _ = recover_power(alpha, user, w, P, 0.0)
        dual = dual_value(table, w, np.zeros(cell.K), tau_w, P, 0.0)
    else:
        dual = min(dual_value(table, w, delta_f, tau_f, P, r_eff), bound)
    return CellSolveResult(alloc, tau_f, delta_f, n, converged, infeasible, dual, trace_rows)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    tau: np.ndarray
    delta: tuple[np.ndarray, ...]
    primal_objective: float
    dual_objective: float
    user_rates: tuple[np.ndarray, ...]
    feasibility: FeasibilityRecord
    flags: set[str] = field(default_factory=set)
    trace: list[dict] = field(default_factory=list)

    @property
    def duality_gap(self) -> float:
        return self.dual_objective - self.primal_objective


def solve_problem(
    problem: AllocationProblem,
    config: SolverConfig | None = None,
    assign: Callable[[np.ndarray], np.ndarray] | None = None,
    trace: bool = False,
) -> tuple[Allocation, SolveReport]:
    config = config or SolverConfig()
    if assign is None:
        from .greedy import greedy_assign

        assign = greedy_assign if config.assignment_method == "greedy" else assign_pairs
    results = [solve_cell(c, config, assign, trace) for c in problem.cells]
    allocation = Allocation(tuple(r.allocation for r in results))
    feas = check_feasibility(allocation, problem)
    flags = set()
    converged = all(r.converged for r in results)
    if not converged:
        flags.add("not_converged")
    if any(r.min_rate_infeasible for r in results) or not feas.min_rate_met:
        flags.add("infeasible_min_rate")
    report = SolveReport(
        converged=converged,
        iterations=max(r.iterations for r in results),
        tau=np.array([r.tau for r in results]),
        delta=tuple(r.delta for r in results),
        primal_objective=allocation.objective(),
        dual_objective=sum(r.dual_objective for r in results),
        user_rates=feas.user_rates,
        feasibility=feas,
        flags=flags,
        trace=[row for r in results for row in r.trace],
    )
    return allocation, report


def solve(scenario: ScenarioConfig, gains: ChannelGains, trace: bool = False) -> tuple[Allocation, SolveReport]:
    """Joint pairing, relay/user/mode selection and power allocation for every cell."""
    problem = AllocationProblem.from_scenario(scenario, gains)
    return solve_problem(problem, scenario.solver, assign_pairs, trace)
