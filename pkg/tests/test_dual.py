import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from hetnet_alloc.dual import (
    CellDualState,
    UnboundedWaterLevel,
    assign_pairs,
    best_tuple_per_pair,
    candidate_table,
    optimal_power,
    recover_power,
    solve,
    solve_problem,
    subgradient_step,
    z_metric,
)
from hetnet_alloc.model import Band, SolverConfig
from hetnet_alloc.oracle import exhaustive_cell, exhaustive_solve, waterfill
from hetnet_alloc.problem import (
    Allocation,
    AllocationProblem,
    CellAllocation,
    CellProblem,
    check_feasibility,
)
from hetnet_alloc.rates import LinkMode, equivalent_gain, relay_admissible

from helpers import drop, random_cell, small_scenario

RAW = SolverConfig(normalize_subgradient=False)


def kkt_residual(alloc: CellAllocation, tau, delta):
    on = alloc.power > 0
    k = alloc.user[on]
    lhs = (1 + delta[k]) * alloc.weights[k] / 2 * alloc.alpha[on] / (1 + alloc.alpha[on] * alloc.power[on])
    return np.abs(lhs - tau)


class TestOptimalPower:
    def test_clipped(self):
        assert optimal_power(1.0, 0.0, 1.0, 0.1) == 0.0

    def test_hand_value(self):
        assert optimal_power(1.0, 1.0, 0.5, 1.0) == pytest.approx(1.0)

    def test_infinite_gain(self):
        assert optimal_power(2.0, 0.0, 1.0, np.inf) == pytest.approx(1.0)

    def test_zero_price(self):
        with pytest.raises(UnboundedWaterLevel):
            optimal_power(1.0, 0.0, 0.0, 1.0)

    def test_vectorized_nonnegative(self):
        g = optimal_power(np.ones(50), 0.0, 0.3, np.logspace(-3, 3, 50))
        assert np.all(g >= 0) and np.all(np.diff(g) >= 0)


class TestZMetric:
    def test_hand_value(self):
        assert z_metric(1.0, 1.0, 0.5, 1.0) == pytest.approx(0.5)

    def test_zero_when_clipped(self):
        assert z_metric(1.0, 0.0, 1.0, 0.1) == 0.0

    @given(st.floats(0.5, 3), st.floats(0, 5), st.floats(0.01, 10))
    def test_nondecreasing_in_gain(self, w, d, tau):
        z = z_metric(w, d, tau, np.logspace(-3, 3, 400))
        assert np.all(z >= 0)
        assert np.all(np.diff(z) >= -1e-12)


def _brute_pair(cell, w, delta, tau, i, j):
    """Best Z over every (m, k, mode) for pair i -> j by direct enumeration."""
    best = 0.0
    for k in range(cell.K):
        cands = [cell.fk[i, k]]
        for m in range(cell.M):
            if relay_admissible(cell.fm[i, m], cell.mk[j, m, k], cell.fk[i, k]):
                cands.append(equivalent_gain(cell.fm[i, m], cell.mk[j, m, k], cell.fk[i, k], LinkMode.RELAY))
        for a in cands:
            best = max(best, z_metric(w[k], delta[k], tau, a))
    return best


class TestBestTuple:
    def test_inadmissible_relay_is_direct(self):
        # first hop weaker than the direct link everywhere
        cell = CellProblem.from_arrays(np.full((2, 1), 0.5), np.full((2, 1, 1), 5.0), np.full((2, 1), 1.0), [1.0], 1.0)
        s = best_tuple_per_pair(candidate_table(cell), cell.weights, np.zeros(1), 0.2)
        assert np.all(s.relay == -1)

    def test_heavier_user_wins_on_equal_gains(self):
        rng = np.random.default_rng(0)
        fm, fk = rng.uniform(1, 3, (2, 1)), np.full((2, 2), 0.5)
        mk = np.repeat(rng.uniform(1, 3, (2, 1, 1)), 2, axis=2)
        cell = CellProblem.from_arrays(fm, mk, fk, [1.0, 2.0], 1.0)
        s = best_tuple_per_pair(candidate_table(cell), cell.weights, np.zeros(2), 0.2)
        assert np.all(s.user == 1)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        cell = random_cell(rng, 2, 2, 2)
        delta, tau = rng.uniform(0, 1, 2), float(rng.uniform(0.05, 1))
        s = best_tuple_per_pair(candidate_table(cell), cell.weights, delta, tau)
        for i, j in itertools.product(range(2), repeat=2):
            assert s.Z[i, j] == pytest.approx(_brute_pair(cell, cell.weights, delta, tau, i, j), rel=1e-12, abs=1e-15)


class TestAssignPairs:
    def test_two_by_two(self):
        Z = np.array([[3.0, 1.0], [2.0, 2.0]])
        p = assign_pairs(Z)
        assert list(p) == [0, 1] and Z[[0, 1], p].sum() == 5

    def test_diagonal_dominant(self):
        Z = np.eye(4) * 10 + np.random.default_rng(1).uniform(0, 1, (4, 4))
        assert list(assign_pairs(Z)) == [0, 1, 2, 3]

    @pytest.mark.parametrize("U", [1, 2, 3, 4, 5])
    def test_equals_permutation_maximum(self, U):
        rng = np.random.default_rng(U)
        for _ in range(20):
            Z = rng.uniform(0, 5, (U, U))
            p = assign_pairs(Z)
            total = sum(Z[i, p[i]] for i in range(U))
            brute = max(sum(Z[i, q[i]] for i in range(U)) for q in itertools.permutations(range(U)))
            assert total == pytest.approx(brute, rel=1e-15)
            assert sorted(p) == list(range(U))

    def test_non_square(self):
        with pytest.raises(ValueError):
            assign_pairs(np.ones((2, 3)))


class TestSubgradientStep:
    def test_zero_residuals_leave_state(self):
        s = CellDualState(0.7, np.array([0.2, 0.0]), 3)
        new = subgradient_step(s, 4.0, [1.5, 1.5], 4.0, 1.5, RAW)
        assert new.tau == pytest.approx(0.7) and np.allclose(new.delta, s.delta) and new.n == 4

    def test_over_budget_raises_price(self):
        s = CellDualState(0.7, np.zeros(1), 1)
        assert subgradient_step(s, 5.0, [1.0], 4.0, 0.0, RAW).tau > 0.7
        assert subgradient_step(s, 5.0, [1.0], 4.0, 0.0, SolverConfig()).tau > 0.7

    def test_projection_hand_value(self):
        # s(1) = 0.5, slack 0.3: 0.1 - 0.15 projects to 0
        s = CellDualState(0.1, np.zeros(1), 1)
        assert subgradient_step(s, 0.7, [0.0], 1.0, 0.0, RAW).tau == 0.0

    def test_rate_shortfall_raises_delta(self):
        s = CellDualState(1.0, np.zeros(2), 1)
        new = subgradient_step(s, 1.0, [0.5, 3.0], 1.0, 1.0, SolverConfig())
        assert new.delta[0] > 0 and new.delta[1] == 0

    @settings(max_examples=50)
    @given(st.floats(0, 5), st.lists(st.floats(0, 5), min_size=2, max_size=2),
           st.floats(0, 10), st.lists(st.floats(0, 10), min_size=2, max_size=2), st.integers(1, 100))
    def test_never_negative(self, tau, delta, used, rates, n):
        s = CellDualState(tau, np.array(delta), n)
        for cfg in (RAW, SolverConfig()):
            new = subgradient_step(s, used, rates, 3.0, 1.0, cfg, tau_ref=1.0)
            assert new.tau >= 0 and np.all(new.delta >= 0)


def _slsqp(alpha, user, w, budget, r_min):
    """Reference for the fixed-assignment power problem."""
    K = len(w)
    obj = lambda p: -np.sum(0.5 * w[user] * np.log2(1 + alpha * np.maximum(p, 0)))
    cons = [{"type": "ineq", "fun": lambda p: budget - p.sum()}]
    for k in range(K):
        cons.append({"type": "ineq", "fun": lambda p, k=k: np.sum(
            (0.5 * w[user] * np.log2(1 + alpha * np.maximum(p, 0)))[user == k]) - r_min})
    best = None
    for start in (np.full(len(alpha), budget / len(alpha)), np.linspace(1, 2, len(alpha)) * budget / 3 / len(alpha)):
        r = minimize(obj, start, bounds=[(0, budget)] * len(alpha), constraints=cons, method="SLSQP",
                     options={"ftol": 1e-13, "maxiter": 500})
        if r.success and (best is None or r.fun < best.fun):
            best = r
    return -best.fun


class TestRecoverPower:
    @pytest.mark.parametrize("seed", range(8))
    def test_no_min_rate_is_waterfilling(self, seed):
        rng = np.random.default_rng(seed)
        alpha = 10 ** rng.uniform(-1, 1, 4)
        user = np.array([0, 1, 1, 0])
        w = np.array([1.0, 1.7])
        g, tau, delta, met = recover_power(alpha, user, w, 3.0, 0.0)
        ref = waterfill(alpha, w[user], 3.0)
        assert met and np.allclose(g, ref, atol=1e-9) and np.all(delta == 0)
        assert g.sum() == pytest.approx(3.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_min_rate_matches_nlp(self, seed):
        rng = np.random.default_rng(100 + seed)
        alpha = 10 ** rng.uniform(-0.5, 1, 3)
        user = np.array([0, 0, 1])
        w = np.array([1.0, 2.0])
        budget = 4.0
        r_min = 0.3 * 0.5 * math.log2(1 + alpha[2] * budget)
        g, tau, delta, met = recover_power(alpha, user, w, budget, r_min)
        rates = np.bincount(user, 0.5 * w[user] * np.log2(1 + alpha * g), minlength=2)
        assert met and np.all(rates >= r_min - 1e-9)
        assert g.sum() == pytest.approx(budget, rel=1e-9)
        obj = float(np.sum(0.5 * w[user] * np.log2(1 + alpha * g)))
        assert obj == pytest.approx(_slsqp(alpha, user, w, budget, r_min), rel=1e-5)
        # prices reproduce the powers through the water-filling rule
        assert np.allclose(optimal_power(w[user], delta[user], tau, alpha), g, atol=1e-9)

    def test_unreachable_rate(self):
        g, _, _, met = recover_power(np.array([1.0]), np.array([0]), np.array([1.0]), 1.0, 5.0)
        assert not met and g.sum() == pytest.approx(1.0)


class TestSolve:
    def test_tiny_instance_near_oracle(self, reference):
        sc = small_scenario(reference, n=2, relays=1, users=1)
        g = drop(sc, 0)
        alloc, report = solve(sc, g)
        _, opt = exhaustive_solve(sc, g)
        assert report.primal_objective >= 0.95 * opt
        assert report.primal_objective <= opt * (1 + 1e-12)

    def test_no_power_no_rate(self):
        cell = random_cell(np.random.default_rng(3), 3, 1, 2, budget=1e-12)
        alloc, report = solve_problem(AllocationProblem((cell,)))
        assert report.primal_objective < 1e-9
        assert np.all(alloc.cells[0].power <= 1e-12)

    def test_deterministic(self, reference):
        sc = dataclasses.replace(reference, subcarriers_per_band=2, r_min=0.0)
        g = drop(sc, 1)
        a1, r1 = solve(sc, g)
        a2, r2 = solve(sc, g)
        for c1, c2 in zip(a1.cells, a2.cells):
            for f in ("pairing", "user", "relay", "alpha", "power"):
                assert np.array_equal(getattr(c1, f), getattr(c2, f))
        assert r1.primal_objective == r2.primal_objective

    @pytest.mark.parametrize("seed", range(6))
    def test_weak_duality_along_trace(self, seed):
        cell = random_cell(np.random.default_rng(seed), 3, 1, 2)
        _, opt = exhaustive_cell(cell)
        _, report = solve_problem(AllocationProblem((cell,)), SolverConfig(max_iterations=300), trace=True)
        assert report.trace
        for row in report.trace:
            assert row["dual"] >= opt - 1e-9 * abs(opt)
            assert row["primal"] <= opt + 1e-9 * abs(opt)
        assert report.dual_objective >= report.primal_objective - 1e-9

    @pytest.mark.parametrize("seed", range(12))
    def test_kkt_and_constraints_on_converged_runs(self, seed):
        rng = np.random.default_rng(seed)
        r_min = 0.0 if seed % 2 == 0 else 0.05
        cell = random_cell(rng, 4, 2, 2, r_min=r_min)
        problem = AllocationProblem((cell,))
        alloc, report = solve_problem(problem)
        feas = check_feasibility(alloc, problem)
        assert feas.power_met and np.all(feas.matching_ok)
        assert np.all(alloc.cells[0].power >= 0)
        if report.converged and "infeasible_min_rate" not in report.flags:
            assert kkt_residual(alloc.cells[0], report.tau[0], report.delta[0]).max() < 1e-6
            assert np.all(report.user_rates[0] >= r_min - 1e-6)

    def test_multipliers_nonnegative(self, reference):
        sc = dataclasses.replace(reference, subcarriers_per_band=2, r_min=0.02, solver=SolverConfig(max_iterations=300))
        _, report = solve(sc, drop(sc, 2), trace=True)
        assert all(row["tau"] >= 0 and np.all(row["delta"] >= 0) for row in report.trace)
        assert np.all(report.tau >= 0) and all(np.all(d >= 0) for d in report.delta)

    @pytest.mark.parametrize("d", [0, 1, 3, 5])
    def test_finds_feasible_point_when_every_user_needs_its_own_unit(self, reference, d):
        # four units and four users: the only feasible shapes give each user one unit
        sc = dataclasses.replace(reference, cells=reference.cells[1:], subcarriers_per_band=2, r_min=0.01,
                                 solver=SolverConfig(max_iterations=100))
        g = drop(sc, d)
        for cell in AllocationProblem.from_scenario(sc, g).cells:
            table = candidate_table(cell)
            snr = 2 ** (2 * 0.01 / cell.weights) - 1
            least = min(
                sum(snr[k] / table.alpha[i, pair[i], k] for i, k in enumerate(users))
                for pair in itertools.permutations(range(4)) for users in itertools.permutations(range(4)))
            assert least <= cell.power_budget
        _, report = solve(sc, g)
        assert "infeasible_min_rate" not in report.flags
        assert all(np.all(r >= 0.01 - 1e-6) for r in report.user_rates)

    def test_unreachable_min_rate_is_flagged(self, reference):
        sc = dataclasses.replace(reference, subcarriers_per_band=2)  # r_min = 3 is out of reach here
        alloc, report = solve(sc, drop(sc, 0))
        assert "infeasible_min_rate" in report.flags
        assert report.feasibility.power_met


def _cell_alloc(pairing, power, user, r_min=0.0):
    U = len(pairing)
    cell = CellProblem.from_arrays(np.ones((U, 1)), np.ones((U, 1, 2)), np.ones((U, 2)), [1.0, 2.0], 2.0, r_min)
    alloc = CellAllocation(np.array(pairing), np.array(user), np.full(U, -1), np.ones(U),
                           np.array(power, float), cell.weights, cell.unit_band)
    return Allocation((alloc,)), AllocationProblem((cell,))


class TestCheckFeasibility:
    def test_solver_output_within_budget(self, reference):
        sc = small_scenario(reference, n=2, bands=(Band.V, Band.E), users=2)
        g = drop(sc, 0)
        alloc, _ = solve(sc, g)
        feas = check_feasibility(alloc, AllocationProblem.from_scenario(sc, g))
        assert feas.power_used[0] <= sc.cells[0].power_budget * (1 + 1e-3)

    def test_zero_power_fails_min_rate(self):
        feas = check_feasibility(*_cell_alloc([1, 0], [0, 0], [0, 1], r_min=0.1))
        assert not feas.min_rate_met and not any(feas.rate_ok[0])

    def test_valid_matching(self):
        feas = check_feasibility(*_cell_alloc([1, 0], [1.0, 1.0], [0, 1]))
        assert feas.feasible

    def test_broken_matching_and_budget(self):
        feas = check_feasibility(*_cell_alloc([0, 0], [2.0, 1.0], [0, 1]))
        assert not feas.matching_ok[0] and not feas.power_met and len(feas.details) == 2
