"""scikit-learn style wrappers around the allocators.

``fit`` takes an :class:`~hetnet_alloc.problem.AllocationProblem` (or a
``(scenario, gains)`` pair) and stores the result in ``allocation_`` and
``report_``. Hyperparameters are the solver settings, so ``get_params`` /
``set_params`` and ``sklearn.base.clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import equal_power_cell
from .dual import SolveReport, assign_pairs, identity_pairs, solve_problem
from .greedy import greedy_assign
from .model import ScenarioConfig, SolverConfig
from .problem import Allocation, AllocationProblem, CellProblem, check_feasibility, check_problem

__all__ = ["JointAllocator", "EqualPowerAllocator", "check_allocation_input"]

_PAIRING = {"optimal": assign_pairs, "greedy": greedy_assign, "identity": identity_pairs}


def check_allocation_input(X) -> AllocationProblem:
    """Accept a problem, a single cell, or a ``(scenario, gains)`` pair."""
    if isinstance(X, AllocationProblem):
        for c in X.cells:
            check_problem(c)
        return X
    if isinstance(X, CellProblem):
        return AllocationProblem((check_problem(X),))
    if isinstance(X, tuple) and len(X) == 2 and isinstance(X[0], ScenarioConfig):
        return AllocationProblem.from_scenario(*X)
    raise TypeError(f"expected AllocationProblem, CellProblem or (scenario, gains), got {type(X).__name__}")


class JointAllocator(BaseEstimator):
    """Dual-decomposition allocator with a choice of pairing step."""

    def __init__(
        self,
        pairing="optimal",
        eps_tau=1e-4,
        eps_delta=1e-4,
        step_scale=0.5,
        max_iterations=5000,
        delta_cap=1e4,
        normalize_subgradient=True,
        trace=False,
    ):
        self.pairing = pairing
        self.eps_tau = eps_tau
        self.eps_delta = eps_delta
        self.step_scale = step_scale
        self.max_iterations = max_iterations
        self.delta_cap = delta_cap
        self.normalize_subgradient = normalize_subgradient
        self.trace = trace

    def _solver_config(self) -> SolverConfig:
        if self.pairing not in _PAIRING:
            raise ValueError(f"pairing must be one of {sorted(_PAIRING)}, got {self.pairing!r}")
        return SolverConfig(
            eps_tau=self.eps_tau,
            eps_delta=self.eps_delta,
            step_scale=self.step_scale,
            max_iterations=self.max_iterations,
            assignment_method="greedy" if self.pairing == "greedy" else "optimal_matching",
            delta_cap=self.delta_cap,
            normalize_subgradient=self.normalize_subgradient,
        )

    def fit(self, X, y=None):
        problem = check_allocation_input(X)
        self.allocation_, self.report_ = solve_problem(
            problem, self._solver_config(), _PAIRING[self.pairing], self.trace)
        self.objective_ = self.report_.primal_objective
        return self

    def predict(self, X) -> Allocation:
        """Allocation for ``X`` under the fitted settings."""
        check_is_fitted(self, "allocation_")
        problem = check_allocation_input(X)
        alloc, _ = solve_problem(problem, self._solver_config(), _PAIRING[self.pairing])
        return alloc

    def score(self, X, y=None) -> float:
        return self.predict(X).objective()


class EqualPowerAllocator(BaseEstimator):
    """Fixed per-unit power; pairing and tuples still chosen for rate."""

    def __init__(self, pairing="optimal"):
        self.pairing = pairing

    def _solve(self, X) -> tuple[Allocation, AllocationProblem]:
        problem = check_allocation_input(X)
        assign = _PAIRING[self.pairing]
        return Allocation(tuple(equal_power_cell(c, assign) for c in problem.cells)), problem

    def fit(self, X, y=None):
        self.allocation_, problem = self._solve(X)
        feas = check_feasibility(self.allocation_, problem)
        self.report_ = SolveReport(
            converged=True, iterations=1, tau=np.full(len(problem.cells), np.nan),
            delta=tuple(np.zeros(c.K) for c in problem.cells), primal_objective=self.allocation_.objective(),
            dual_objective=float("nan"), user_rates=feas.user_rates, feasibility=feas,
            flags=set() if feas.min_rate_met else {"infeasible_min_rate"},
        )
        self.objective_ = self.report_.primal_objective
        return self

    def predict(self, X) -> Allocation:
        check_is_fitted(self, "allocation_")
        return self._solve(X)[0]

    def score(self, X, y=None) -> float:
        return self.predict(X).objective()
