"""Shared builders for the test modules."""

import dataclasses

import numpy as np

from hetnet_alloc.channel import generate_gains
from hetnet_alloc.model import Band, SolverConfig, sample_topology
from hetnet_alloc.problem import CellProblem


def small_scenario(base, *, n=1, bands=(Band.V,), relays=1, users=1, r_min=0.0, seed=0, solver=None):
    """One small cell, tiny enough for the brute-force oracle."""
    cell = dataclasses.replace(base.cells[1], bands=tuple(bands), num_relays=relays, num_users=users)
    return dataclasses.replace(
        base, cells=(cell,), subcarriers_per_band=n, r_min=r_min, seed=seed,
        solver=solver or SolverConfig(max_iterations=2000),
    )


def drop(scenario, d=0):
    return generate_gains(scenario, sample_topology(scenario, drop=d), drop=d)


def random_cell(rng, U, M, K, r_min=0.0, budget=None, spread=1.5):
    """Cell with log-normal gains around 1 (SNR-scale values)."""
    g = lambda *shape: 10.0 ** (spread * rng.standard_normal(shape) / 2)
    w = 1.0 + np.arange(K) / max(K - 1, 1)
    return CellProblem.from_arrays(
        g(U, M), g(U, M, K), g(U, K), w,
        budget if budget is not None else float(rng.uniform(0.5, 10.0)), r_min,
    )
