"""Scenario description: bands, cells, solver knobs, weights and link geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Band",
    "BAND_ORDER",
    "CellKind",
    "BandPropagationParams",
    "CellConfig",
    "SolverConfig",
    "ScenarioConfig",
    "CellTopology",
    "HandoverTopology",
    "Topology",
    "assign_weights",
    "sample_topology",
    "validate_scenario",
    "keyed_rng",
    "db_to_linear",
]


class Band(str, Enum):
    V = "V"
    E = "E"
    LTE = "LTE"


# Canonical unit ordering inside a cell: all V subcarriers, then E, then LTE.
BAND_ORDER = (Band.V, Band.E, Band.LTE)


class CellKind(str, Enum):
    MACRO = "macro"
    SMALL = "small"

    @property
    def environment(self) -> str:
        # small BSs serve indoor users, the macro BS outdoor users
        return "indoor" if self is CellKind.SMALL else "outdoor"


WEIGHT_RULES = ("linear", "uniform", "explicit")
ASSIGNMENT_METHODS = ("optimal_matching", "greedy")


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class BandPropagationParams:
    """Large-scale pathloss parameters for one band in one environment."""

    beta: float
    gamma: float
    shadow_sigma_db: float
    carrier_ghz: float
    f0_ghz: float

    def violations(self, label: str = "") -> list[str]:
        out = []
        if not self.beta > 0:
            out.append(f"{label}beta must be > 0 (got {self.beta})")
        if not self.shadow_sigma_db >= 0:
            out.append(f"{label}shadow_sigma_db must be >= 0 (got {self.shadow_sigma_db})")
        if not self.carrier_ghz > 0:
            out.append(f"{label}carrier_ghz must be > 0 (got {self.carrier_ghz})")
        if not self.f0_ghz > 0:
            out.append(f"{label}f0_ghz must be > 0 (got {self.f0_ghz})")
        return out


@dataclass(frozen=True)
class CellConfig:
    kind: CellKind
    bands: tuple[Band, ...]
    power_budget: float
    d0_ref_m: float
    relay_link_interval_m: tuple[float, float]
    direct_link_interval_m: tuple[float, float]
    num_relays: int
    num_users: int

    @property
    def ordered_bands(self) -> tuple[Band, ...]:
        return tuple(b for b in BAND_ORDER if b in self.bands)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the subgradient loop.

    The step at iteration ``n`` (1-based) is ``step_scale / sqrt(n)``.
    ``normalize_subgradient`` divides the power residual by the cell budget
    and multiplies it by the initial multiplier, and divides each rate
    residual by ``r_min``, so one step rule fits every power/gain scale.
    """

    eps_tau: float = 1e-4
    eps_delta: float = 1e-4
    step_scale: float = 0.5
    max_iterations: int = 5000
    assignment_method: str = "optimal_matching"
    delta_cap: float = 1e4
    normalize_subgradient: bool = True

    def step(self, n: int) -> float:
        return self.step_scale / math.sqrt(n)


@dataclass(frozen=True)
class ScenarioConfig:
    cells: tuple[CellConfig, ...]
    subcarriers_per_band: int
    r_min: float
    # environment ("indoor" / "outdoor") -> band -> parameters
    band_params: Mapping[str, Mapping[Band, BandPropagationParams]]
    weight_rule: str = "linear"
    explicit_weights: tuple[tuple[float, ...], ...] | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    # (index, count): restrict every link distance to the index-th of count
    # equal slices of its interval
    distance_bucket: tuple[int, int] | None = None

    def params_for(self, cell: CellConfig, band: Band) -> BandPropagationParams:
        return self.band_params[cell.kind.environment][band]

    def with_cells(self, **changes) -> "ScenarioConfig":
        """Copy with the same field changes applied to every cell."""
        return replace(self, cells=tuple(replace(c, **changes) for c in self.cells))


def assign_weights(
    num_users: int, rule: str = "linear", explicit: Sequence[float] | None = None
) -> np.ndarray:
    """User QoS weights.

    ``linear`` spreads weights linearly over [1, 2]; a single user gets 1.
    """
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    if rule == "linear":
        if num_users == 1:
            return np.ones(1)
        k = np.arange(num_users, dtype=float)
        return 1.0 + k / (num_users - 1)
    if rule == "uniform":
        return np.ones(num_users)
    if rule == "explicit":
        if explicit is None or len(explicit) != num_users:
            raise ValueError(f"explicit weights must have length {num_users}")
        return np.asarray(explicit, dtype=float)
    raise ValueError(f"unknown weight rule {rule!r}")


def _interval_violations(name: str, interval) -> list[str]:
    try:
        lo, hi = (float(x) for x in interval)
    except (TypeError, ValueError):
        return [f"{name} must be a (low, high) pair"]
    out = []
    if not (lo > 0 and hi > 0):
        out.append(f"{name} bounds must be positive (got [{lo}, {hi}])")
    if lo > hi:
        out.append(f"{name} is inverted (got [{lo}, {hi}])")
    return out


def validate_scenario(config: ScenarioConfig) -> list[str]:
    """Every broken invariant of ``config``, as readable messages. Empty means runnable."""
    problems: list[str] = []
    if not config.cells:
        problems.append("scenario has no cells")
    if config.subcarriers_per_band < 1:
        problems.append(f"subcarriers_per_band must be >= 1 (got {config.subcarriers_per_band})")
    if not config.r_min >= 0:
        problems.append(f"r_min must be >= 0 (got {config.r_min})")
    if config.weight_rule not in WEIGHT_RULES:
        problems.append(f"unknown weight_rule {config.weight_rule!r}")

    for l, cell in enumerate(config.cells):
        tag = f"cell {l} ({cell.kind.value}): "
        if cell.kind is CellKind.MACRO and Band.LTE not in cell.bands:
            problems.append(tag + "macro cell must include LTE")
        if cell.kind is CellKind.SMALL and Band.LTE in cell.bands:
            problems.append(tag + "small cell must not include LTE")
        if not cell.bands:
            problems.append(tag + "no bands")
        if len(set(cell.bands)) != len(cell.bands):
            problems.append(tag + "duplicate bands")
        if not cell.power_budget > 0:
            problems.append(tag + f"power_budget must be > 0 (got {cell.power_budget})")
        if not cell.d0_ref_m > 0:
            problems.append(tag + f"d0_ref_m must be > 0 (got {cell.d0_ref_m})")
        problems += [tag + p for p in _interval_violations("relay_link_interval_m", cell.relay_link_interval_m)]
        problems += [tag + p for p in _interval_violations("direct_link_interval_m", cell.direct_link_interval_m)]
        if cell.num_relays < 1:
            problems.append(tag + f"num_relays must be >= 1 (got {cell.num_relays})")
        if cell.num_users < 1:
            problems.append(tag + f"num_users must be >= 1 (got {cell.num_users})")
        env = cell.kind.environment
        for band in cell.bands:
            params = config.band_params.get(env, {}).get(band)
            if params is None:
                problems.append(tag + f"no {env} propagation parameters for band {band.value}")
            else:
                problems += params.violations(tag + f"{env} {band.value}: ")
        if config.weight_rule == "explicit":
            ew = config.explicit_weights
            if ew is None or len(ew) <= l or len(ew[l]) != cell.num_users:
                problems.append(tag + "explicit weights missing or of wrong length")
            elif any(not w > 0 for w in ew[l]):
                problems.append(tag + "explicit weights must be positive")

    s = config.solver
    if not (s.eps_tau > 0 and s.eps_delta > 0):
        problems.append("solver tolerances must be > 0")
    if s.max_iterations < 1:
        problems.append("solver max_iterations must be >= 1")
    if not s.step_scale > 0:
        problems.append("solver step_scale must be > 0")
    if s.assignment_method not in ASSIGNMENT_METHODS:
        problems.append(f"unknown assignment_method {s.assignment_method!r}")
    if config.distance_bucket is not None:
        idx, count = config.distance_bucket
        if not (count >= 1 and 0 <= idx < count):
            problems.append(f"distance_bucket {config.distance_bucket} out of range")
    return problems


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream named by ``key``.

    Every random quantity draws from a stream keyed by what it is (cell, link,
    band, user), so adding subcarriers or users extends the draws instead of
    reshuffling them.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# stream tags
_T_RELAY, _T_RELAY_USER, _T_USER, _T_HO_RELAY_USER, _T_HO_USER = 10, 11, 12, 13, 14


@dataclass(frozen=True)
class CellTopology:
    d_bs_relay: np.ndarray  # (M,)
    d_relay_user: np.ndarray  # (M, K)
    d_bs_user: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)


@dataclass(frozen=True)
class HandoverTopology:
    """Links from the macro cell to a small cell's users (LTE-only fallback)."""

    d_relay_user: np.ndarray  # (M_macro, K_small)
    d_bs_user: np.ndarray  # (K_small,)


@dataclass(frozen=True)
class Topology:
    cells: tuple[CellTopology, ...]
    handover: tuple[HandoverTopology | None, ...]


def _bucketed(interval, bucket) -> tuple[float, float]:
    lo, hi = (float(x) for x in interval)
    if not (lo > 0 and lo <= hi):
        raise ValueError(f"invalid distance interval [{lo}, {hi}]")
    if bucket is None:
        return lo, hi
    idx, count = bucket
    width = (hi - lo) / count
    return lo + idx * width, lo + (idx + 1) * width


def _uniform(u: np.ndarray, interval) -> np.ndarray:
    lo, hi = interval
    return lo + u * (hi - lo)


def sample_topology(config: ScenarioConfig, seed: int | None = None, drop: int = 0) -> Topology:
    """Draw every link distance uniformly from its cell's interval.

    BS-relay and relay-user links use the relay-link interval, BS-user links
    the direct-link interval. Pure in ``(config, seed, drop)``.
    """
    seed = config.seed if seed is None else seed
    bucket = config.distance_bucket
    macro_idx = next((l for l, c in enumerate(config.cells) if c.kind is CellKind.MACRO), None)

    cells = []
    handover = []
    for l, cell in enumerate(config.cells):
        relay_iv = _bucketed(cell.relay_link_interval_m, bucket)
        direct_iv = _bucketed(cell.direct_link_interval_m, bucket)
        M, K = cell.num_relays, cell.num_users
        d_bs_relay = _uniform(keyed_rng(seed, drop, _T_RELAY, l).random(M), relay_iv)
        d_relay_user = np.stack(
            [_uniform(keyed_rng(seed, drop, _T_RELAY_USER, l, k).random(M), relay_iv) for k in range(K)],
            axis=1,
        )
        d_bs_user = _uniform(keyed_rng(seed, drop, _T_USER, l).random(K), direct_iv)
        if config.weight_rule == "explicit":
            weights = assign_weights(K, "explicit", config.explicit_weights[l])
        else:
            weights = assign_weights(K, config.weight_rule)
        cells.append(CellTopology(d_bs_relay, d_relay_user, d_bs_user, weights))

        if cell.kind is CellKind.SMALL and macro_idx is not None:
            macro = config.cells[macro_idx]
            m_relay_iv = _bucketed(macro.relay_link_interval_m, bucket)
            m_direct_iv = _bucketed(macro.direct_link_interval_m, bucket)
            ho_relay_user = np.stack(
                [
                    _uniform(keyed_rng(seed, drop, _T_HO_RELAY_USER, l, k).random(macro.num_relays), m_relay_iv)
                    for k in range(K)
                ],
                axis=1,
            )
            ho_user = _uniform(keyed_rng(seed, drop, _T_HO_USER, l).random(K), m_direct_iv)
            handover.append(HandoverTopology(ho_relay_user, ho_user))
        else:
            handover.append(None)
    return Topology(tuple(cells), tuple(handover))
