"""Solver-facing problem and allocation containers plus input checks.

A cell's subcarrier "units" are its (band, subcarrier) slots flattened in
:data:`~hetnet_alloc.model.BAND_ORDER`; with ``N`` subcarriers per band a
cell has ``U = N * len(bands)`` units on each hop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelGains
from .model import Band, CellKind, ScenarioConfig, validate_scenario
from .rates import LinkMode, power_split, weighted_rate_term

__all__ = [
    "CellProblem",
    "AllocationProblem",
    "CellAllocation",
    "Allocation",
    "FeasibilityRecord",
    "check_problem",
    "check_score_matrix",
    "check_feasibility",
]


@dataclass(frozen=True, eq=False)
class CellProblem:
    fm: np.ndarray  # (U, M)
    mk: np.ndarray  # (U, M, K)
    fk: np.ndarray  # (U, K)
    weights: np.ndarray  # (K,)
    power_budget: float
    r_min: float
    unit_band: tuple[Band, ...]
    unit_subcarrier: np.ndarray  # (U,)
    cell_index: int = 0
    # (original cell, original user) for each user column
    user_origin: tuple[tuple[int, int], ...] = ()

    @property
    def U(self) -> int:
        return self.fm.shape[0]

    @property
    def M(self) -> int:
        return self.fm.shape[1]

    @property
    def K(self) -> int:
        return self.fk.shape[1]

    @classmethod
    def from_arrays(cls, fm, mk, fk, weights, power_budget, r_min=0.0, unit_band=None, cell_index=0):
        """Build a cell directly from flattened gain tables (tests, fixtures)."""
        fm, mk, fk = (np.asarray(a, dtype=float) for a in (fm, mk, fk))
        U = fm.shape[0]
        if unit_band is None:
            unit_band = (Band.V,) * U
        K = fk.shape[1]
        return check_problem(cls(
            fm, mk, fk, np.asarray(weights, dtype=float), float(power_budget), float(r_min),
            tuple(unit_band), np.arange(U), cell_index, tuple((cell_index, k) for k in range(K)),
        ))


@dataclass(frozen=True)
class AllocationProblem:
    cells: tuple[CellProblem, ...]

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig, gains: ChannelGains, bands=None) -> "AllocationProblem":
        """Assemble per-cell problems, optionally restricted to a band subset.

        A small cell left with no band under the restriction hands its users to
        the macro cell, which serves them on LTE using the handover gains.
        """
        problems = validate_scenario(scenario)
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))
        allowed = None if bands is None else {Band(b) for b in bands}
        N = scenario.subcarriers_per_band
        macro_idx = next((l for l, c in enumerate(scenario.cells) if c.kind is CellKind.MACRO), None)

        out: dict[int, CellProblem] = {}
        orphans: list[int] = []
        for l, (cfg, cg) in enumerate(zip(scenario.cells, gains.cells)):
            keep = [bi for bi, b in enumerate(cg.bands) if allowed is None or b in allowed]
            if not keep:
                if cfg.kind is CellKind.SMALL and macro_idx is not None and gains.handover[l] is not None:
                    orphans.append(l)
                    continue
                raise ValueError(f"cell {l}: empty effective band set under restriction {sorted(allowed)}")
            B, _, M, K = cg.shape
            fm = cg.alpha_fm[keep].reshape(-1, M)
            mk = cg.alpha_mk[keep].reshape(-1, M, K)
            fk = cg.alpha_fk[keep].reshape(-1, K)
            unit_band = tuple(cg.bands[bi] for bi in keep for _ in range(N))
            sub = np.tile(np.arange(N), len(keep))
            w = _weights(scenario, l, K)
            out[l] = CellProblem(fm, mk, fk, w, cfg.power_budget, scenario.r_min, unit_band, sub, l,
                                 tuple((l, k) for k in range(K)))

        if orphans:
            macro = out.get(macro_idx)
            if macro is None or Band.LTE not in macro.unit_band:
                raise ValueError("small-cell users can only be handed over to a macro cell using LTE")
            lte = np.array([b is Band.LTE for b in macro.unit_band])
            mk, fk = [macro.mk[lte]], [macro.fk[lte]]
            w, origin = [macro.weights], list(macro.user_origin)
            fm = macro.fm[lte]
            unit_band = tuple(b for b in macro.unit_band if b is Band.LTE)
            sub = macro.unit_subcarrier[lte]
            for l in orphans:
                ho = gains.handover[l]
                mk.append(ho.alpha_mk)
                fk.append(ho.alpha_fk)
                w.append(_weights(scenario, l, ho.alpha_fk.shape[1]))
                origin += [(l, k) for k in range(ho.alpha_fk.shape[1])]
            out[macro_idx] = CellProblem(
                fm, np.concatenate(mk, axis=-1), np.concatenate(fk, axis=-1), np.concatenate(w),
                macro.power_budget, macro.r_min, unit_band, sub, macro_idx, tuple(origin))
        return cls(tuple(check_problem(out[l]) for l in sorted(out)))


def _weights(scenario: ScenarioConfig, l: int, K: int) -> np.ndarray:
    from .model import assign_weights

    if scenario.weight_rule == "explicit":
        return assign_weights(K, "explicit", scenario.explicit_weights[l])
    return assign_weights(K, scenario.weight_rule)


def check_problem(cell: CellProblem) -> CellProblem:
    """Shape and value checks in the spirit of ``sklearn.utils.check_array``."""
    U, M = cell.fm.shape
    if cell.mk.shape[:2] != (U, M) or cell.mk.ndim != 3:
        raise ValueError(f"mk has shape {cell.mk.shape}, expected ({U}, {M}, K)")
    K = cell.mk.shape[2]
    if cell.fk.shape != (U, K):
        raise ValueError(f"fk has shape {cell.fk.shape}, expected ({U}, {K})")
    if cell.weights.shape != (K,):
        raise ValueError(f"weights have shape {cell.weights.shape}, expected ({K},)")
    for name in ("fm", "mk", "fk", "weights"):
        a = getattr(cell, name)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} contains non-finite values")
        if np.any(a <= 0):
            raise ValueError(f"{name} must be strictly positive")
    if not cell.power_budget > 0:
        raise ValueError("power_budget must be positive")
    if not cell.r_min >= 0:
        raise ValueError("r_min must be nonnegative")
    if len(cell.unit_band) != U:
        raise ValueError("unit_band length does not match the unit count")
    return cell


def check_score_matrix(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"score matrix must be square, got shape {s.shape}")
    if np.isnan(s).any():
        raise ValueError("score matrix contains NaN")
    return s


@dataclass(frozen=True, eq=False)
class CellAllocation:
    """One cell's matching and the serving tuple and power on each pair.

    Arrays are indexed by first-hop unit ``u``; ``pairing[u]`` is the
    second-hop unit it is matched to, ``relay[u]`` is -1 in direct mode.
    """

    pairing: np.ndarray
    user: np.ndarray
    relay: np.ndarray
    alpha: np.ndarray
    power: np.ndarray
    weights: np.ndarray
    unit_band: tuple[Band, ...]
    cell_index: int = 0
    user_origin: tuple[tuple[int, int], ...] = ()

    @property
    def mode(self) -> list[LinkMode]:
        return [LinkMode.RELAY if m >= 0 else LinkMode.DIRECT for m in self.relay]

    def user_rates(self) -> np.ndarray:
        terms = weighted_rate_term(self.weights[self.user], self.alpha, self.power)
        rates = np.zeros(len(self.weights))
        np.add.at(rates, self.user, terms)
        return rates

    def objective(self) -> float:
        return float(weighted_rate_term(self.weights[self.user], self.alpha, self.power).sum())

    def active_units(self) -> dict[Band, int]:
        """Units carrying power: first hops with p > 0, second hops of such relay pairs."""
        counts = {b: 0 for b in Band}
        on = self.power > 0
        for u in np.flatnonzero(on):
            counts[self.unit_band[u]] += 1
            if self.relay[u] >= 0:
                counts[self.unit_band[self.pairing[u]]] += 1
        return counts

    def source_relay_power(self, problem: CellProblem) -> tuple[np.ndarray, np.ndarray]:
        src = np.empty_like(self.power)
        rel = np.empty_like(self.power)
        for u, (j, k, m, p) in enumerate(zip(self.pairing, self.user, self.relay, self.power)):
            if m < 0:
                src[u], rel[u] = power_split(p, 1.0, 1.0, 0.0, LinkMode.DIRECT)
            else:
                src[u], rel[u] = power_split(p, problem.fm[u, m], problem.mk[j, m, k], problem.fk[u, k], LinkMode.RELAY)
        return src, rel


@dataclass(frozen=True)
class Allocation:
    cells: tuple[CellAllocation, ...]

    def objective(self) -> float:
        return sum(c.objective() for c in self.cells)

    def band_counts(self) -> dict[Band, int]:
        counts = {b: 0 for b in Band}
        for c in self.cells:
            for b, n in c.active_units().items():
                counts[b] += n
        return counts

    def total_units(self) -> int:
        """Units over both hops, active or not."""
        return sum(2 * len(c.pairing) for c in self.cells)

    def rates_by_user(self) -> dict[tuple[int, int], float]:
        out = {}
        for c in self.cells:
            for origin, r in zip(c.user_origin, c.user_rates()):
                out[origin] = float(r)
        return out


@dataclass(frozen=True)
class FeasibilityRecord:
    user_rates: tuple[np.ndarray, ...]
    rate_ok: tuple[np.ndarray, ...]
    power_used: np.ndarray
    power_ok: np.ndarray
    matching_ok: np.ndarray
    details: list[str] = field(default_factory=list)

    @property
    def min_rate_met(self) -> bool:
        return all(bool(np.all(r)) for r in self.rate_ok)

    @property
    def power_met(self) -> bool:
        return bool(np.all(self.power_ok))

    @property
    def feasible(self) -> bool:
        return self.min_rate_met and self.power_met and bool(np.all(self.matching_ok))


def check_feasibility(
    allocation: Allocation,
    problem: AllocationProblem,
    rate_tol: float = 1e-6,
    power_rtol: float = 1e-3,
) -> FeasibilityRecord:
    """Read-only check of the min-rate, power-budget and exclusive-pairing constraints."""
    rates, rate_ok, used, power_ok, match_ok, details = [], [], [], [], [], []
    for alloc, cell in zip(allocation.cells, problem.cells):
        r = alloc.user_rates()
        ok = r >= cell.r_min - rate_tol
        rates.append(r)
        rate_ok.append(ok)
        p = float(np.sum(alloc.power))
        used.append(p)
        pok = p <= cell.power_budget * (1 + power_rtol) and bool(np.all(alloc.power >= 0))
        power_ok.append(pok)
        U = cell.U
        mok = (
            len(alloc.pairing) == U
            and bool(np.all((alloc.pairing >= 0) & (alloc.pairing < U)))
            and len(np.unique(alloc.pairing)) == U
        )
        match_ok.append(mok)
        for k in np.flatnonzero(~ok):
            details.append(f"cell {cell.cell_index} user {k}: rate {r[k]:.6g} < r_min {cell.r_min}")
        if not pok:
            details.append(f"cell {cell.cell_index}: power {p:.6g} exceeds budget {cell.power_budget:.6g}")
        if not mok:
            details.append(f"cell {cell.cell_index}: pairing is not a perfect matching")
    return FeasibilityRecord(tuple(rates), tuple(rate_ok), np.array(used), np.array(power_ok),
                             np.array(match_ok), details)
