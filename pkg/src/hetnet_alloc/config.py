"""YAML scenario files.

Schema (all keys required unless a default is listed)::

    subcarriers_per_band: 8
    r_min: 3.0                     # bits/s/Hz
    seed: 0                        # default 0
    weight_rule: linear            # linear | uniform | explicit
    explicit_weights: [[...], ...] # one list per cell, only for "explicit"
    cells:
      - kind: macro                # macro | small
        count: 1                   # default 1; repeats the entry
        bands: [V, E, LTE]
        power_budget_db: 16        # or power_budget: <linear>
        d0_ref_m: 10
        relay_link_interval_m: [100, 300]
        direct_link_interval_m: [50, 500]
        num_relays: 2
        num_users: 4
    band_params:
      indoor|outdoor:
        V|E|LTE: {beta, gamma, shadow_sigma_db, carrier_ghz, f0_ghz}
    extends: reference             # optional: start from another file or preset
    overrides: {num_users: 2}      # optional: flat changes, see apply_overrides
    experiment:                    # optional: default run for this file
      sweep: subcarriers_per_band  # none | subcarriers_per_band | num_users | num_relays | distance_bucket
      values: [4, 8, 12]
      schemes: [dual, ep]
      drops: 100
    solver:                        # every key optional
      eps_tau: 1.0e-4
      eps_delta: 1.0e-4
      step_scale: 0.5
      max_iterations: 5000
      assignment_method: optimal_matching
      delta_cap: 1.0e4
      normalize_subgradient: true

Power budgets are relative to unit noise power per subcarrier.
"""

from __future__ import annotations

from dataclasses import asdict, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .model import (
    Band,
    BandPropagationParams,
    CellConfig,
    CellKind,
    ScenarioConfig,
    SolverConfig,
    db_to_linear,
)

__all__ = [
    "PRESETS",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_config",
    "load_scenario",
    "preset_path",
    "load_yaml",
    "apply_overrides",
]

PRESETS = ("reference", "fig3", "fig4", "fig5", "fig6")


def preset_path(name: str) -> Path:
    return Path(str(resources.files("hetnet_alloc") / "presets" / f"{name}.yaml"))


def load_yaml(path) -> dict:
    with Path(path).open() as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return data


def _cell(entry: dict) -> list[CellConfig]:
    entry = dict(entry)
    count = int(entry.pop("count", 1))
    if "power_budget_db" in entry:
        entry["power_budget"] = db_to_linear(float(entry.pop("power_budget_db")))
    unknown = set(entry) - {f.name for f in fields(CellConfig)}
    if unknown:
        raise ValueError(f"unknown cell keys: {sorted(unknown)}")
    cell = CellConfig(
        kind=CellKind(entry["kind"]),
        bands=tuple(Band(b) for b in entry["bands"]),
        power_budget=float(entry["power_budget"]),
        d0_ref_m=float(entry["d0_ref_m"]),
        relay_link_interval_m=tuple(float(x) for x in entry["relay_link_interval_m"]),
        direct_link_interval_m=tuple(float(x) for x in entry["direct_link_interval_m"]),
        num_relays=int(entry["num_relays"]),
        num_users=int(entry["num_users"]),
    )
    return [cell] * count


def _solver(entry: dict) -> SolverConfig:
    defaults = SolverConfig()
    unknown = set(entry) - {f.name for f in fields(SolverConfig)}
    if unknown:
        raise ValueError(f"unknown solver keys: {sorted(unknown)}")
    # YAML 1.1 reads "1.0e4" as a string; cast through the default's type
    return SolverConfig(**{k: _cast(type(getattr(defaults, k)), v) for k, v in entry.items()})


def _cast(kind, value):
    if kind is bool and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return kind(float(value)) if kind is int else kind(value)


def scenario_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    cells = [c for entry in data["cells"] for c in _cell(entry)]
    band_params = {
        env: {Band(b): BandPropagationParams(**{k: float(v) for k, v in p.items()}) for b, p in table.items()}
        for env, table in data["band_params"].items()
    }
    solver = _solver(data.get("solver", {}))
    ew = data.get("explicit_weights")
    return ScenarioConfig(
        cells=tuple(cells),
        subcarriers_per_band=int(data["subcarriers_per_band"]),
        r_min=float(data["r_min"]),
        band_params=band_params,
        weight_rule=data.get("weight_rule", "linear"),
        explicit_weights=None if ew is None else tuple(tuple(float(x) for x in row) for row in ew),
        solver=solver,
        seed=int(data.get("seed", 0)),
    )


def scenario_to_dict(scenario: ScenarioConfig) -> dict[str, Any]:
    """Plain-data form that :func:`scenario_from_dict` reads back unchanged."""
    cells = []
    for c in scenario.cells:
        cells.append({
            "kind": c.kind.value,
            "bands": [b.value for b in c.bands],
            "power_budget": c.power_budget,
            "d0_ref_m": c.d0_ref_m,
            "relay_link_interval_m": list(c.relay_link_interval_m),
            "direct_link_interval_m": list(c.direct_link_interval_m),
            "num_relays": c.num_relays,
            "num_users": c.num_users,
        })
    out = {
        "subcarriers_per_band": scenario.subcarriers_per_band,
        "r_min": scenario.r_min,
        "seed": scenario.seed,
        "weight_rule": scenario.weight_rule,
        "cells": cells,
        "band_params": {
            env: {b.value: asdict(p) for b, p in table.items()} for env, table in scenario.band_params.items()
        },
        "solver": asdict(scenario.solver),
    }
    if scenario.explicit_weights is not None:
        out["explicit_weights"] = [list(r) for r in scenario.explicit_weights]
    return out


def _resolve(ref, base_dir: Path | None = None, depth: int = 0) -> tuple[dict, list[dict]]:
    if depth > 8:
        raise ValueError("'extends' chain too deep")
    if ref in PRESETS:
        path = preset_path(ref)
    else:
        path = Path(ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
    data = load_yaml(path)
    parent = data.pop("extends", None)
    own = data.pop("overrides", None) or {}
    if parent is None:
        return data, [own]
    base, chain = _resolve(parent, path.parent, depth + 1)
    return {**base, **data}, chain + [own]


def load_config(path_or_preset) -> tuple[ScenarioConfig, dict]:
    """Scenario plus the file's ``experiment`` block (empty when absent)."""
    data, chain = _resolve(path_or_preset)
    experiment = data.pop("experiment", None) or {}
    scenario = scenario_from_dict(data)
    for ov in chain:
        scenario = apply_overrides(scenario, ov)
    return scenario, dict(experiment)


def load_scenario(path_or_preset) -> ScenarioConfig:
    """Load a scenario from a YAML path or a preset name such as ``"reference"``."""
    return load_config(path_or_preset)[0]


_CELL_KEYS = {"num_relays", "num_users", "power_budget"}


def apply_overrides(scenario: ScenarioConfig, overrides: dict[str, Any] | None) -> ScenarioConfig:
    """Apply flat overrides; cell-level keys (``num_users`` ...) hit every cell."""
    if not overrides:
        return scenario
    overrides = dict(overrides)
    cell_changes = {k: overrides.pop(k) for k in list(overrides) if k in _CELL_KEYS}
    if "distance_bucket" in overrides and overrides["distance_bucket"] is not None:
        overrides["distance_bucket"] = tuple(int(x) for x in overrides["distance_bucket"])
    if "solver" in overrides:
        overrides["solver"] = _solver({**asdict(scenario.solver), **overrides["solver"]})
    out = replace(scenario, **overrides)
    return out.with_cells(**cell_changes) if cell_changes else out
