"""Seeded Monte Carlo runs over a parameter sweep, with CSV output.

Every scheme in a (sweep value, drop) cell sees the same channel draw, and
drop ``d`` uses the same random streams at every sweep value, so schemes and
sweep points are compared on common random numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .baselines import solve_band_restricted, solve_equal_power, solve_no_pairing
from .channel import ChannelGains, generate_gains
from .config import apply_overrides
from .dual import SolveReport, solve
from .greedy import solve_greedy
from .model import Band, ScenarioConfig, sample_topology, validate_scenario
from .problem import Allocation

__all__ = [
    "SCHEMES",
    "SWEEPS",
    "ExperimentSpec",
    "ResultRow",
    "SummaryRow",
    "scenario_for",
    "run_drop",
    "run_experiment",
    "summarize",
    "emit_csv",
    "load_csv",
    "emit_summary_csv",
    "emit_trace_csv",
]


def _without_trace(fn):
    def run(scenario, gains, trace=False):
        return fn(scenario, gains)
    return run


SCHEMES: dict[str, Callable[..., tuple[Allocation, SolveReport]]] = {
    "dual": solve,
    "greedy": solve_greedy,
    "ep": _without_trace(solve_equal_power),
    "no_pairing": solve_no_pairing,
    "lte_only": partial(solve_band_restricted, bands={Band.LTE}),
    "e_only": partial(solve_band_restricted, bands={Band.E}),
}

# sweep name -> how a value changes the scenario
SWEEPS = ("none", "subcarriers_per_band", "num_users", "num_relays", "distance_bucket")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    schemes: tuple[str, ...] = ("dual",)
    sweep: str = "none"
    sweep_values: tuple[int, ...] = ()
    drops: int = 1
    workers: int = 1
    trace: bool = False

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("invalid experiment: " + "; ".join(problems))

    def values(self) -> tuple[int, ...]:
        return self.sweep_values if self.sweep != "none" else (0,)

    def violations(self) -> list[str]:
        out = []
        if self.drops < 1:
            out.append(f"drops must be >= 1 (got {self.drops})")
        if self.workers < 1:
            out.append(f"workers must be >= 1 (got {self.workers})")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            out.append(f"schemes must be a nonempty subset of {sorted(SCHEMES)} (got {list(self.schemes)})")
        if self.sweep not in SWEEPS:
            out.append(f"unknown sweep {self.sweep!r}")
        elif self.sweep != "none":
            if not self.sweep_values:
                out.append(f"sweep {self.sweep!r} needs at least one value")
            for v in self.sweep_values:
                try:
                    problems = validate_scenario(scenario_for(self.scenario, self.sweep, v))
                except (TypeError, ValueError) as exc:
                    problems = [str(exc)]
                out += [f"{self.sweep}={v}: {p}" for p in problems]
        return out


def scenario_for(scenario: ScenarioConfig, sweep: str, value: int) -> ScenarioConfig:
    """The scenario at one sweep point."""
    if sweep == "none":
        return scenario
    if sweep == "subcarriers_per_band":
        return apply_overrides(scenario, {"subcarriers_per_band": int(value)})
    if sweep in ("num_users", "num_relays"):
        return apply_overrides(scenario, {sweep: int(value)})
    if sweep == "distance_bucket":
        count = scenario.distance_bucket[1] if scenario.distance_bucket else 3
        return dataclasses.replace(scenario, distance_bucket=(int(value), count))
    raise ValueError(f"unknown sweep {sweep!r}")


@dataclass(frozen=True)
class ResultRow:
    sweep: str
    sweep_value: int
    drop: int
    scheme: str
    objective: float
    dual_objective: float
    min_user_rate: float
    units_V: int
    units_E: int
    units_LTE: int
    units_idle: int
    converged: bool
    iterations: int
    flags: str
    gains_fingerprint: str
    wall_time_s: float = field(default=float("nan"), compare=False)


_COLUMNS = tuple(f.name for f in dataclasses.fields(ResultRow) if f.name != "wall_time_s")


def _row(sweep, value, drop, scheme, alloc: Allocation, report: SolveReport, fingerprint, wall) -> ResultRow:
    counts = alloc.band_counts()
    used = sum(counts.values())
    rates = [r for cell in report.user_rates for r in cell]
    return ResultRow(
        sweep=sweep,
        sweep_value=int(value),
        drop=int(drop),
        scheme=scheme,
        objective=float(report.primal_objective),
        dual_objective=float(report.dual_objective),
        min_user_rate=float(min(rates)) if rates else float("nan"),
        units_V=counts[Band.V],
        units_E=counts[Band.E],
        units_LTE=counts[Band.LTE],
        units_idle=alloc.total_units() - used,
        converged=bool(report.converged),
        iterations=int(report.iterations),
        flags=";".join(sorted(report.flags)),
        gains_fingerprint=fingerprint,
        wall_time_s=wall,
    )


def drop_gains(scenario: ScenarioConfig, drop: int) -> ChannelGains:
    topo = sample_topology(scenario, drop=drop)
    return generate_gains(scenario, topo, drop=drop)


def run_drop(spec: ExperimentSpec, value: int, drop: int) -> tuple[list[ResultRow], list[dict]]:
    """All schemes on one channel draw."""
    scenario = scenario_for(spec.scenario, spec.sweep, value)
    gains = drop_gains(scenario, drop)
    fp = gains.fingerprint()
    rows, trace = [], []
    for scheme in spec.schemes:
        t0 = time.perf_counter()
        alloc, report = SCHEMES[scheme](scenario, gains, trace=spec.trace)
        rows.append(_row(spec.sweep, value, drop, scheme, alloc, report, fp, time.perf_counter() - t0))
        for t in report.trace:
            trace.append({"sweep_value": value, "drop": drop, "scheme": scheme, **t})
    return rows, trace


def _run_task(args):
    spec, value, drop = args
    return run_drop(spec, value, drop)


def run_experiment(spec: ExperimentSpec, return_trace: bool = False):
    """Rows ordered by (sweep value, drop, declared scheme order).

    With ``workers > 1`` drops run in worker processes; the output does not
    depend on the worker count.
    """
    tasks = [(spec, v, d) for v in spec.values() for d in range(spec.drops)]
    if spec.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        results = [_run_task(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    if return_trace:
        return rows, [t for _, ts in results for t in ts]
    return rows


@dataclass(frozen=True)
class SummaryRow:
    scheme: str
    sweep_value: int
    n: int
    mean: float
    std: float
    converged_fraction: float


def summarize(rows: Iterable[ResultRow]) -> list[SummaryRow]:
    """Mean and sample std (ddof=1) of the objective per (scheme, sweep value)."""
    groups: dict[tuple[str, int], list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r)
    out = []
    for (scheme, value), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        obj = np.array([r.objective for r in rs])
        std = float(obj.std(ddof=1)) if len(obj) > 1 else 0.0
        out.append(SummaryRow(scheme, value, len(rs), float(obj.mean()), std,
                              float(np.mean([r.converged for r in rs]))))
    return out


_HEADER = "# hetnet_alloc results: floats written with %.17g (round-trip exact); booleans as 0/1"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def emit_csv(rows: Sequence[ResultRow], path) -> Path:
    """Write one line per row after a comment line and the header. Wall time is not written."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(_HEADER + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_COLUMNS)
            for r in rows:
                w.writerow([_fmt(getattr(r, c)) for c in _COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _parse(name: str, text: str):
    kind = {f.name: f.type for f in dataclasses.fields(ResultRow)}[name]
    if kind == "bool":
        return text == "1"
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def load_csv(path) -> list[ResultRow]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [ResultRow(**{c: _parse(c, rec[c]) for c in _COLUMNS}) for rec in reader]


def emit_summary_csv(summary: Sequence[SummaryRow], path) -> Path:
    path = Path(path)
    cols = [f.name for f in dataclasses.fields(SummaryRow)]
    with path.open("w", newline="") as fh:
        fh.write(_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in summary:
            w.writerow([_fmt(getattr(s, c)) for c in cols])
    return path


def emit_trace_csv(trace: Sequence[dict], path) -> Path:
    """Iteration trace; multiplier vectors are written ';'-joined."""
    path = Path(path)
    cols = ["sweep_value", "drop", "scheme", "cell", "n", "tau", "delta", "dual", "primal"]
    with path.open("w", newline="") as fh:
        fh.write(_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in trace:
            rec = dict(t)
            rec["delta"] = ";".join(_fmt(float(x)) for x in np.atleast_1d(rec["delta"]))
            w.writerow([_fmt(float(rec[c])) if c in ("tau", "dual", "primal") else _fmt(rec[c]) for c in cols])
    return path

