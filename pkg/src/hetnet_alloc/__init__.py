"""Joint subcarrier pairing, relay/user selection and power allocation for
multiband (V-band, E-band, LTE) relay HetNets."""

from .baselines import solve_band_restricted, solve_equal_power, solve_no_pairing
from .channel import ChannelGains, dump_gains_csv, generate_gains, load_gains_csv
from .config import load_config, load_scenario
from .dual import SolveReport, solve, solve_problem
from .estimators import EqualPowerAllocator, JointAllocator
from .experiment import ExperimentSpec, ResultRow, emit_csv, load_csv, run_experiment, summarize
from .greedy import solve_greedy
from .model import Band, CellKind, ScenarioConfig, SolverConfig, sample_topology, validate_scenario
from .oracle import exhaustive_solve, grid_solve_min_rate
from .problem import Allocation, AllocationProblem, CellProblem, check_feasibility

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AllocationProblem",
    "Band",
    "CellKind",
    "CellProblem",
    "ChannelGains",
    "EqualPowerAllocator",
    "ExperimentSpec",
    "JointAllocator",
    "ResultRow",
    "ScenarioConfig",
    "SolveReport",
    "SolverConfig",
    "check_feasibility",
    "dump_gains_csv",
    "emit_csv",
    "exhaustive_solve",
    "generate_gains",
    "grid_solve_min_rate",
    "load_config",
    "load_csv",
    "load_gains_csv",
    "load_scenario",
    "run_experiment",
    "sample_topology",
    "solve",
    "solve_band_restricted",
    "solve_equal_power",
    "solve_greedy",
    "solve_no_pairing",
    "solve_problem",
    "summarize",
    "validate_scenario",
]
