"""Branch-and-bound ReLU network verification with incremental conflict reuse."""

from .bab import SolveConfig, SolveResult, SolveStats, Verdict, solve
from .ica import ConflictPool, ICAState, load_pool, save_pool
from .model import Layer, Network, NeuronId, load_network, random_network
from .oracle import brute_force_verify, exhaustive_sufficiency
from .query import Box, LinearConstraint, Refinement, Relation, VerificationQuery, check_refinement
from .satcore import PhaseLiteral
from .tasks import (
    MsfsTask,
    RadiusTask,
    SplitTask,
    input_split_verify,
    msfs_extract,
    robustness_radius,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ConflictPool",
    "ICAState",
    "Layer",
    "LinearConstraint",
    "MsfsTask",
    "Network",
    "NeuronId",
    "PhaseLiteral",
    "RadiusTask",
    "Refinement",
    "Relation",
    "SolveConfig",
    "SolveResult",
    "SolveStats",
    "SplitTask",
    "Verdict",
    "VerificationQuery",
    "brute_force_verify",
    "check_refinement",
    "exhaustive_sufficiency",
    "input_split_verify",
    "load_network",
    "load_pool",
    "msfs_extract",
    "random_network",
    "robustness_radius",
    "save_pool",
    "solve",
]
