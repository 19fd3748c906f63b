"""Continuous matching of enmeshed coordination queries."""

from .engine import ALGORITHMS, BEST_EFFORT, Engine, EngineConfig, SoundnessError, matchability_init
from .index import Cindex, Pindex
from .model import (
    CardinalityRange,
    CommittedGroup,
    ContractViolation,
    EnmeshedQuery,
    JoinPredicate,
    Own,
    UserProfile,
    pair_match,
    satisfies,
    verify_committable,
)
from .oracle import offline_optimal_exhaustive, opt_yardstick_scan, optimal_best_effort_nojoins
from .workload import WorkloadConfig, WorkloadTrace, generate_figure1_family, generate_trace

__version__ = "0.1.0"
