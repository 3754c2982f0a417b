"""Decentralized multi-item capacitated lot sizing by a spillover auction.

Liquid agents (one per item and demand period) bid for capacity held by
buffer agents (one per period); see :func:`run_spillover`.
"""

from .errors import (InfeasibleInstance, InvalidInstance, InvalidPlan, NodeBudgetExceeded,
                     OracleLimitExceeded, ProtocolViolation, ReplayMismatch, SpilloverError,
                     UndefinedGap)
from .generator import GeneratorConfig, congestion_ratio, generate
from .model import (Instance, ItemSpec, Plan, check_feasibility, compute_upc, derive_aggregate,
                    exact_cost, gap, heuristic_cost_za, lagrangian_cost, normalize_instance)
from .oracle import OracleLimits, export_lp, parse_lp, solve_exact, verify_against_oracle
from .runtime import RunOptions, RunReport, replay, run_spillover

__all__ = [
    "GeneratorConfig", "InfeasibleInstance", "Instance", "InvalidInstance", "InvalidPlan",
    "ItemSpec", "NodeBudgetExceeded", "OracleLimitExceeded", "OracleLimits", "Plan",
    "ProtocolViolation", "ReplayMismatch", "RunOptions", "RunReport", "SpilloverError",
    "UndefinedGap", "check_feasibility", "compute_upc", "congestion_ratio", "derive_aggregate",
    "exact_cost", "export_lp", "gap", "generate", "heuristic_cost_za", "lagrangian_cost",
    "normalize_instance", "parse_lp", "replay", "run_spillover", "solve_exact",
    "verify_against_oracle",
]
