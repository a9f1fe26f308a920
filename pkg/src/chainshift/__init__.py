"""Skorokhod embeddings of two-sided Markov chains.

Feasibility of embedding a target law by a non-randomized shift, explicit
optimal stopping-time construction, the allocation/transport machinery
behind it, and statistical verification of the distributional, moment, and
optimality claims at desk scale.
"""

from .chains import (ChainSpec, DualKernel, chain_from_dict, chain_to_dict,
                     coin_chain, dual_kernel, pattern_chain,
                     stationary_measure, three_state_chain)
from .embedding import (AllocationView, FeasibilityVerdict, StoppingResult,
                        allocation_view, check_feasibility, solve_composite,
                        solve_trand, solve_tstar, solve_tvisit)
from .local_time import (BallConfig, LocalTimeLedger, TargetMeasure, balls,
                         ledger, weighted_local_time)
from .trajectory import Trajectory, sample_backward, sample_forward
from .transport import (CostFunction, Excursion, TransportRule,
                        compare_window_costs, find_crossings,
                        find_excursion_around, greedy_match, mass_received,
                        random_balancing_rule, repair_all, repair_crossing,
                        verify_balance, window_cost)

__version__ = "0.1.0"

__all__ = [
    "ChainSpec", "DualKernel", "Trajectory", "TargetMeasure",
    "LocalTimeLedger", "BallConfig", "FeasibilityVerdict", "StoppingResult",
    "AllocationView", "TransportRule", "Excursion", "CostFunction",
    "stationary_measure", "dual_kernel", "sample_forward", "sample_backward",
    "ledger", "weighted_local_time", "balls", "check_feasibility",
    "solve_tstar", "solve_trand", "solve_tvisit", "solve_composite",
    "allocation_view", "verify_balance", "mass_received", "greedy_match",
    "find_crossings", "repair_crossing", "repair_all",
    "find_excursion_around", "window_cost", "compare_window_costs",
    "random_balancing_rule", "coin_chain", "three_state_chain",
    "pattern_chain", "chain_to_dict", "chain_from_dict",
]
