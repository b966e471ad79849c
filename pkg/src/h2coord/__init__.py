"""Optimal H2 coordination of homogeneous agents under delayed or sampled communication."""

__version__ = "0.1.0"

from .coordination import (AggregateController, CoordinationProblem, agent_cost, benefit_of_cooperation,
                           cost_of_coordination, cost_report, normalize_weights, pairwise_cost, synthesize,
                           total_cost)
from .local_synthesis import AgentModel, Constraint, LocalSolution, solve_local, validate

__all__ = [
    "AgentModel", "Constraint", "LocalSolution", "solve_local", "validate",
    "AggregateController", "CoordinationProblem", "normalize_weights", "synthesize", "total_cost",
    "pairwise_cost", "agent_cost", "benefit_of_cooperation", "cost_of_coordination", "cost_report",
]
