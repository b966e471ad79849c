"""Diagonal-plus-rank-one coordination controller and its cost calculus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .local_synthesis import (AgentModel, AssumptionError, Constraint, LocalSolution, solve_local,
                              validate)


def normalize_weights(raw) -> np.ndarray:
    """Scale agent weights to unit Euclidean norm. Zero entries are rejected."""
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size == 0 or not np.any(raw):
        raise ValueError("weight vector is zero")
    zero = np.flatnonzero(raw == 0)
    if zero.size:
        raise ValueError(f"zero weight at index {zero[0] + 1}; exclude that agent from the problem")
    return raw / np.linalg.norm(raw)


@dataclass(frozen=True)
class CoordinationProblem:
    model: AgentModel
    nu: int
    mu: np.ndarray
    constraint: Constraint = field(default_factory=Constraint.unconstrained)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        object.__setattr__(self, "mu", mu)
        if self.nu < 2:
            raise ValueError(f"coordination needs at least 2 agents, got nu={self.nu}")
        if mu.size != self.nu:
            raise ValueError(f"mu has {mu.size} entries, expected {self.nu}")
        if abs(mu @ mu - 1) > 1e-12:
            raise ValueError("mu must have unit norm (use normalize_weights)")
        if np.any(mu == 0):
            raise ValueError(f"zero weight at index {np.flatnonzero(mu == 0)[0] + 1}")

    @classmethod
    def uniform(cls, model: AgentModel, nu: int, constraint: Constraint | None = None):
        return cls(model, nu, np.full(nu, 1 / np.sqrt(nu)), constraint or Constraint.unconstrained())


@dataclass(frozen=True)
class AggregateController:
    """``K_opt = (I - mu mu') kron K_local``, kept in factored form."""

    local: LocalSolution
    mu: np.ndarray

    @property
    def nu(self) -> int:
        return self.mu.size

    def mixing(self) -> np.ndarray:
        """Coefficients ``c_ij = delta_ij - mu_i mu_j`` of ``u_i = K_local(sum_j c_ij x_j)``."""
        return np.eye(self.nu) - np.outer(self.mu, self.mu)

    def agent_coefficients(self, i: int) -> np.ndarray:
        return self.mixing()[i]

    def deviations(self, x: np.ndarray) -> np.ndarray:
        """``x_i - mu_i xbar`` for stacked agent states ``x[..., i, :]``."""
        xbar = np.einsum("i,...ij->...j", self.mu, x)
        return x - self.mu[:, None] * xbar[..., None, :]


def synthesize(problem: CoordinationProblem, overrides=frozenset(),
               local: LocalSolution | None = None) -> AggregateController:
    report = validate(problem.model, problem.mu, problem.constraint)
    if not report.ok(set(overrides)):
        raise AssumptionError(report)
    if local is None:
        local = solve_local(problem.model, problem.constraint)
    _match(problem, local)
    return AggregateController(local, problem.mu)


def _match(problem: CoordinationProblem, local: LocalSolution) -> None:
    if local.constraint != problem.constraint:
        raise ValueError(f"local solution is for {local.constraint}, problem has {problem.constraint}")


def _index(problem, i):
    if not 0 <= i < problem.nu:
        raise IndexError(f"agent index {i} out of range for nu={problem.nu}")


def total_cost(problem: CoordinationProblem, local: LocalSolution) -> float:
    """Optimal squared H2 norm of the whole coordinated system."""
    _match(problem, local)
    return (problem.nu - 1) * local.gamma_alpha_sq + local.gamma0_sq


def pairwise_cost(problem: CoordinationProblem, local: LocalSolution, i: int, j: int) -> float:
    """Squared H2 norm from disturbance ``w_j`` to output ``z_i``."""
    _match(problem, local)
    _index(problem, i)
    _index(problem, j)
    mu = problem.mu
    return local.gamma_alpha_sq * (i == j) + mu[i] ** 2 * mu[j] ** 2 * (local.gamma0_sq - local.gamma_alpha_sq)


def agent_cost(problem: CoordinationProblem, local: LocalSolution, i: int) -> float:
    _match(problem, local)
    _index(problem, i)
    m2 = problem.mu[i] ** 2
    return m2 * local.gamma0_sq + (1 - m2) * local.gamma_alpha_sq


def benefit_of_cooperation(problem: CoordinationProblem, local: LocalSolution, i: int) -> float:
    """Improvement over the communication-free law ``u_i = 0``."""
    _match(problem, local)
    _index(problem, i)
    return (1 - problem.mu[i] ** 2) * (local.gamma0_sq - local.gamma_alpha_sq)


def cost_of_coordination(problem: CoordinationProblem, local: LocalSolution, i: int) -> float:
    """Degradation relative to the uncoordinated, unconstrained local optimum."""
    _match(problem, local)
    _index(problem, i)
    if not np.isfinite(local.gamma_opt):
        raise ValueError("gamma_opt unavailable for this local solution")
    m2 = problem.mu[i] ** 2
    return m2 * (local.gamma0_sq - local.gamma_opt_sq) + (1 - m2) * (local.gamma_alpha_sq - local.gamma_opt_sq)


@dataclass(frozen=True)
class CostReport:
    total_sq: float
    per_agent_sq: np.ndarray
    pairwise_sq: np.ndarray
    benefit_of_cooperation: np.ndarray
    cost_of_coordination: np.ndarray
    gamma0_sq: float
    gamma_alpha_sq: float
    gamma_opt_sq: float


def cost_report(problem: CoordinationProblem, local: LocalSolution) -> CostReport:
    nu = problem.nu
    idx = range(nu)
    coc = np.array([cost_of_coordination(problem, local, i) if np.isfinite(local.gamma_opt) else np.nan
                    for i in idx])
    return CostReport(
        total_sq=total_cost(problem, local),
        per_agent_sq=np.array([agent_cost(problem, local, i) for i in idx]),
        pairwise_sq=np.array([[pairwise_cost(problem, local, i, j) for j in idx] for i in idx]),
        benefit_of_cooperation=np.array([benefit_of_cooperation(problem, local, i) for i in idx]),
        cost_of_coordination=coc,
        gamma0_sq=local.gamma0_sq,
        gamma_alpha_sq=local.gamma_alpha_sq,
        gamma_opt_sq=local.gamma_opt_sq,
    )
