"""Stand-alone agent problem: assumption checks and the four local solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg as sla

from . import matfun
from .matfun import as_matrix

CONSTRAINT_KINDS = ("none", "delay", "zoh", "opthold")


class AssumptionError(ValueError):
    """Raised when a required standing assumption fails and no override applies."""

    def __init__(self, report: "AssumptionReport"):
        super().__init__("; ".join(f"{c.name}: {c.detail}" for c in report.failures()))
        self.report = report


@dataclass(frozen=True)
class AgentModel:
    A: np.ndarray
    Bw: np.ndarray
    Bu: np.ndarray
    Cz: np.ndarray
    Dzu: np.ndarray

    def __post_init__(self):
        for k in ("A", "Bw", "Bu", "Cz", "Dzu"):
            object.__setattr__(self, k, as_matrix(getattr(self, k), k))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.Bw.shape[0] != n or self.Bu.shape[0] != n:
            raise ValueError("Bw and Bu must have n rows")
        if self.Cz.shape[1] != n:
            raise ValueError("Cz must have n columns")
        if self.Dzu.shape != (self.Cz.shape[0], self.Bu.shape[1]):
            raise ValueError(f"Dzu must be {self.Cz.shape[0]}x{self.Bu.shape[1]}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.Bu.shape[1]

    @property
    def r(self) -> int:
        return self.Bw.shape[1]

    @property
    def p(self) -> int:
        return self.Cz.shape[0]

    def replace(self, **kw) -> "AgentModel":
        d = dict(A=self.A, Bw=self.Bw, Bu=self.Bu, Cz=self.Cz, Dzu=self.Dzu)
        d.update(kw)
        return AgentModel(**d)


@dataclass(frozen=True)
class Constraint:
    """Communication constraint on off-diagonal controller blocks.

    ``kind`` is one of ``none``, ``delay``, ``zoh`` (sampled, zero-order hold)
    or ``opthold`` (sampled, optimal hold waveform); ``h`` is the delay or
    sampling period.
    """

    kind: str = "none"
    h: float | None = None

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "h", None)
        else:
            if self.h is None or not self.h > 0:
                raise ValueError(f"{self.kind} constraint needs h > 0, got {self.h}")
            object.__setattr__(self, "h", float(self.h))

    @classmethod
    def unconstrained(cls):
        return cls("none")

    @classmethod
    def delay(cls, h):
        return cls("delay", h)

    @classmethod
    def zoh(cls, h):
        return cls("zoh", h)

    @classmethod
    def opthold(cls, h):
        return cls("opthold", h)

    @property
    def sampled(self) -> bool:
        return self.kind in ("zoh", "opthold")


# -- controllers -------------------------------------------------------------

@dataclass(frozen=True)
class StaticGain:
    F: np.ndarray


@dataclass(frozen=True)
class PiRealization:
    """FIR dead-time compensator ``Pi(s) = (sI - A)^{-1}(Bu - e^{Ah} Bu e^{-sh})``.

    Realized in time as ``chi' = A chi + Bu u(t) - e^{Ah} Bu u(t-h)``.
    """

    A: np.ndarray
    Bu: np.ndarray
    expAhBu: np.ndarray
    h: float

    def freq_response(self, s: complex) -> np.ndarray:
        n = self.A.shape[0]
        M = s * np.eye(n) - self.A
        rhs = self.Bu - self.expAhBu * np.exp(-s * self.h)
        # singularities at eig(A) are removable; fall back to the integral form near them
        if np.linalg.cond(M) > 1e8:
            return self._integral_form(s)
        return np.linalg.solve(M, rhs)

    def _integral_form(self, s: complex) -> np.ndarray:
        n, m = self.Bu.shape
        H = np.zeros((n + m, n + m), dtype=complex)
        H[:n, :n] = self.A - s * np.eye(n)
        H[:n, n:] = self.Bu
        return sla.expm(H * self.h)[:n, n:]

    def dc_gain(self) -> np.ndarray:
        return self.freq_response(0.0).real


@dataclass(frozen=True)
class DelayDtc:
    F: np.ndarray
    expAh: np.ndarray
    Pi: PiRealization

    @property
    def h(self) -> float:
        return self.Pi.h

    def freq_response(self, s: complex) -> np.ndarray:
        """``(I - F Pi(s))^{-1} F e^{Ah} e^{-sh}``."""
        m = self.F.shape[0]
        FPi = self.F @ self.Pi.freq_response(s)
        return np.linalg.solve(np.eye(m) - FPi, self.F @ self.expAh) * np.exp(-s * self.h)


@dataclass(frozen=True)
class SampledStatic:
    Fhat: np.ndarray
    h: float


@dataclass(frozen=True)
class SampledWaveformHold:
    F: np.ndarray
    Acl: np.ndarray
    h: float

    def waveform(self, tau: float) -> np.ndarray:
        """Gain applied to the sampled deviation at ``tau`` after the sample."""
        return self.F @ sla.expm(self.Acl * tau)


LocalController = Union[StaticGain, DelayDtc, SampledStatic, SampledWaveformHold]


@dataclass(frozen=True)
class LocalSolution:
    constraint: Constraint
    gamma0: float
    gamma_alpha: float
    gamma_opt: float
    Xbar: np.ndarray
    Xalpha: np.ndarray
    controller: LocalController
    Falpha: np.ndarray | None = None
    XalphaHat: np.ndarray | None = None
    FalphaHat: np.ndarray | None = None

    @property
    def gamma0_sq(self) -> float:
        return self.gamma0**2

    @property
    def gamma_alpha_sq(self) -> float:
        return self.gamma_alpha**2

    @property
    def gamma_opt_sq(self) -> float:
        return self.gamma_opt**2


# -- assumptions -------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    required: bool
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck] = field(default_factory=list)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self, required_only: bool = True) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed and (c.required or not required_only)]

    def ok(self, overrides: frozenset[str] | set[str] = frozenset()) -> bool:
        return all(c.name in overrides for c in self.failures())


def required_assumptions(constraint: Constraint) -> set[str]:
    req = {"A1", "A2", "A3"}
    if constraint.kind == "zoh":
        req.add("A7")
    else:
        req |= {"A5", "A6"}
    return req


def invariant_zeros(A, B, C, D) -> np.ndarray:
    """Finite invariant zeros of ``[[A - sI, B], [C, D]]``.

    Tall pencils are squared by a fixed random left projection; every
    candidate is then confirmed against the original pencil.
    """
    n, m = B.shape
    p = C.shape[0]
    M = np.block([[A, B], [C, D]])
    N = np.zeros((n + p, n + m))
    N[:n, :n] = np.eye(n)
    if p > m:
        P = np.random.default_rng(12345).standard_normal((n + m, n + p))
        M2, N2 = P @ M, P @ N
    elif p == m:
        M2, N2 = M, N
    else:
        return np.array([], dtype=complex)
    w = sla.eigvals(M2, N2)
    w = w[np.isfinite(w)]
    if p == m:
        return w
    zeros = []
    for z in w:
        R = np.block([[A - z * np.eye(n), B], [C, D]])
        sv = np.linalg.svd(R, compute_uv=False)
        if sv[-1] <= 1e-8 * max(1.0, sv[0]):
            zeros.append(z)
    return np.array(zeros, dtype=complex)


def _check_a5(model: AgentModel, grid=np.logspace(-3, 3, 121)) -> AssumptionCheck:
    n, m = model.n, model.m
    if model.p < m:
        return AssumptionCheck("A5", False, True, f"Cz has {model.p} rows < m={m}; column rank impossible")
    for z in invariant_zeros(model.A, model.Bu, model.Cz, model.Dzu):
        if abs(z.real) <= 1e-8 * max(1.0, abs(z)):
            return AssumptionCheck("A5", False, True, f"invariant zero on the imaginary axis at {z:.6g}")
    for w in np.concatenate([[0.0], grid]):
        R = np.block([[model.A - 1j * w * np.eye(n), model.Bu], [model.Cz, model.Dzu]])
        sv = np.linalg.svd(R, compute_uv=False)
        if sv[-1] <= 1e-10 * max(1.0, sv[0]):
            return AssumptionCheck("A5", False, True, f"rank drop at omega={w:.6g}")
    return AssumptionCheck("A5", True, True)


def validate(model: AgentModel, mu, constraint: Constraint) -> AssumptionReport:
    """Check the standing assumptions; failures are reported, never raised."""
    req = required_assumptions(constraint)
    checks = []

    eig = np.linalg.eigvals(model.A)
    worst = eig[np.argmax(eig.real)]
    checks.append(AssumptionCheck(
        "A1", bool(worst.real < -matfun.STABILITY_MARGIN), "A1" in req,
        "" if worst.real < -matfun.STABILITY_MARGIN else f"A not Hurwitz, eigenvalue {worst:.6g}"))

    Bw = model.Bw
    if Bw.shape[0] != Bw.shape[1]:
        checks.append(AssumptionCheck("A2", False, "A2" in req, f"Bw is {Bw.shape[0]}x{Bw.shape[1]}, not square"))
    else:
        cond = np.linalg.cond(Bw)
        ok = bool(np.isfinite(cond) and cond < 1e12)
        checks.append(AssumptionCheck("A2", ok, "A2" in req, "" if ok else f"Bw singular (cond={cond:.3g})"))

    mu = np.asarray(mu, dtype=float).ravel()
    detail = []
    if abs(mu @ mu - 1) > 1e-12:
        detail.append(f"mu'mu = {mu @ mu:.15g} != 1")
    zero_idx = [i + 1 for i in np.flatnonzero(mu == 0)]
    if zero_idx:
        detail.append(f"zero weight at index {', '.join(map(str, zero_idx))}")
    checks.append(AssumptionCheck("A3", not detail, "A3" in req, "; ".join(detail)))

    checks.append(_with_required(_check_a5(model), "A5" in req))

    dev = np.linalg.norm(model.Dzu.T @ model.Dzu - np.eye(model.m))
    checks.append(AssumptionCheck("A6", bool(dev <= 1e-12), "A6" in req,
                                  "" if dev <= 1e-12 else f"||Dzu'Dzu - I|| = {dev:.3g}"))

    M = np.block([[model.A, model.Bu], [model.Cz, model.Dzu]])
    rank = np.linalg.matrix_rank(M)
    full = model.n + model.m
    checks.append(AssumptionCheck("A7", bool(rank == full), "A7" in req,
                                  "" if rank == full else f"rank {rank} < {full}"))
    return AssumptionReport(checks)


def _with_required(c: AssumptionCheck, required: bool) -> AssumptionCheck:
    return AssumptionCheck(c.name, c.passed, required, c.detail)


def normalize_feedthrough(model: AgentModel) -> tuple[AgentModel, np.ndarray]:
    """Rescale inputs so that ``Dzu'Dzu = I``.

    Returns the rescaled model and ``T`` such that the original input is
    ``u = T v`` for the new input ``v``.
    """
    R = model.Dzu.T @ model.Dzu
    w, V = np.linalg.eigh((R + R.T) / 2)
    if w.min() <= 1e-12 * max(1.0, w.max()):
        raise ValueError("Dzu'Dzu is singular; cannot normalize")
    T = V @ np.diag(w**-0.5) @ V.T
    return model.replace(Bu=model.Bu @ T, Dzu=model.Dzu @ T), T


# -- local solutions ---------------------------------------------------------

def gamma0(model: AgentModel) -> tuple[float, np.ndarray]:
    Xbar = matfun.lyap_continuous(model.A, model.Cz.T @ model.Cz)
    return float(np.sqrt(max(np.trace(model.Bw.T @ Xbar @ model.Bw), 0.0))), Xbar


def _tr(Bw, X) -> float:
    return float(np.trace(Bw.T @ X @ Bw))


def _sqrt(v: float) -> float:
    # roundoff can push tiny squared norms below zero
    return float(np.sqrt(max(v, 0.0)))


def _check_h(h):
    if h is None or not h > 0:
        raise ValueError(f"h must be positive, got {h}")


def solve_unconstrained(model: AgentModel) -> LocalSolution:
    g0, Xbar = gamma0(model)
    X, F = matfun.care(model.A, model.Bu, model.Cz, model.Dzu)
    g = _sqrt(_tr(model.Bw, X))
    return LocalSolution(Constraint.unconstrained(), g0, g, g, Xbar, X, StaticGain(F), Falpha=F)


def solve_delay(model: AgentModel, h: float) -> LocalSolution:
    _check_h(h)
    g0, Xbar = gamma0(model)
    X, F = matfun.care(model.A, model.Bu, model.Cz, model.Dzu)
    E = matfun.expm(model.A, h)
    Bw = model.Bw
    ga2 = _tr(Bw, Xbar) - _tr(E @ Bw, Xbar - X)
    ctrl = DelayDtc(F, E, PiRealization(model.A, model.Bu, E @ model.Bu, float(h)))
    return LocalSolution(Constraint.delay(h), g0, _sqrt(ga2), _sqrt(_tr(Bw, X)), Xbar, X, ctrl, Falpha=F)


def solve_sampled_zoh(model: AgentModel, h: float) -> LocalSolution:
    _check_h(h)
    g0, Xbar = gamma0(model)
    Ahat, Bhat = matfun.discretize_pair(model.A, model.Bu, h)
    Q, S, R = matfun.sampled_cost_gram(model.A, model.Bu, model.Cz, model.Dzu, h)
    Xh, Fh = matfun.dare(Ahat, Bhat, Q, S, R)
    G = matfun.gramian_integral(model.A, Xbar - Xh, h)
    ga2 = _tr(model.Bw, Xbar) - _tr(model.Bw, G) / h
    # the unconstrained optimum is still needed for cost-of-coordination
    try:
        cmodel = model if np.allclose(model.Dzu.T @ model.Dzu, np.eye(model.m), atol=1e-12) \
            else normalize_feedthrough(model)[0]
        X, F = matfun.care(cmodel.A, cmodel.Bu, cmodel.Cz, cmodel.Dzu)
        gopt = _sqrt(_tr(model.Bw, X))
    except ValueError:
        X, F, gopt = None, None, float("nan")
    return LocalSolution(Constraint.zoh(h), g0, _sqrt(ga2), gopt, Xbar, X, SampledStatic(Fh, float(h)),
                         Falpha=F, XalphaHat=Xh, FalphaHat=Fh)


def solve_sampled_opthold(model: AgentModel, h: float) -> LocalSolution:
    _check_h(h)
    g0, Xbar = gamma0(model)
    X, F = matfun.care(model.A, model.Bu, model.Cz, model.Dzu)
    G = matfun.gramian_integral(model.A, Xbar - X, h)
    ga2 = _tr(model.Bw, Xbar) - _tr(model.Bw, G) / h
    ctrl = SampledWaveformHold(F, model.A + model.Bu @ F, float(h))
    return LocalSolution(Constraint.opthold(h), g0, _sqrt(ga2), _sqrt(_tr(model.Bw, X)), Xbar, X, ctrl, Falpha=F)


def solve_local(model: AgentModel, constraint: Constraint) -> LocalSolution:
    if constraint.kind == "none":
        return solve_unconstrained(model)
    if constraint.kind == "delay":
        return solve_delay(model, constraint.h)
    if constraint.kind == "zoh":
        return solve_sampled_zoh(model, constraint.h)
    return solve_sampled_opthold(model, constraint.h)


def predictor(model: AgentModel, x_delayed, u_history, h: float) -> np.ndarray:
    """Predict ``x(t)`` from ``x(t-h)`` and inputs sampled uniformly on ``[t-h, t]``.

    ``u_history`` has shape ``(N+1, m)``, row ``k`` holding ``u(t - h + k h/N)``.
    The input integral uses the composite trapezoid rule (second order).
    """
    x_delayed = np.asarray(x_delayed, dtype=float).ravel()
    if h == 0:
        return x_delayed.copy()
    if h < 0:
        raise ValueError("h must be nonnegative")
    U = np.atleast_2d(np.asarray(u_history, dtype=float))
    if U.shape[1] != model.m and U.shape[0] == model.m:
        U = U.T
    N = U.shape[0] - 1
    if N < 1:
        raise ValueError("input history must cover [t-h, t] with at least two samples")
    dt = h / N
    step = matfun.expm(model.A, dt)
    # e^{A(t-theta_k)}, theta_k = t - h + k dt, built backwards from theta_N = t
    acc = np.zeros(model.n)
    Phi = np.eye(model.n)
    for k in range(N, -1, -1):
        w = 0.5 if k in (0, N) else 1.0
        acc += w * Phi @ (model.Bu @ U[k])
        Phi = step @ Phi
    return matfun.expm(model.A, h) @ x_delayed + dt * acc
