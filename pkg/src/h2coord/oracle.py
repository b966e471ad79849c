"""Brute-force cross-checks that avoid the synthesis code path.

Lyapunov equations here are solved by Kronecker vectorization and the delay
loop H2 norm by frequency-domain quadrature, so agreement with the closed
forms is an independent confirmation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

from .coordination import CoordinationProblem
from .local_synthesis import DelayDtc, LocalSolution

MAX_NU = 8


def _lyap_kron(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    I = np.eye(n)
    L = np.kron(I, A.T) + np.kron(A.T, I)
    x = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return (X + X.T) / 2


def _h2sq(A, B, C) -> float:
    if np.linalg.eigvals(A).real.max() >= 0:
        raise ValueError("expanded closed loop is not stable")
    X = _lyap_kron(A, C.T @ C)
    return float(np.trace(B.T @ X @ B))


def _riccati_gain(model) -> np.ndarray:
    # Hamiltonian stable subspace; independent of the matfun solver
    A, B, C, D = model.A, model.Bu, model.Cz, model.Dzu
    n = A.shape[0]
    At = A - B @ D.T @ C
    Qt = C.T @ (np.eye(C.shape[0]) - D @ D.T) @ C
    Ham = np.block([[At, -B @ B.T], [-Qt, -At.T]])
    T, Z, sdim = sla.schur(Ham, output="real", sort="lhp")
    if sdim != n:
        raise ValueError("Hamiltonian has eigenvalues on the imaginary axis")
    X = Z[n:, :n] @ np.linalg.inv(Z[:n, :n])
    X = (X + X.T) / 2
    return -(B.T @ X + D.T @ C)


@dataclass(frozen=True)
class ExpandedLoop:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    nu: int
    n: int
    r: int
    p: int

    def block(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Realization of the map from ``w_j`` to ``z_i``."""
        return self.A, self.B[:, j * self.r:(j + 1) * self.r], self.C[i * self.p:(i + 1) * self.p]


def expanded_loop(problem: CoordinationProblem, F: np.ndarray | None = None, K: np.ndarray | None = None) -> ExpandedLoop:
    """Aggregate delay-free closed loop under ``K = (I - mu mu') kron F`` (or a given expanded ``K``)."""
    if problem.constraint.kind != "none":
        raise ValueError("brute-force expansion is only defined for the unconstrained class")
    nu = problem.nu
    if nu > MAX_NU:
        raise ValueError(f"nu={nu} too large for dense expansion (max {MAX_NU})")
    md = problem.model
    if K is None:
        F = _riccati_gain(md) if F is None else F
        K = np.kron(np.eye(nu) - np.outer(problem.mu, problem.mu), F)
    I = np.eye(nu)
    A = np.kron(I, md.A) + np.kron(I, md.Bu) @ K
    B = np.kron(I, md.Bw)
    C = np.kron(I, md.Cz) + np.kron(I, md.Dzu) @ K
    return ExpandedLoop(A, B, C, nu, md.n, md.r, md.p)


def brute_force_total_h2(problem: CoordinationProblem) -> float:
    """Squared H2 norm of the expanded aggregate loop."""
    L = expanded_loop(problem)
    return _h2sq(L.A, L.B, L.C)


def brute_force_pairwise_h2(problem: CoordinationProblem, i: int | None = None, j: int | None = None):
    """Squared H2 norm of ``w_j -> z_i``; the whole matrix when ``i`` and ``j`` are omitted."""
    L = expanded_loop(problem)
    # one Lyapunov solve per output block serves every input block
    out = np.zeros((L.nu, L.nu))
    rows = range(L.nu) if i is None else [i]
    for a in rows:
        _, _, Ci = L.block(a, 0)
        X = _lyap_kron(L.A, Ci.T @ Ci)
        for b in range(L.nu):
            Bj = L.B[:, b * L.r:(b + 1) * L.r]
            out[a, b] = np.trace(Bj.T @ X @ Bj)
    if i is None:
        return out
    return float(out[i, j if j is not None else i]) if j is not None else out[i]


def householder_u(mu) -> np.ndarray:
    """Orthogonal ``U`` with ``U mu = e1`` (reflector, sign chosen against cancellation)."""
    mu = np.asarray(mu, dtype=float).ravel()
    nu = mu.size
    e1 = np.zeros(nu)
    e1[0] = 1.0
    sgn = 1.0 if mu[0] >= 0 else -1.0
    v = mu + sgn * e1
    U = np.eye(nu) - 2 * np.outer(v, v) / (v @ v)
    # reflector maps mu to -sgn e1
    return -sgn * U


@dataclass(frozen=True)
class DecouplingReport:
    passed: bool
    orthogonality_err: float
    mapping_err: float
    structure_err: float
    first_row_norm: float


def decoupling_check(problem: CoordinationProblem, K: np.ndarray | None = None, tol: float = 1e-11) -> DecouplingReport:
    """Transform the expanded controller by ``U`` and compare with ``(I - e1 e1') kron F``."""
    md = problem.model
    nu, n, m = problem.nu, md.n, md.m
    if problem.constraint.kind != "none":
        raise ValueError("decoupling check needs the delay-free class")
    F = _riccati_gain(md)
    if K is None:
        K = np.kron(np.eye(nu) - np.outer(problem.mu, problem.mu), F)
    U = householder_u(problem.mu)
    e1 = np.eye(nu)[0]
    Kt = np.kron(U, np.eye(m)) @ K @ np.kron(U.T, np.eye(n))
    target = np.kron(np.eye(nu) - np.outer(e1, e1), F)
    scale = max(1.0, np.linalg.norm(F))
    orth = np.linalg.norm(U.T @ U - np.eye(nu))
    mapping = np.linalg.norm(U @ problem.mu - e1)
    struct = np.linalg.norm(Kt - target) / scale
    first = np.linalg.norm(Kt[:m]) / scale
    ok = orth <= 1e-13 and mapping <= 1e-13 and struct <= tol and first <= tol
    return DecouplingReport(bool(ok), float(orth), float(mapping), float(struct), float(first))


# -- frequency-domain delay oracle -------------------------------------------

def pi_quadrature(A, Bu, h: float, omega: float) -> np.ndarray:
    """``int_0^h e^{-(j omega I - A) theta} d theta Bu`` by adaptive quadrature."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    lam, V = np.linalg.eig(A)
    Vi = np.linalg.inv(V)
    # integrand via time-stepping independent of the closed form; eigen-decomposition only for speed
    if np.linalg.cond(V) > 1e8:
        f = lambda th: sla.expm((A - 1j * omega * np.eye(n)) * th) @ Bu  # noqa: E731
    else:
        VB = Vi @ Bu
        f = lambda th: (V * np.exp((lam - 1j * omega) * th)) @ VB  # noqa: E731
    val, _ = quad_vec(f, 0.0, h, epsabs=1e-14, epsrel=1e-13, limit=2000)
    return val


def _loop_freq(model, ctrl: DelayDtc, omegas: np.ndarray) -> np.ndarray:
    """``||T(j omega)||_F^2`` of the single-agent delay loop."""
    A, Bw, Bu, C, D = model.A, model.Bw, model.Bu, model.Cz, model.Dzu
    n, m = model.n, model.m
    F, E = ctrl.F, ctrl.expAh
    EB = E @ Bu
    s = 1j * np.asarray(omegas, dtype=float)[:, None, None]
    R = np.linalg.inv(s * np.eye(n) - A)
    G11, G21, G22 = C @ R @ Bw, R @ Bw, R @ Bu
    G12 = C @ R @ Bu + D
    delay = np.exp(-s * ctrl.h)
    Pi = R @ (Bu - EB * delay)
    K = np.linalg.solve(np.eye(m) - F @ Pi, np.broadcast_to(F @ E, Pi.shape[:1] + (m, n))) * delay
    T = G11 + G12 @ K @ np.linalg.solve(np.eye(n) - G22 @ K, G21)
    return np.sum(np.abs(T) ** 2, axis=(1, 2))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X2, _GL_W2 = np.polynomial.legendre.leggauss(12)


def _panel(f, a, b):
    mid, half = (a + b) / 2, (b - a) / 2
    fine = half * _GL_W @ f(mid + half * _GL_X)
    coarse = half * _GL_W2 @ f(mid + half * _GL_X2)
    return fine, abs(fine - coarse)


def _adaptive(f, a, b, tol, depth=0):
    val, err = _panel(f, a, b)
    if err <= tol or depth > 30:
        return val
    c = (a + b) / 2
    return _adaptive(f, a, c, tol / 2, depth + 1) + _adaptive(f, c, b, tol / 2, depth + 1)


def freq_domain_h2_delay(problem: CoordinationProblem, local: LocalSolution, omega_max: float = 1e4,
                         tol: float = 1e-10) -> tuple[float, float]:
    """Delay-class H2 norms by frequency-domain quadrature.

    Returns ``(total, single)`` where ``single`` is the squared single-agent
    loop norm and ``total = sqrt((nu - 1) single + gamma0^2)``.  Panels are
    one delay period wide with Gauss-Legendre 12/24 error control; the
    ``1/omega^2`` tail beyond ``omega_max`` is fitted on the last decade.
    """
    ctrl = local.controller
    if not isinstance(ctrl, DelayDtc):
        raise ValueError("freq_domain_h2_delay needs the delay class")
    model = problem.model
    f = lambda w: _loop_freq(model, ctrl, np.atleast_1d(w))  # noqa: E731
    width = min(np.pi / ctrl.h, 1.0)
    edges = np.concatenate([np.linspace(0, 10, int(np.ceil(10 / width)) + 1),
                            np.arange(10 + np.pi / ctrl.h, omega_max, np.pi / ctrl.h), [omega_max]])
    edges = np.unique(edges)
    integral = sum(_adaptive(f, a, b, tol) for a, b in zip(edges[:-1], edges[1:]))
    # tail ~ c/omega^2; c estimated as the mean of omega^2 |T|^2 over the last decade
    wd = np.linspace(omega_max / 10, omega_max, 4001)
    c = float(np.mean(wd**2 * f(wd)))
    tail = c / omega_max
    if tail > 1e-2 * integral:
        raise ValueError("tail estimate exceeds budget; increase omega_max")
    single = (integral + tail) / np.pi
    return float(np.sqrt((problem.nu - 1) * single + local.gamma0_sq)), float(single)


def distributed_delay_response(A, Bu, h: float, u, t: float) -> np.ndarray:
    """``int_0^h e^{A theta} Bu u(t - theta) d theta`` for a callable input ``u`` (zero for negative time)."""
    A = np.asarray(A, dtype=float)
    lo = max(0.0, t - h)
    if t <= 0:
        return np.zeros(A.shape[0])
    g = lambda s: sla.expm(A * (t - s)) @ Bu @ np.atleast_1d(u(s))  # noqa: E731
    val, _ = quad_vec(g, lo, t, epsabs=1e-14, epsrel=1e-12, limit=500)
    return val
