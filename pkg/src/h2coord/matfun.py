"""Dense matrix functions: exponentials, Van Loan integrals, Lyapunov/Riccati solvers, H2 norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

STABILITY_MARGIN = 1e-8


class NotStableError(ValueError):
    """A matrix expected to be Hurwitz (or Schur) is not."""

    def __init__(self, msg: str, eigenvalue: complex):
        super().__init__(msg)
        self.eigenvalue = eigenvalue


class RiccatiError(ValueError):
    pass


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _square(M: np.ndarray, name: str) -> None:
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")


def check_hurwitz(A: np.ndarray, margin: float = STABILITY_MARGIN, name: str = "A") -> None:
    eig = np.linalg.eigvals(A)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= -margin:
        raise NotStableError(f"{name} is not Hurwitz: eigenvalue {worst:.6g}", worst)


def check_schur(A: np.ndarray, margin: float = STABILITY_MARGIN, name: str = "A") -> None:
    eig = np.linalg.eigvals(A)
    worst = eig[np.argmax(np.abs(eig))]
    if abs(worst) >= 1.0 - margin:
        raise NotStableError(f"{name} is not Schur stable: eigenvalue {worst:.6g}", worst)


def expm(M, t: float = 1.0) -> np.ndarray:
    """Return ``exp(M t)`` (scaling and squaring with Pade approximant)."""
    M = as_matrix(M, "M")
    _square(M, "M")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return sla.expm(M * t)


def discretize_pair(A, B, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization ``(e^{Ah}, int_0^h e^{At} dt B)`` from one exponential."""
    if h <= 0:
        raise ValueError(f"sampling period must be positive, got {h}")
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    _square(A, "A")
    n, m = B.shape
    if n != A.shape[0]:
        raise ValueError("A and B row counts differ")
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = sla.expm(M * h)
    return E[:n, :n], E[:n, n:]


def gramian_integral(A, M, h: float) -> np.ndarray:
    """Exact ``int_0^h e^{A't} M e^{At} dt`` via a 2n x 2n block exponential."""
    A, M = as_matrix(A, "A"), as_matrix(M, "M")
    _square(A, "A")
    if h < 0:
        raise ValueError("h must be nonnegative")
    n = A.shape[0]
    if M.shape != (n, n):
        raise ValueError("M must match A")
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = -A.T
    H[:n, n:] = M
    H[n:, n:] = A
    E = sla.expm(H * h)
    G = E[n:, n:].T @ E[:n, n:]
    return (G + G.T) / 2


def sampled_cost_gram(A, Bu, Cz, Dzu, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intersample cost blocks ``(Qhat, Shat, Rhat)`` of the zero-order-hold problem.

    The integral of ``Phi(t)' [Cz Dzu]' [Cz Dzu] Phi(t)`` over ``[0, h]`` with
    ``Phi(t) = exp([[A, Bu], [0, 0]] t)`` is evaluated exactly with Van Loan's
    block exponential.
    """
    if h <= 0:
        raise ValueError(f"sampling period must be positive, got {h}")
    A, Bu, Cz, Dzu = (as_matrix(M, k) for M, k in ((A, "A"), (Bu, "Bu"), (Cz, "Cz"), (Dzu, "Dzu")))
    n, m = Bu.shape
    if A.shape != (n, n) or Cz.shape[1] != n or Dzu.shape != (Cz.shape[0], m):
        raise ValueError("inconsistent dimensions in (A, Bu, Cz, Dzu)")
    Aa = np.zeros((n + m, n + m))
    Aa[:n, :n] = A
    Aa[:n, n:] = Bu
    CD = np.hstack([Cz, Dzu])
    G = gramian_integral(Aa, CD.T @ CD, h)
    return G[:n, :n], G[:n, n:], G[n:, n:]


def lyap_continuous(A, Q) -> np.ndarray:
    """Solve ``A'X + XA + Q = 0`` for Hurwitz ``A``."""
    A, Q = as_matrix(A, "A"), as_matrix(Q, "Q")
    _square(A, "A")
    if Q.shape != A.shape:
        raise ValueError("Q must match A")
    check_hurwitz(A)
    X = sla.solve_continuous_lyapunov(A.T, -Q)
    X = (X + X.T) / 2
    res = np.linalg.norm(A.T @ X + X @ A + Q)
    scale = np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(Q)
    if res > 1e-10 * max(scale, 1e-300):
        raise ValueError(f"Lyapunov residual {res:.3g} too large")
    return X


def care(A, Bu, Cz, Dzu) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of the LQ Riccati equation with cross term, assuming ``Dzu'Dzu = I``.

    Returns ``(X, F)`` with ``F = -(Bu'X + Dzu'Cz)``.
    """
    A, Bu, Cz, Dzu = (as_matrix(M, k) for M, k in ((A, "A"), (Bu, "Bu"), (Cz, "Cz"), (Dzu, "Dzu")))
    n, m = Bu.shape
    if not np.allclose(Dzu.T @ Dzu, np.eye(m), atol=1e-12):
        raise RiccatiError("care requires Dzu'Dzu = I; normalize the feedthrough first")
    # cross term removed: u = v - Dzu'Cz x
    At = A - Bu @ Dzu.T @ Cz
    Qt = Cz.T @ (np.eye(Cz.shape[0]) - Dzu @ Dzu.T) @ Cz
    Qt = (Qt + Qt.T) / 2
    try:
        X = sla.solve_continuous_are(At, Bu, Qt, np.eye(m))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"no stabilizing solution: {exc}") from exc
    X = (X + X.T) / 2
    L = X @ Bu + Cz.T @ Dzu
    res = np.linalg.norm(A.T @ X + X @ A + Cz.T @ Cz - L @ L.T)
    scale = 1.0 + np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(Cz) ** 2
    if res > 1e-9 * scale:
        raise RiccatiError(f"CARE residual {res:.3g} too large")
    F = -L.T
    check_hurwitz(A + Bu @ F, name="A + Bu F")
    return X, F


def dare(Ahat, Buhat, Qhat, Shat, Rhat) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of the discrete Riccati equation with cross term ``Shat``.

    Returns ``(X, F)`` with ``F = -(B'XB + R)^{-1}(B'XA + S')``.
    """
    A, B, Q, S, R = (as_matrix(M, k) for M, k in
                     ((Ahat, "Ahat"), (Buhat, "Buhat"), (Qhat, "Qhat"), (Shat, "Shat"), (Rhat, "Rhat")))
    m = B.shape[1]
    if R.shape != (m, m) or np.linalg.eigvalsh((R + R.T) / 2).min() <= 1e-14 * max(1.0, np.linalg.norm(R)):
        raise RiccatiError("Rhat must be positive definite")
    try:
        X = sla.solve_discrete_are(A, B, Q, R, s=S)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"no stabilizing solution: {exc}") from exc
    X = (X + X.T) / 2
    G = B.T @ X @ B + R
    L = A.T @ X @ B + S
    res = np.linalg.norm(A.T @ X @ A - X + Q - L @ np.linalg.solve(G, L.T))
    scale = 1.0 + np.linalg.norm(A) ** 2 * np.linalg.norm(X) + np.linalg.norm(Q)
    if res > 1e-9 * scale:
        raise RiccatiError(f"DARE residual {res:.3g} too large")
    F = -np.linalg.solve(G, L.T)
    check_schur(A + B @ F, name="Ahat + Buhat Fhat")
    return X, F


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A, B, C = as_matrix(self.A, "A"), as_matrix(self.B, "B"), as_matrix(self.C, "C")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else as_matrix(self.D, "D")
        _square(A, "A")
        n = A.shape[0]
        if B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("inconsistent (A, B, C, D) dimensions")
        for k, v in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, k, v)


def h2_norm_exact(sys: LtiSystem) -> float:
    """H2 norm ``sqrt(tr(B'XB))`` with ``X`` the observability Gramian."""
    if np.any(sys.D != 0):
        raise ValueError("H2 norm is unbounded for nonzero feedthrough")
    X = lyap_continuous(sys.A, sys.C.T @ sys.C)
    return float(np.sqrt(max(np.trace(sys.B.T @ X @ sys.B), 0.0)))
