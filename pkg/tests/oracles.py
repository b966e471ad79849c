"""Independent reference computations used only by the tests."""

import mpmath as mp
import numpy as np

# Golden values: scalar agent S1 at h = 0.5, zero-order hold, computed
# by zoh_scalar_golden() below at 50 digits and frozen here.
S1_ZOH_XHAT_H05 = 0.41665680351579589051
S1_ZOH_GAMMA_SQ_H05 = 0.44731705206384661474


def zoh_scalar_golden(h="0.5", dps=50):
    """Closed-form scalar blocks and the stabilizing root of the scalar DARE in high precision."""
    with mp.workdps(dps):
        h = mp.mpf(h)
        E, E2 = mp.e ** (-h), mp.e ** (-2 * h)
        a, b = E, 1 - E
        q = (1 - E2) / 2
        s = (1 - E) - (1 - E2) / 2
        r = 2 * h - 2 * (1 - E) + (1 - E2) / 2
        c2 = b * b
        c1 = (1 - a * a) * r - q * b * b + 2 * a * b * s
        c0 = -q * r + s * s
        disc = mp.sqrt(c1 * c1 - 4 * c2 * c0)
        for X in ((-c1 + disc) / (2 * c2), (-c1 - disc) / (2 * c2)):
            F = -(a * b * X + s) / (b * b * X + r)
            if abs(a + b * F) < 1:
                g2 = mp.mpf(1) / 2 - (mp.mpf(1) / 2 - X) * (1 - E2) / (2 * h)
                return {"Q": q, "S": s, "R": r, "X": X, "F": F, "gamma_sq": g2}
    raise RuntimeError("no stabilizing root")


def dare_fixed_point(A, B, Q, S, R, iters=20000, tol=1e-15):
    """Riccati difference iteration from X = 0."""
    X = np.zeros_like(Q)
    for _ in range(iters):
        G = B.T @ X @ B + R
        L = A.T @ X @ B + S
        Xn = A.T @ X @ A + Q - L @ np.linalg.solve(G, L.T)
        if np.max(np.abs(Xn - X)) < tol:
            return Xn
        X = Xn
    return X


def simpson_gram(A, Bu, Cz, Dzu, h, panels=10_000):
    """Composite Simpson for the intersample cost integral; one-step transition from a Taylor series."""
    n, m = Bu.shape
    Aa = np.zeros((n + m, n + m))
    Aa[:n, :n], Aa[:n, n:] = A, Bu
    CD = np.hstack([Cz, Dzu])
    w = np.ones(panels + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    step = _expm_series(Aa * (h / panels))
    Phi = np.eye(n + m)
    acc = np.zeros((n + m, n + m))
    for k in range(panels + 1):
        acc += w[k] * Phi.T @ CD.T @ CD @ Phi
        Phi = Phi @ step
    G = acc * (h / panels) / 3
    return G[:n, :n], G[:n, n:], G[n:, n:]


def _expm_series(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def impulse_energy(A, B, C, T=60.0, dt=1e-3):
    """Sum over input channels of the output energy, via exact discrete propagation and Simpson."""
    N = int(round(T / dt))
    N += N % 2
    step = _expm_series(A * dt)
    X = B.copy()
    vals = np.empty(N + 1)
    for k in range(N + 1):
        Y = C @ X
        vals[k] = np.sum(Y * Y)
        X = step @ X
    w = np.ones(N + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    return float(w @ vals * dt / 3)
