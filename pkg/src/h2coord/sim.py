"""Fixed-step RK4 simulation of the coordinated closed loop.

Delay taps and sampling instants fall on the step grid (``dt`` must divide
``h``).  Delayed signals inside an RK4 step are taken from the stage values
recorded exactly one delay earlier, which is RK4 applied to the method-of-steps
stacked system and keeps fourth-order accuracy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import matfun
from .coordination import AggregateController, CoordinationProblem
from .local_synthesis import DelayDtc, SampledStatic, SampledWaveformHold, StaticGain

_C = (0.0, 0.5, 0.5, 1.0)
_HALF_INDEX = (0, 1, 1, 2)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if _ratio(self.T, self.dt) is None:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def steps(self) -> int:
        return _ratio(self.T, self.dt)

    def steps_per(self, h: float) -> int:
        k = _ratio(h, self.dt)
        if k is None:
            raise ValueError(f"dt={self.dt} does not divide h={h}")
        return k


def _ratio(a: float, b: float) -> int | None:
    q = a / b
    k = int(round(q))
    return k if k >= 1 and abs(q - k) <= 1e-9 * max(1.0, q) else None


@dataclass(frozen=True)
class ImpulseChannel:
    """Unit impulse in ``w[agent][channel]``, realized as a state kick ``Bw e_channel``."""

    agent: int
    channel: int
    time: float = 0.0


@dataclass(frozen=True)
class WhiteNoise:
    """Piecewise-constant Gaussian noise per step with spectral intensity ``intensity``."""

    seed: int = 0
    intensity: float = 1.0


@dataclass(frozen=True)
class Waveform:
    """Tabulated disturbance, ``w`` of shape ``(len(t), nu, r)``, linearly interpolated."""

    t: np.ndarray
    w: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        w = np.asarray(self.w, dtype=float)
        flat = w.reshape(len(self.t), -1)
        out = np.array([np.interp(t, self.t, flat[:, j], left=0.0, right=0.0) for j in range(flat.shape[1])])
        return out.reshape(w.shape[1:])


Disturbance = Union[ImpulseChannel, WhiteNoise, Waveform, Callable[[float], np.ndarray], None]


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    ubar: np.ndarray
    xbar: np.ndarray
    energy: np.ndarray
    w: np.ndarray | None = None
    xhat: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        nu, n = self.x.shape[1:]
        m, p = self.u.shape[2], self.z.shape[2]
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "agent"] + [f"x{k+1}" for k in range(n)] + [f"u{k+1}" for k in range(m)]
                    + [f"z{k+1}" for k in range(p)] + [f"ubar{k+1}" for k in range(m)])
        g = "{:.17g}".format
        for k, t in enumerate(self.t):
            ub = [g(v) for v in self.ubar[k]]
            for i in range(nu):
                wr.writerow([g(t), i + 1] + [g(v) for v in self.x[k, i]] + [g(v) for v in self.u[k, i]]
                            + [g(v) for v in self.z[k, i]] + ub)
        return buf.getvalue()


class _Engine:
    """Batched RK4 integrator; state arrays carry a leading batch axis."""

    def __init__(self, problem: CoordinationProblem, controller: AggregateController, dt: float,
                 x0: np.ndarray, wfun=None, first_sample=None, kicks=None):
        self.model = model = problem.model
        self.mu_plant = problem.mu
        self.ctrl = controller
        self.local = controller.local.controller
        self.dt = dt
        self.x = np.array(x0, dtype=float)
        self.B, self.nu, self.n = self.x.shape
        self.m, self.p = model.m, model.p
        self.energy = np.zeros((self.B, self.nu))
        self.wfun = wfun
        self.kicks = kicks or {}
        self.k = 0
        self.A, self.Bw, self.Bu, self.Cz, self.Dzu = model.A, model.Bw, model.Bu, model.Cz, model.Dzu

        c = self.local
        if isinstance(c, DelayDtc):
            self.kind = "delay"
            self.H = _ratio(c.h, dt)
            if self.H is None:
                raise ValueError(f"dt={dt} does not divide h={c.h}")
            self.chi = np.zeros_like(self.x)
            self.xbuf = np.zeros((self.H, 4) + self.x.shape)
            self.ubuf = np.zeros((self.H, 4, self.B, self.nu, self.m))
        elif isinstance(c, (SampledStatic, SampledWaveformHold)):
            self.kind = "zoh" if isinstance(c, SampledStatic) else "opthold"
            self.H = _ratio(c.h, dt)
            if self.H is None:
                raise ValueError(f"dt={dt} does not divide h={c.h}")
            fs = np.zeros(self.B, dtype=int) if first_sample is None else np.asarray(first_sample, dtype=int)
            self.first = np.broadcast_to(fs, (self.B,)).copy()
            self.dheld = np.zeros_like(self.x)
            self.uheld = np.zeros((self.B, self.nu, self.m))
            self.klast = self.first - self.H
            if self.kind == "opthold":
                E = matfun.expm(c.Acl, dt / 2)
                Es = [np.eye(self.n)]
                for _ in range(2 * self.H):
                    Es.append(E @ Es[-1])
                self.FE = np.einsum("mn,jnk->jmk", c.F, np.array(Es))
        elif isinstance(c, StaticGain):
            self.kind = "none"
        else:
            raise TypeError(f"unsupported controller {type(c).__name__}")

    # -- control law ------------------------------------------------------
    def _sample(self):
        if self.kind not in ("zoh", "opthold"):
            return
        due = (self.k >= self.first) & ((self.k - self.first) % self.H == 0)
        if not np.any(due):
            return
        d = self.ctrl.deviations(self.x[due])
        self.dheld[due] = d
        self.klast[due] = self.k
        if self.kind == "zoh":
            self.uheld[due] = np.einsum("mn,bin->bim", self.local.Fhat, d)

    def _delayed(self, s):
        j = self.k - self.H
        if j < 0:
            return np.zeros_like(self.x), np.zeros((self.B, self.nu, self.m))
        slot = j % self.H
        return self.xbuf[slot, s], self.ubuf[slot, s]

    def _control(self, s, x, chi):
        c = self.local
        if self.kind == "none":
            return np.einsum("mn,bin->bim", c.F, self.ctrl.deviations(x))
        if self.kind == "delay":
            xd, _ = self._delayed(s)
            pred = np.einsum("kn,bin->bik", c.expAh, self.ctrl.deviations(xd)) + chi
            return np.einsum("mn,bin->bim", c.F, pred)
        if self.kind == "zoh":
            return self.uheld
        j = 2 * (self.k - self.klast) + _HALF_INDEX[s]
        return np.einsum("bmn,bin->bim", self.FE[j], self.dheld)

    def _w(self, t):
        if self.wfun is None:
            return None
        return np.broadcast_to(self.wfun(t), (self.B, self.nu, self.Bw.shape[1]))

    def _deriv(self, s, t, x, chi):
        u = self._control(s, x, chi)
        dx = x @ self.A.T + u @ self.Bu.T
        w = self._w(t)
        if w is not None:
            dx = dx + w @ self.Bw.T
        z = x @ self.Cz.T + u @ self.Dzu.T
        de = np.einsum("bip,bip->bi", z, z)
        dchi = None
        if self.kind == "delay":
            _, ud = self._delayed(s)
            dchi = chi @ self.A.T + u @ self.Bu.T - ud @ self.local.Pi.expAhBu.T
        return dx, dchi, de, u

    # -- stepping ---------------------------------------------------------
    def _apply_kicks(self):
        kick = self.kicks.get(self.k)
        if kick is not None:
            self.x = self.x + kick

    def prepare(self):
        """Apply kicks and sampling due at the current grid point."""
        self._apply_kicks()
        self._sample()

    def outputs(self):
        """Signals at the current grid point (right limits)."""
        chi = self.chi if self.kind == "delay" else None
        u = self._control(0, self.x, chi)
        z = self.x @ self.Cz.T + u @ self.Dzu.T
        xhat = None
        if self.kind == "delay":
            xd, _ = self._delayed(0)
            xhat = np.einsum("kn,bin->bik", self.local.expAh, xd) + self.chi
        return u, z, xhat

    def step(self):
        dt, t0 = self.dt, self.k * self.dt
        x, chi, E = self.x, getattr(self, "chi", None), self.energy
        ks = []
        Y = (x, chi)
        for s in range(4):
            if s > 0:
                a = dt * _C[s]
                kx, kc, _ = ks[-1]
                Y = (x + a * kx, None if chi is None else chi + a * kc)
            dx, dchi, de, u = self._deriv(s, t0 + _C[s] * dt, *Y)
            if self.kind == "delay":
                slot = self.k % self.H
                self.xbuf[slot, s] = Y[0]
                self.ubuf[slot, s] = u
            ks.append((dx, dchi, de))
        wts = (1, 2, 2, 1)
        self.x = x + dt / 6 * sum(w * k[0] for w, k in zip(wts, ks))
        if chi is not None:
            self.chi = chi + dt / 6 * sum(w * k[1] for w, k in zip(wts, ks))
        self.energy = E + dt / 6 * sum(w * k[2] for w, k in zip(wts, ks))
        self.k += 1


def _kick_state(problem, dist: ImpulseChannel, B=1):
    model = problem.model
    if not 0 <= dist.agent < problem.nu or not 0 <= dist.channel < model.r:
        raise IndexError("impulse agent/channel out of range")
    x = np.zeros((B, problem.nu, model.n))
    x[:, dist.agent, :] = model.Bw[:, dist.channel]
    return x


def _check_class(problem, controller):
    if controller.local.constraint != problem.constraint:
        raise ValueError("controller class does not match the problem constraint")
    if controller.mu.size != problem.nu:
        raise ValueError("controller weight vector length differs from nu")


def simulate(problem: CoordinationProblem, controller: AggregateController, config: SimConfig,
             disturbance: Disturbance = None, x0=None) -> Trajectory:
    """Simulate the closed loop on ``[0, T]`` and record signals on the step grid."""
    _check_class(problem, controller)
    model = problem.model
    N = config.steps
    dt = config.dt
    xinit = np.zeros((1, problem.nu, model.n)) if x0 is None else np.asarray(x0, dtype=float)[None].copy()
    kicks, wfun, noise = {}, None, None
    if isinstance(disturbance, ImpulseChannel):
        k0 = _ratio(disturbance.time, dt) if disturbance.time > 0 else 0
        if k0 is None or k0 > N:
            raise ValueError("impulse time must be a grid point within the horizon")
        kicks[k0] = _kick_state(problem, disturbance)
    elif isinstance(disturbance, WhiteNoise):
        rng = np.random.default_rng(disturbance.seed)
        noise = rng.standard_normal((N, problem.nu, model.r)) * np.sqrt(disturbance.intensity / dt)
        wfun = lambda t: noise[min(int(np.floor(t / dt + 1e-9)), N - 1)]  # noqa: E731
    elif disturbance is not None:
        wfun = disturbance
    eng = _Engine(problem, controller, dt, xinit, wfun=wfun, kicks=kicks)

    t = np.arange(N + 1) * dt
    X = np.zeros((N + 1, problem.nu, model.n))
    U = np.zeros((N + 1, problem.nu, model.m))
    Z = np.zeros((N + 1, problem.nu, model.p))
    XH = np.zeros_like(X) if eng.kind == "delay" else None
    W = np.zeros((N + 1, problem.nu, model.r)) if wfun is not None else None
    for k in range(N + 1):
        eng.prepare()
        u, z, xhat = eng.outputs()
        X[k], U[k], Z[k] = eng.x[0], u[0], z[0]
        if XH is not None:
            XH[k] = xhat[0]
        if W is not None:
            W[k] = wfun(min(k * dt, (N - 1) * dt) if noise is not None else k * dt)
        if k < N:
            eng.step()
    mu = problem.mu
    return Trajectory(t=t, x=X, u=U, z=Z, ubar=np.einsum("i,kim->km", mu, U),
                      xbar=np.einsum("i,kin->kn", mu, X), energy=eng.energy[0], w=W, xhat=XH,
                      meta={"kind": eng.kind, "dt": dt})


def constraint_residual(traj: Trajectory) -> float:
    """``max_t |ubar|_inf`` normalized by ``max_t max_i |u_i|_inf``."""
    scale = np.max(np.abs(traj.u)) if traj.u.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(traj.ubar)) / scale)


def _slowest_rate(problem, controller) -> float:
    model = problem.model
    loc = controller.local
    rates = [-np.linalg.eigvals(model.A).real.max()]
    c = loc.controller
    if isinstance(c, SampledStatic):
        Ahat, Bhat = matfun.discretize_pair(model.A, model.Bu, c.h)
        rho = np.abs(np.linalg.eigvals(Ahat + Bhat @ c.Fhat)).max()
        rates.append(-np.log(rho) / c.h)
    else:
        rates.append(-np.linalg.eigvals(model.A + model.Bu @ loc.Falpha).real.max())
    return float(min(rates))


def empirical_h2(problem: CoordinationProblem, controller: AggregateController, config: SimConfig,
                 rel_tail: float = 1e-4, max_time: float = 1e4) -> float:
    """Impulse-energy estimate of the closed-loop H2 norm.

    Every disturbance channel of every agent is kicked; for sampled-data loops
    the energies are also averaged over the injection phase relative to the
    sampling grid (trapezoid over ``h/dt + 1`` phases).  Integration runs in
    chunks until the instantaneous power is negligible, then an exponential
    tail bound from the slowest closed-loop mode is added.
    """
    _check_class(problem, controller)
    model = problem.model
    nu, r = problem.nu, model.r
    chans = [(i, c) for i in range(nu) for c in range(r)]
    x0 = np.concatenate([_kick_state(problem, ImpulseChannel(i, c)) for i, c in chans])
    weights = np.ones(len(chans))
    first = None
    cons = problem.constraint
    if cons.sampled:
        H = config.steps_per(cons.h)
        phases = np.arange(H + 1)
        pw = np.ones(H + 1)
        pw[[0, -1]] = 0.5
        pw /= H
        x0 = np.repeat(x0, H + 1, axis=0)
        first = np.tile(phases, len(chans))
        weights = np.repeat(weights, H + 1) * np.tile(pw, len(chans))
    elif cons.kind == "delay":
        config.steps_per(cons.h)
    eng = _Engine(problem, controller, config.dt, x0, first_sample=first)
    sigma = _slowest_rate(problem, controller)
    if sigma <= 0:
        raise ValueError("closed loop is not stable")
    chunk = max(config.steps, 1)
    peak = 0.0
    while True:
        for _ in range(chunk):
            eng.prepare()
            eng.step()
        eng.prepare()
        _, z, _ = eng.outputs()
        power = float(weights @ np.einsum("bip,bip->b", z, z))
        total = float(weights @ eng.energy.sum(axis=1))
        peak = max(peak, power)
        tail = power / (2 * sigma)
        if eng.k * config.dt > max_time:
            raise ValueError("impulse energy does not decay; closed loop unstable?")
        if tail <= rel_tail * 1e-2 * max(total, 1e-300) or total == 0:
            return float(np.sqrt(total + tail))


def predictor_check(problem: CoordinationProblem, controller: AggregateController, config: SimConfig,
                    disturbance: Disturbance = None) -> float:
    """Largest predictor error ``|xhat_i - x_i|`` over grid points with a disturbance-free window."""
    if not isinstance(controller.local.controller, DelayDtc):
        raise ValueError("predictor_check needs the delay class")
    h = controller.local.controller.h
    if disturbance is None:
        disturbance = ImpulseChannel(0, 0, 0.0)
    traj = simulate(problem, controller, config, disturbance)
    mask = np.ones(traj.t.size, dtype=bool)
    if isinstance(disturbance, ImpulseChannel):
        mask &= traj.t >= disturbance.time + h - 1e-12
    elif traj.w is not None:
        active = np.any(traj.w != 0, axis=(1, 2))
        last = traj.t[active].max() if active.any() else -np.inf
        mask &= traj.t >= last + h - 1e-12
    if not mask.any():
        return 0.0
    return float(np.max(np.linalg.norm(traj.xhat[mask] - traj.x[mask], axis=2)))


def simulate_pi(pi, u: Callable[[float], np.ndarray], dt: float, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop RK4 response of ``chi' = A chi + Bu u(t) - e^{Ah} Bu u(t-h)`` for a prescribed input.

    ``u`` is a callable, taken as zero for negative time; ``h`` must be a multiple of ``dt``.  Returns ``(t, chi)``.
    """
    N = _ratio(T, dt)
    if N is None:
        raise ValueError("T must be an integer multiple of dt")
    A, Bu, EB, h = pi.A, pi.Bu, pi.expAhBu, pi.h
    H = _ratio(h, dt)
    if H is None:
        raise ValueError("h must be an integer multiple of dt")
    out = np.zeros((N + 1, A.shape[0]))
    chi = np.zeros(A.shape[0])
    for k in range(N):
        t = k * dt
        # the delayed input is zero on whole steps before the history starts, so the
        # jump of u at t = 0 is not smeared across the step ending at t = h
        live = k >= H
        f = lambda s, c: A @ c + Bu @ np.atleast_1d(u(s)) - (EB @ np.atleast_1d(u(s - h)) if live else 0)  # noqa: E731
        k1 = f(t, chi)
        k2 = f(t + dt / 2, chi + dt / 2 * k1)
        k3 = f(t + dt / 2, chi + dt / 2 * k2)
        k4 = f(t + dt, chi + dt * k3)
        chi = chi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = chi
    return np.arange(N + 1) * dt, out
