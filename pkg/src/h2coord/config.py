"""YAML problem configuration with field-level diagnostics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .local_synthesis import CONSTRAINT_KINDS, AgentModel, Constraint


class ConfigError(ValueError):
    pass


def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    if key not in d:
        raise ConfigError(f"{path + '.' if path else ''}{key}: missing required field")
    return d[key]


def _num(v, path: str, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v) or (positive and v <= 0) or (nonneg and v < 0):
        raise ConfigError(f"{path}: invalid value {v!r}")
    return v


def _int(v, path: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}")
    return v


def _vec(v, path: str) -> list[float]:
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}: expected a nonempty list")
    return [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _mat(v, path: str) -> list[list[float]]:
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise ConfigError(f"{path}: expected a nested list (matrix)")
    rows = [_vec(r, f"{path}[{i}]") for i, r in enumerate(v)]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: ragged rows")
    return rows


@dataclass
class DisturbanceConfig:
    kind: str = "impulse"  # impulse | noise | none
    agent: int = 1
    channel: int = 1
    time: float = 0.0
    seed: int = 0
    intensity: float = 1.0

    @classmethod
    def from_dict(cls, d, path):
        if d is None:
            return cls(kind="none")
        kind = _req(d, "kind", path)
        if kind not in ("impulse", "noise", "none"):
            raise ConfigError(f"{path}.kind: unknown disturbance kind {kind!r}")
        c = cls(kind=kind)
        if kind == "impulse":
            c.agent = _int(d.get("agent", 1), f"{path}.agent", 1)
            c.channel = _int(d.get("channel", 1), f"{path}.channel", 1)
            c.time = _num(d.get("time", 0.0), f"{path}.time", nonneg=True)
        elif kind == "noise":
            c.seed = _int(d.get("seed", 0), f"{path}.seed", 0)
            c.intensity = _num(d.get("intensity", 1.0), f"{path}.intensity", nonneg=True)
        return c

    def to_dict(self):
        if self.kind == "impulse":
            return {"kind": "impulse", "agent": self.agent, "channel": self.channel, "time": self.time}
        if self.kind == "noise":
            return {"kind": "noise", "seed": self.seed, "intensity": self.intensity}
        return {"kind": "none"}


@dataclass
class SimSection:
    dt: float
    T: float
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)

    @classmethod
    def from_dict(cls, d, path="sim"):
        return cls(_num(_req(d, "dt", path), f"{path}.dt", positive=True),
                   _num(_req(d, "T", path), f"{path}.T", positive=True),
                   DisturbanceConfig.from_dict(d.get("disturbance", {"kind": "impulse"}), f"{path}.disturbance"))

    def to_dict(self):
        return {"dt": self.dt, "T": self.T, "disturbance": self.disturbance.to_dict()}


@dataclass
class PlatoonSection:
    nu: int
    kappa0: float
    kappa1: float
    q1: float
    q2: float
    delta: list[float]
    h: float
    reference: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    p0: list[float] | None = None

    @classmethod
    def from_dict(cls, d, path="platoon"):
        g = lambda k: _req(d, k, path)  # noqa: E731
        ref = d.get("reference", {"kind": "constant", "value": 0.0})
        if not isinstance(ref, dict) or ref.get("kind") not in ("constant", "ramp", "sinusoid"):
            raise ConfigError(f"{path}.reference.kind: expected constant | ramp | sinusoid")
        for k, v in ref.items():
            if k != "kind":
                _num(v, f"{path}.reference.{k}")
        p0 = d.get("p0")
        return cls(_int(g("nu"), f"{path}.nu", 2), _num(g("kappa0"), f"{path}.kappa0", positive=True),
                   _num(g("kappa1"), f"{path}.kappa1", positive=True), _num(g("q1"), f"{path}.q1", nonneg=True),
                   _num(g("q2"), f"{path}.q2", nonneg=True), _vec(g("delta"), f"{path}.delta"),
                   _num(g("h"), f"{path}.h", positive=True), dict(ref),
                   None if p0 is None else _vec(p0, f"{path}.p0"))

    def to_dict(self):
        d = {"nu": self.nu, "kappa0": self.kappa0, "kappa1": self.kappa1, "q1": self.q1, "q2": self.q2,
             "delta": self.delta, "h": self.h, "reference": self.reference}
        if self.p0 is not None:
            d["p0"] = self.p0
        return d

    def build(self):
        from .platoon import REFERENCES, PlatoonSpec
        ref = dict(self.reference)
        kind = ref.pop("kind")
        return PlatoonSpec(self.nu, self.kappa0, self.kappa1, self.q1, self.q2, np.array(self.delta), self.h,
                           REFERENCES[kind](**ref))


@dataclass
class ProblemConfig:
    A: list | None = None
    Bw: list | None = None
    Bu: list | None = None
    Cz: list | None = None
    Dzu: list | None = None
    nu: int | None = None
    mu: list | None = None
    constraint: dict = field(default_factory=lambda: {"kind": "none"})
    sim: SimSection | None = None
    sweep: dict | None = None
    overrides: dict = field(default_factory=lambda: {"allow_singular_Bw": False})
    platoon: PlatoonSection | None = None

    @classmethod
    def from_dict(cls, d: Any) -> "ProblemConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>: expected a mapping")
        known = {"A", "Bw", "Bu", "Cz", "Dzu", "nu", "mu", "constraint", "sim", "sweep", "overrides", "platoon"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"{sorted(extra)[0]}: unknown field")
        c = cls()
        if "A" in d or "platoon" not in d:
            for k in ("A", "Bw", "Bu", "Cz", "Dzu"):
                setattr(c, k, _mat(_req(d, k, ""), k))
            c.nu = _int(_req(d, "nu", ""), "nu", 2)
            c.mu = _vec(d["mu"], "mu") if "mu" in d else [1.0] * c.nu
            if len(c.mu) != c.nu:
                raise ConfigError(f"mu: expected {c.nu} entries, got {len(c.mu)}")
            cons = d.get("constraint", {"kind": "none"})
            kind = _req(cons, "kind", "constraint")
            if kind not in CONSTRAINT_KINDS:
                raise ConfigError(f"constraint.kind: expected one of {CONSTRAINT_KINDS}, got {kind!r}")
            c.constraint = {"kind": kind}
            if kind != "none":
                c.constraint["h"] = _num(_req(cons, "h", "constraint"), "constraint.h", positive=True)
        if "sim" in d:
            c.sim = SimSection.from_dict(d["sim"])
        if "sweep" in d:
            hv = _req(d["sweep"], "h_values", "sweep")
            if not isinstance(hv, list):
                raise ConfigError("sweep.h_values: expected a list")
            c.sweep = {"h_values": [_num(x, f"sweep.h_values[{i}]", positive=True) for i, x in enumerate(hv)]}
        if "overrides" in d:
            ov = d["overrides"]
            if not isinstance(ov, dict) or not isinstance(ov.get("allow_singular_Bw", False), bool):
                raise ConfigError("overrides.allow_singular_Bw: expected a boolean")
            c.overrides = {"allow_singular_Bw": ov.get("allow_singular_Bw", False)}
        if "platoon" in d:
            c.platoon = PlatoonSection.from_dict(d["platoon"])
        return c

    def to_dict(self) -> dict:
        d = {}
        if self.A is not None:
            d.update(A=self.A, Bw=self.Bw, Bu=self.Bu, Cz=self.Cz, Dzu=self.Dzu, nu=self.nu, mu=self.mu,
                     constraint=dict(self.constraint))
        if self.sim is not None:
            d["sim"] = self.sim.to_dict()
        if self.sweep is not None:
            d["sweep"] = {"h_values": list(self.sweep["h_values"])}
        d["overrides"] = dict(self.overrides)
        if self.platoon is not None:
            d["platoon"] = self.platoon.to_dict()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def model(self) -> AgentModel:
        if self.A is None:
            raise ConfigError("A: model matrices are required for this command")
        try:
            return AgentModel(*(np.array(getattr(self, k)) for k in ("A", "Bw", "Bu", "Cz", "Dzu")))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def constraint_at(self, h: float | None = None) -> Constraint:
        kind = self.constraint["kind"]
        return Constraint(kind, None if kind == "none" else (h if h is not None else self.constraint["h"]))

    def override_set(self) -> set[str]:
        return {"A2"} if self.overrides.get("allow_singular_Bw") else set()


def load_config(path: str | Path) -> ProblemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    return ProblemConfig.from_dict(data)


def dump_config(cfg: ProblemConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
