"""Command-line front end: ``h2coord {validate,analyze,simulate,platoon}``.

Exit codes: 0 success, 1 domain failure, 2 usage or parse failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ProblemConfig, load_config
from .coordination import CoordinationProblem, cost_report, normalize_weights, synthesize
from .local_synthesis import AssumptionError, solve_local, validate
from .sim import ImpulseChannel, SimConfig, WhiteNoise, constraint_residual, empirical_h2, simulate

log = logging.getLogger("h2coord")
g17 = "{:.17g}".format


class DomainFailure(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path: Path, header: list[str], rows: list[list], cfg: ProblemConfig) -> None:
    buf = io.StringIO()
    buf.write(f"# {_stamp(cfg)}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([g17(v) if isinstance(v, (float, np.floating)) else v for v in r])
    write_atomic(path, buf.getvalue())


def _stamp(cfg: ProblemConfig) -> str:
    return f"h2coord {__version__} config_sha256={cfg.digest()}"


def _problem(cfg: ProblemConfig, h=None) -> CoordinationProblem:
    try:
        mu = normalize_weights(cfg.mu)
    except ValueError as exc:
        raise DomainFailure(f"A3: {exc}") from exc
    return CoordinationProblem(cfg.model(), cfg.nu, mu, cfg.constraint_at(h))


def cmd_validate(cfg: ProblemConfig, out: Path, args) -> int:
    model = cfg.model()
    mu = np.asarray(cfg.mu, dtype=float)
    norm = np.linalg.norm(mu)
    mu_n = mu / norm if norm > 0 else mu
    report = validate(model, mu_n, cfg.constraint_at())
    overrides = cfg.override_set()
    rows = []
    for c in report.checks:
        rows.append([c.name, int(c.required), int(c.passed), int(c.name in overrides and not c.passed), c.detail])
        status = "pass" if c.passed else ("overridden" if c.name in overrides else ("FAIL" if c.required else "fail (not required)"))
        print(f"{c.name}: {status}{' - ' + c.detail if c.detail else ''}")
    write_csv(out / "validate.csv", ["assumption", "required", "passed", "overridden", "detail"], rows, cfg)
    return 0 if report.ok(overrides) else 1


def _analyze_point(cfg: ProblemConfig, h):
    problem = _problem(cfg, h)
    rep = validate(problem.model, problem.mu, problem.constraint)
    if not rep.ok(cfg.override_set()):
        raise DomainFailure(str(AssumptionError(rep)))
    try:
        local = solve_local(problem.model, problem.constraint)
    except ValueError as exc:
        raise DomainFailure(f"local synthesis failed: {exc}") from exc
    return h, cost_report(problem, local)


def cmd_analyze(cfg: ProblemConfig, out: Path, args) -> int:
    kind = cfg.constraint["kind"]
    hs = [None] if kind == "none" else (cfg.sweep["h_values"] if cfg.sweep and cfg.sweep["h_values"]
                                         else [cfg.constraint["h"]])
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as ex:
        results = list(ex.map(lambda h: _analyze_point(cfg, h), hs))
    nu = cfg.nu
    header = ["h", "gamma0_sq", "gamma_opt_sq", "gamma_alpha_sq", "total_sq"]
    for i in range(1, nu + 1):
        header += [f"agent{i}_sq", f"boc{i}", f"coc{i}"]
    rows = []
    for h, rep in results:
        row = ["" if h is None else float(h), rep.gamma0_sq, rep.gamma_opt_sq, rep.gamma_alpha_sq, rep.total_sq]
        for i in range(nu):
            row += [rep.per_agent_sq[i], rep.benefit_of_cooperation[i], rep.cost_of_coordination[i]]
        rows.append(row)
        print(f"h={row[0]!s:>8} gamma_alpha_sq={rep.gamma_alpha_sq:.10g} total_sq={rep.total_sq:.10g}")
    write_csv(out / "costs.csv", header, rows, cfg)
    return 0


def _disturbance(cfg: ProblemConfig, seed):
    d = cfg.sim.disturbance
    if d.kind == "impulse":
        return ImpulseChannel(d.agent - 1, d.channel - 1, d.time)
    if d.kind == "noise":
        return WhiteNoise(d.seed if seed is None else seed, d.intensity)
    return None


def cmd_simulate(cfg: ProblemConfig, out: Path, args) -> int:
    if cfg.sim is None:
        raise ConfigError("sim: section required for simulate")
    problem = _problem(cfg)
    try:
        ctrl = synthesize(problem, overrides=cfg.override_set())
        sc = SimConfig(cfg.sim.dt, cfg.sim.T)
        traj = simulate(problem, ctrl, sc, _disturbance(cfg, args.seed))
        emp = empirical_h2(problem, ctrl, sc)
    except (AssumptionError, ValueError, IndexError) as exc:
        raise DomainFailure(str(exc)) from exc
    analytic = cost_report(problem, ctrl.local).total_sq
    res = constraint_residual(traj)
    write_atomic(out / "trajectory.csv", traj.to_csv(_stamp(cfg)))
    write_csv(out / "summary.csv",
              ["kind", "h", "empirical_h2_sq", "analytic_h2_sq", "rel_dev", "constraint_residual", "energy_total"],
              [[problem.constraint.kind, "" if problem.constraint.h is None else problem.constraint.h,
                emp**2, analytic, abs(emp**2 - analytic) / analytic if analytic else 0.0, res,
                float(traj.energy.sum())]], cfg)
    print(f"empirical H2^2={emp**2:.10g} analytic={analytic:.10g} residual={res:.3g}")
    return 0


def cmd_platoon(cfg: ProblemConfig, out: Path, args) -> int:
    from .platoon import ConstantReference, PlatoonSpec, run_platoon

    if cfg.platoon is None or cfg.sim is None:
        raise ConfigError("platoon: 'platoon' and 'sim' sections required")
    try:
        spec = cfg.platoon.build()
        sc = SimConfig(cfg.sim.dt, cfg.sim.T)
        d = cfg.sim.disturbance
        if d.kind == "noise":
            dist = WhiteNoise(d.seed if args.seed is None else args.seed, d.intensity)
        else:
            dist = None
        p0 = None if cfg.platoon.p0 is None else np.array(cfg.platoon.p0)
        r0, rd0, _ = spec.reference(0.0)
        run = run_platoon(spec, sc, dist, p0)
        # same relative initial state, constant reference
        alt = PlatoonSpec(spec.nu, spec.kappa0, spec.kappa1, spec.q1, spec.q2, spec.delta, spec.h, ConstantReference(0.0))
        p0_alt = (run.p[0] - r0)
        v0_alt = run.v[0] - rd0
        run_alt = run_platoon(alt, sc, dist, p0_alt, v0_alt)
    except ValueError as exc:
        raise DomainFailure(str(exc)) from exc
    ref_dev = float(np.max(np.abs(run.eps_bar - run_alt.eps_bar)))
    write_atomic(out / "trajectory.csv", run.to_trajectory(spec).to_csv(_stamp(cfg)))
    write_atomic(out / "platoon_report.csv", run.report_csv(_stamp(cfg)))
    rep = run.report
    write_csv(out / "platoon_summary.csv",
              ["f1", "f2", "coordination_cost_sq", "thrust_identity_err", "max_u_residual",
               "reference_independence_err", "final_formation_err"],
              [[rep["Fhat"][0], rep["Fhat"][1], rep["coordination_cost_sq"], rep["thrust_identity_err"],
                rep["max_u_residual"], ref_dev, rep["final_formation_err"]]], cfg)
    print(f"Fhat={rep['Fhat']} thrust identity err={rep['thrust_identity_err']:.3g} "
          f"reference independence err={ref_dev:.3g}")
    print(f"note: {rep['cost_note']}")
    return 0


COMMANDS = {"validate": cmd_validate, "analyze": cmd_analyze, "simulate": cmd_simulate, "platoon": cmd_platoon}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="h2coord", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"h2coord {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML problem description")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="noise seed override")
        sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, Path(args.out), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
