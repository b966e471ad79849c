"""Tabulate gamma_alpha^2(h) for every constraint class of a configured agent model.

    python scripts/run_sweep.py configs/s1_delay.yaml --hmin 0.01 --hmax 10 --points 25 > sweep.csv
"""

import argparse
import csv
import sys

import numpy as np

from h2coord import Constraint, solve_local, validate
from h2coord.config import load_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--hmin", type=float, default=0.01)
    ap.add_argument("--hmax", type=float, default=10.0)
    ap.add_argument("--points", type=int, default=25)
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    model = cfg.model()
    mu = np.ones(cfg.nu) / np.sqrt(cfg.nu)
    base = solve_local(model, Constraint.unconstrained())
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["h", "gamma0_sq", "gamma_opt_sq", "delay", "zoh", "opthold"])
    for h in np.geomspace(args.hmin, args.hmax, args.points):
        row = [h, base.gamma0_sq, base.gamma_opt_sq]
        for kind in ("delay", "zoh", "opthold"):
            c = Constraint(kind, float(h))
            ok = validate(model, mu, c).ok(cfg.override_set())
            row.append(solve_local(model, c).gamma_alpha_sq if ok else float("nan"))
        out.writerow([f"{v:.17g}" for v in row])


if __name__ == "__main__":
    main()
