"""Recompute the high-precision scalar ZOH reference value used by the test suite.

Needs mpmath (test extra).  Prints the stabilizing DARE root and gamma_alpha^2
for the scalar agent A=-1, Bw=Bu=1, Cz=[1;0], Dzu=[0;1].
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import mpmath as mp  # noqa: E402
from oracles import zoh_scalar_golden  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", default="0.5", help="sampling period, parsed exactly as a decimal string")
    ap.add_argument("--dps", type=int, default=50)
    args = ap.parse_args(argv)
    g = zoh_scalar_golden(args.h, args.dps)
    with mp.workdps(args.dps):
        for k in ("X", "F", "gamma_sq"):
            print(f"{k:9s} {mp.nstr(g[k], 20)}")


if __name__ == "__main__":
    main()
