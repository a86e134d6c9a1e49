"""Scaled 3D energies of recovery deformations against the 2D limit energies.

    python scripts/gamma_convergence.py --cells 64 --out out/gamma.csv
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from mlplate import homogeneous_laminate, isotropic_form
from mlplate.functionals import Regime
from mlplate.gamma import QuadSpec, convergence_study, preset_fields

CASES = [("vK", 3.0, "cap"), ("lvK", 5.0, "poly2"), ("lKi", 2.5, "cylinder")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=64)
    ap.add_argument("--levels", type=int, nargs=2, default=[3, 7], help="h from 2^-a to 2^-b")
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--out", type=Path, default=Path("out/gamma.csv"))
    args = ap.parse_args()

    lam = homogeneous_laminate(isotropic_form(1.0, 1.0), None, np.eye(3))
    hs = [2.0**-k for k in range(args.levels[0], args.levels[1] + 1)]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "alpha", "preset", "h", "energy", "limit", "error", "projection_error"])
        for tag, alpha, preset in CASES:
            start = time.perf_counter()
            regime = Regime(tag, theta=args.theta if tag == "vK" else 1.0, alpha=alpha)
            table = convergence_study(lam, regime, preset_fields(preset), hs, QuadSpec(cells=args.cells))
            print(f"\n{tag} alpha={alpha} target={preset} limit={table.limit:.8f} "
                  f"rate={table.rate:.2f} ({time.perf_counter() - start:.1f}s)")
            print(f"{'h':>10} {'I^h':>12} {'|I^h - I|':>10} {'P^h err':>10}")
            for h, e, err, perr in table.rows():
                print(f"{h:10.6f} {e:12.8f} {err:10.2e} {perr:10.2e}")
                w.writerow([tag, alpha, preset, h, e, table.limit, err, perr])
    print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
