"""Penalty-weight sweep: share of inflation cost in total penalty cost, and cost curves.

Writes plot-ready ratio_surface.csv and cost_curves.csv.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from captrade import regulator as reg
from captrade.scenario import preset_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/weight-sweep")
    parser.add_argument("--y-pi", type=float, default=None, help="override the inflation penalty weight")
    args = parser.parse_args()

    spec = preset_scenario().regulator
    if args.y_pi is not None:
        spec = reg.with_weights(spec, y_pi=args.y_pi)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    f = reg.SURFACE_FACTORS
    rows = reg.sweep_ratio_surface(spec, [spec.ell.weight * v for v in f], [spec.varphi.weight * v for v in f])
    with (out / "ratio_surface.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    R = np.array([r["ratio"] for r in rows]).reshape(5, 5)
    print("s_pi / (s_mu + s_pi); rows y_mu factor, columns y_pi factor")
    print("        " + " ".join(f"{v:>8.3g}" for v in f))
    for v, row in zip(f, R):
        print(f"{v:>8.3g}" + " ".join(f"{x:8.3f}" for x in row))

    x = np.linspace(0.0, 1000.0, 201)
    curves = reg.sweep_cost_curves(spec, x, ["ymu/10", "ypi*1e5"])
    with (out / "cost_curves.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(curves[0]))
        w.writeheader()
        w.writerows(curves)

    print(f"written to {out}")


if __name__ == "__main__":
    main()
