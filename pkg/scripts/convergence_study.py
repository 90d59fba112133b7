"""Step-size and path-count study of the simulated equilibrium.

For a fixed generic allocation, reports clearing residual, martingale z-score
at T, emission error against the closed form and FOC residual as the grid is
refined.
"""

import argparse

import numpy as np

from captrade import equilibrium as eq
from captrade import oracle
from captrade.model import derive_aggregates
from captrade.scenario import preset_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--N", type=int, default=3)
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, nargs="+", default=[125, 250, 500, 1000, 2000])
    args = parser.parse_args()

    scen = preset_scenario(
        N=args.N, preset={"name": "eu-netzero-2050", "N": args.N, "s_loading": 0.5},
        allocation={"loadings": "deterministic"},
    )
    eco, A = scen.economy, scen.allocation()
    target = eq.expected_terminal_emissions(derive_aggregates(eco), A.M_bar_0, eco.T, eco.lam)
    print(f"{'steps':>6} {'clearing':>10} {'z(P_T)':>8} {'emis z':>8} {'FOC max':>10}")
    for n in args.steps:
        ens = eq.simulate(eco, A, n, args.paths, args.seed)
        mean, se = ens.emissions_per_firm_year()
        foc = oracle.foc_check(eco, A, n_paths=min(args.paths, 400), steps=n, seed=args.seed)
        print(
            f"{n:>6} {ens.clearing_relative():10.2e} {ens.martingale_zscores()[-1]:8.2f} "
            f"{(mean - target) / se:8.2f} {max(foc.residuals.values()):10.2e}"
        )
    print(f"quadratic variation of P at the finest grid: {np.max(ens.price_qv):.4e}")


if __name__ == "__main__":
    main()
