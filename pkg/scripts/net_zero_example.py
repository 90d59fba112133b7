"""Net-zero worked example: price, allocation, inflation and the regulator's optimum."""

import argparse

from captrade import equilibrium as eq
from captrade import regulator as reg
from captrade.inflation import PERCENT, average_inflation_rate
from captrade.model import derive_aggregates
from captrade.scenario import preset_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--N", type=int, default=1, help="number of identical firms")
    args = parser.parse_args()

    scen = preset_scenario(N=args.N)
    eco = scen.economy
    agg = derive_aggregates(eco)
    A = scen.allocation()
    P0 = eq.initial_price(agg, A.M_bar_0, eco.T, eco.lam)
    print(f"net-zero allocation M_bar_0      {A.M_bar_0:.6e} t")
    print(f"initial price P0                 {P0:.4f} EUR/t")
    print(f"average policy inflation         {average_inflation_rate(scen.basket, P0, eco.T) * PERCENT:.4f} %/y")
    print(f"allocation sensitivity (T=10)    {eq.allocation_sensitivity(eco.lam, agg.phi_bar, 10.0):.6f}")
    print(f"price sensitivity (T=10)         {eq.price_sensitivity(eco.lam, agg.phi_bar, 10.0):.4e} EUR/t per t")

    sol = reg.minimize_social_cost(scen.regulator)
    print(f"optimal price P*                 {sol.P_star:.4f} EUR/t ({sol.method})")
    print(f"optimal allocation M_bar*_0      {sol.M_bar_star_0:.6e} t")
    print(f"terminal emission rate           {sol.mu_star_T:.4e} t/y per firm")
    print(f"policy inflation at P*           {sol.i_star_T * PERCENT:.4f} %/y")


if __name__ == "__main__":
    main()
