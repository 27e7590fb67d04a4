"""Limit side of the Heisenberg experiment.

Prints the effective Lagrangian Lbar for a quadratic beta next to the squared
sub-Riemannian distance, then the Hopf-Lax value for a linear datum against
its closed form <c, pi x> - T |c|^2 / 2.
"""

import argparse

import numpy as np

from nilhomog.carnot import CarnotGroup, heisenberg_l2_distance
from nilhomog.effective import BetaFunction, generalized_beta
from nilhomog.homogenize import InitialData, hopf_lax_limit, lbar_from_beta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pieces", type=int, default=64)
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args()
    g = CarnotGroup.heisenberg()
    beta = BetaFunction.quadratic(2)
    print("x1,x2,x3,lbar,half_d2")
    for x in ([1, 0, 0], [0, 0, 1], [1, 1, 0.5], [0.5, -0.2, 2.0]):
        lb = generalized_beta(beta, g, x, n_pieces=args.pieces)
        print(",".join(map(str, [*x, f"{lb:.6f}", f"{heisenberg_l2_distance(x) ** 2 / 2:.6f}"])))
    c = np.array([0.5, -0.25])
    data = InitialData.linear(g, c)
    lbar = lbar_from_beta(beta, g)
    print("\nx1,x2,x3,hopf_lax,closed_form")
    for x in ([0, 0, 0], [1, 0.5, 0.3], [-0.4, 0.2, -0.5]):
        v = hopf_lax_limit(lbar, data, x, args.T, radius=1.5, n=15, levels=5).value
        exact = c @ np.asarray(x, dtype=float)[:2] - args.T * (c @ c) / 2
        print(",".join(map(str, [*x, f"{v:.6f}", f"{exact:.6f}"])))


if __name__ == "__main__":
    main()
