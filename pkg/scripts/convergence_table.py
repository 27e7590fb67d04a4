"""Sup errors of the rescaled Lax-Oleinik solutions against the Hopf-Lax limit."""

import argparse

from nilhomog.carnot import CarnotGroup
from nilhomog.homogenize import InitialData, convergence_sweep, default_beta
from nilhomog.lagrangian import FourierPotential, kinetic, mechanical
from nilhomog.mane import DiscretizationSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=["kinetic", "mechanical"], default="kinetic")
    ap.add_argument("--R", type=float, default=2.0)
    ap.add_argument("--T", type=float, nargs="+", default=[0.5, 1.0])
    ap.add_argument("--kmax", type=int, default=16)
    args = ap.parse_args()
    spec = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=10.0)
    if args.model == "kinetic":
        model = kinetic(1)
    else:
        model = mechanical(FourierPotential.cosine(1), 1).shifted(1.0)
    beta = default_beta(model, spec)
    eps = [1.0 / k for k in (4, 8, 16, 32, 64) if k <= args.kmax]
    rep = convergence_sweep(model, InitialData.cone(CarnotGroup.abelian(1)), eps, args.R, args.T, spec, beta)
    print("eps,T,sup_error")
    for e, t, err in rep.error_rows():
        print(f"{e},{t},{err:.6f}")
    if not rep.complete:
        print(f"# stopped early: {rep.failure}")


if __name__ == "__main__":
    main()
