"""Scaled word norms eps |h_eps(x)| against the limit norm, for Z^2 and H3(Z)."""

import argparse

import numpy as np

from nilhomog.carnot import CarnotGroup, rescale_map_h, stable_norm_group
from nilhomog.group import GroupPresentation, word_norms
from nilhomog.homogenize import limit_norm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmax", type=int, default=32)
    args = ap.parse_args()
    cases = [
        ("Z2", GroupPresentation.abelian(2), [[1.0, 0.0], [0.6, 0.7], [-1.2, 0.4]]),
        ("H3", GroupPresentation.heisenberg(), [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]),
    ]
    print("group,x,k,scaled_word_norm,limit")
    for name, pres, pts in cases:
        g = stable_norm_group(pres)
        ks = [k for k in (4, 8, 16, 32, 64) if k <= args.kmax]
        for x in pts:
            lim = float(limit_norm(g, np.asarray(x))[0])
            for k in ks:
                gam = rescale_map_h(g, pres, 1.0 / k, x)
                n = word_norms(pres, [gam], 8 * k)[gam.coords]
                print(f"{name},\"{x}\",{k},{n / k:.5f},{lim:.5f}")


if __name__ == "__main__":
    main()
