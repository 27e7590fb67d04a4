"""Run every shipped config through the CLI and report the exit codes."""

import argparse
import sys
from pathlib import Path

from nilhomog.cli import run

SUBCOMMAND = {  # config stem -> subcommand
    "kinetic_1d": "homogenize",
    "mechanical_1d": "homogenize",
    "mechanical_raw_1d": "beta",
    "check_kinetic": "check-model",
    "potential_mech": "potential",
    "growth_z2": "growth",
    "growth_h3": "growth",
    "ccdist_h3": "cc-dist",
    "lbar_h3": "lbar",
    "pansu_z2": "pansu",
    "pansu_h3": "pansu",
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=Path(__file__).resolve().parents[1] / "configs", type=Path)
    ap.add_argument("--out", default=None, help="override every output.dir with <out>/<stem>")
    args = ap.parse_args()
    failed = 0
    for stem, sub in SUBCOMMAND.items():
        cfg = args.configs / f"{stem}.cfg"
        out = None if args.out is None else Path(args.out) / stem
        code = run(sub, cfg, out)
        print(f"{stem:20s} {sub:12s} exit {code}")
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
