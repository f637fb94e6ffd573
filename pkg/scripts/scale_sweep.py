"""Swarm-size sweep {5,10,20,30}: FRL everywhere, CRL only where the joint space fits.

    python scripts/scale_sweep.py --out runs/sweep [--episodes 200] [--seeds 0]
"""
import argparse
import sys
from pathlib import Path

from fedjam import cli


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--sizes", default="5,10,20,30")
    args = ap.parse_args()
    return cli.main(["sweep", "--sizes", args.sizes, "--seeds", args.seeds, "--episodes", str(args.episodes),
                     "--eval-episodes", "5", "--out", str(args.out),
                     "--set", "episode_len=50", "--set", "jammer_strategy=Sweep"])


if __name__ == "__main__":
    sys.exit(main())
