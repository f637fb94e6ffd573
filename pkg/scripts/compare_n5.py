"""Head-to-head FRL vs CRL at N=5 over several seeds, via the CLI.

    python scripts/compare_n5.py --out runs/n5 [--episodes 2000] [--seeds 1,2,3,4,5]

Writes runs/n5/{frl,crl}/seed<S>/... and runs/n5/summary/summary.csv.
"""
import argparse
import sys
from pathlib import Path

from fedjam import cli

REGIME = ["--set", "episode_len=50", "--set", "jammer_strategy=Sweep", "--set", "jammer_lag=3"]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--eval-episodes", type=int, default=5)
    args = ap.parse_args()
    for seed in args.seeds.split(","):
        for paradigm in ("frl", "crl"):
            code = cli.main([f"train-{paradigm}", "--swarm-size", "5", "--seed", seed,
                             "--episodes", str(args.episodes), "--eval-episodes", str(args.eval_episodes),
                             "--out", str(args.out / paradigm / f"seed{seed}"), *REGIME])
            if code:
                return code
    return cli.main(["compare", str(args.out / "frl"), str(args.out / "crl"), "--out", str(args.out / "summary")])


if __name__ == "__main__":
    sys.exit(main())
