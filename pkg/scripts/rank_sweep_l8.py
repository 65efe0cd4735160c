"""d_r/d_q against alpha at L=8 for the AFH and AKLT targets.

Runs one `spin1-nqs sweep-alpha` per phase and prints the resulting tables.
Each alpha=10 run takes about half an hour on one core.

    python scripts/rank_sweep_l8.py --iterations 15000 --output-root runs
"""
import argparse

from spin1_nqs.cli import main
from spin1_nqs.runio import read_csv


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=15000)
    ap.add_argument("--alphas", default="2,4,6,8,10")
    ap.add_argument("--phases", default="afh,aklt")
    ap.add_argument("--output-root", default="runs")
    args = ap.parse_args(argv)
    for phase in args.phases.split(","):
        code = main(["sweep-alpha", "--L", "8", "--phase", phase, "--alphas", args.alphas,
                     "--iterations", str(args.iterations), "--output-root", args.output_root])
        if code:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
