"""Print the compression ratio/latency table for the synthetic corpus.

    python3 scripts/bench_table.py --iters 96 --out bench.json
"""

import argparse

from routefast.bench import run_bench


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--sizes", default="2000,4000,8000,16000")
    p.add_argument("--iters", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    args = p.parse_args()
    report = run_bench([int(s) for s in args.sizes.split(",")], args.iters, args.seed)
    print(report.render())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")


if __name__ == "__main__":
    main()
