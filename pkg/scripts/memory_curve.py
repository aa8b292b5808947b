"""Dense-mask versus tiled-attention memory as a CSV, one row per sequence length.

    python3 scripts/memory_curve.py --budget-mb 718 > memory.csv
"""

import argparse
import csv
import sys

from routefast.attention import DTYPE_BYTES, MIB, memory_table, smallest_failing_seq_len


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--heads", type=int, default=12)
    p.add_argument("--dtype", default="f16", choices=sorted(DTYPE_BYTES))
    p.add_argument("--budget-mb", type=float, default=718.0)
    args = p.parse_args()
    seq_lens = tuple(2**k for k in range(7, 16))
    rows = memory_table(args.heads, args.dtype, args.budget_mb, seq_lens)
    w = csv.writer(sys.stdout)
    w.writerow(["seq_len", "sdpa_bytes", "fa_bytes", "fits_budget"])
    for r in rows:
        w.writerow([r.seq_len, r.sdpa_bytes, r.fa_bytes, int(r.fits_budget)])
    first = smallest_failing_seq_len(int(args.budget_mb * MIB), 1, args.heads, DTYPE_BYTES[args.dtype])
    print(f"# smallest failing seq_len: {first}", file=sys.stderr)


if __name__ == "__main__":
    main()
