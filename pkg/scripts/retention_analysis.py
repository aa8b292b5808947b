"""Which planted sentences survive compression, broken down by position and size.

Also prints the composite-score rank of each middle PII sentence among all
sentences, which shows how far it sits from the selection cut.

    python3 scripts/retention_analysis.py --per-size 24
"""

import argparse
from collections import defaultdict

import numpy as np

from routefast.compression import CompressionConfig, composite_rank, compress
from routefast.corpus import generate_corpus
from routefast.segmentation import split_sentences
from routefast.signals import compute_signals


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--sizes", default="2000,4000,8000,16000")
    p.add_argument("--per-size", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    cfg = CompressionConfig()
    kept = defaultdict(lambda: [0, 0])
    middle_ranks = []
    for doc in generate_corpus([int(s) for s in args.sizes.split(",")], args.per_size, args.seed):
        r = compress(doc.text, cfg)
        for m in doc.markers:
            key = (m.kind, m.position, doc.target_tokens)
            kept[key][0] += m.text in r.text
            kept[key][1] += 1
            if m.kind == "pii" and m.position == "middle":
                sents = split_sentences(doc.text)
                scores = composite_rank(compute_signals(sents, cfg.depth), cfg.weights)
                i = next(k for k, s in enumerate(sents) if s.text == m.text)
                rank = int((scores > scores[i]).sum())
                middle_ranks.append((rank, len(r.selected_indices), len(sents)))
    print(f"{'kind':<10} {'position':<8} {'size':>6} {'kept':>9}")
    for (kind, pos, size), (k, t) in sorted(kept.items()):
        print(f"{kind:<10} {pos:<8} {size:>6} {k:>4}/{t:<4}")
    if middle_ranks:
        ranks = np.array(middle_ranks)
        print(f"middle PII: median rank {np.median(ranks[:, 0]):.0f} of {np.median(ranks[:, 2]):.0f} sentences; "
              f"median selected {np.median(ranks[:, 1]):.0f}")


if __name__ == "__main__":
    main()
