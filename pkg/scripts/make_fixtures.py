"""Regenerate the bundled graph fixtures and their manifest.

    python3 scripts/make_fixtures.py [--out tests/fixtures]
"""

import argparse
import json
import pathlib

from routefast.graph import build_encoder, find_sdpa_patterns, rewrite, save_graph, square_tensors
from routefast.graph.fixtures import manifest_entry

FIXTURES = {
    # name: (layers, seq_len, head_dim)
    "encoder_1l": (1, 128, 64),
    "encoder_4l": (4, 128, 64),
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    ap.add_argument("--local-attention", type=int, default=128)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, (layers, S, d) in FIXTURES.items():
        g = build_encoder(layers, S, d, heads=2, batch=2, local_window=args.local_attention, seed=layers)
        fa = rewrite(g, d, args.local_attention)
        save_graph(g, out / f"{name}.json")
        save_graph(fa, out / f"{name}_fa.json")
        m = find_sdpa_patterns(g)
        manifest[name] = {
            "layers": layers, "seq_len": S, "head_dim": d, "local_attention": args.local_attention,
            **manifest_entry(g),
            "patterns": [{"kind": p.kind, "q": p.q, "k": p.k, "v": p.v, "mask": p.mask} for p in m],
            "square_tensors": len(square_tensors(g)),
        }
        manifest[f"{name}_fa"] = {
            **manifest_entry(fa),
            "windows": [[n.attrs["window_left"], n.attrs["window_right"]] for n in fa.nodes
                        if n.op == "FusedFlashAttention"],
            "square_tensors": len(square_tensors(fa)),
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps({k: v["nodes"] for k, v in manifest.items()}))


if __name__ == "__main__":
    main()
