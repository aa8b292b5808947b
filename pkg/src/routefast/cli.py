"""``routefast`` command line.

Exit codes: 0 success, 1 verification or benchmark failure, 2 usage or
input error. Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from typing import Sequence

from . import __version__


class UsageError(Exception):
    pass


def _csv_ints(s: str) -> list[int]:
    try:
        vals = [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _weights(s: str) -> tuple[float, ...]:
    try:
        w = tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b,c,d floats, got {s!r}") from None
    if len(w) != 4:
        raise argparse.ArgumentTypeError("expected exactly 4 weights")
    return w


def _read_text(path: str | None) -> str:
    if path in (None, "-"):
        return sys.stdin.buffer.read().decode("utf-8")
    with open(path, encoding="utf-8") as f:
        return f.read()


def _compression_config(args):
    from .compression import CompressionConfig

    kw = {}
    for flag, key in (("max_tokens", "max_tokens"), ("weights", "weights"), ("depth", "depth"),
                      ("preserve_first", "preserve_first_n"), ("preserve_last", "preserve_last_n")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    try:
        return CompressionConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_compression_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--weights", type=_weights, help="TextRank,position,TF-IDF,novelty")
    p.add_argument("--depth", type=float, help="U-shape depth in [0, 1]")
    p.add_argument("--preserve-first", type=int)
    p.add_argument("--preserve-last", type=int)


# --- subcommands ---------------------------------------------------------------


def cmd_compress(args) -> int:
    from .compression import compress

    result = compress(_read_text(args.file), _compression_config(args))
    json.dump(result.to_dict(), sys.stdout, ensure_ascii=False)
    sys.stdout.write("\n")
    return 0


def cmd_rewrite_graph(args) -> int:
    from .graph import find_sdpa_patterns, load_graph, rewrite, save_graph

    g = load_graph(args.input)
    matches = find_sdpa_patterns(g)
    if not matches:
        # nothing to fuse: the output is the input, byte for byte
        if os.path.abspath(args.input) != os.path.abspath(args.output):
            shutil.copyfile(args.input, args.output)
        print(json.dumps({"patterns": 0, "fused": []}))
        return 0
    out = rewrite(g, args.hdim, args.local_attention, mask_input=args.mask_input)
    save_graph(out, args.output)
    fused = [
        {"node": n.name, "layer_kind": n.attrs.get("layer_kind"),
         "window": [n.attrs["window_left"], n.attrs["window_right"]]}
        for n in out.nodes if n.op == "FusedFlashAttention"
    ]
    print(json.dumps({"patterns": len(matches), "nodes_before": len(g.nodes), "nodes_after": len(out.nodes),
                      "fused": fused}))
    return 0


def cmd_verify_rewrite(args) -> int:
    from .graph import load_graph, verify_rewrite

    report = verify_rewrite(load_graph(args.graph), load_graph(args.rewritten), args.trials, args.tol, args.seed)
    if report.ok:
        print(report.render())
        return 0
    print(report.render(), file=sys.stderr)
    return 1


def cmd_memory_model(args) -> int:
    from .attention import DTYPE_BYTES, MIB, memory_table, smallest_failing_seq_len

    rows = memory_table(args.heads, args.dtype, args.budget_mb, tuple(args.seq_lens), args.batch,
                        args.head_dim, args.tile)
    first_fail = smallest_failing_seq_len(int(args.budget_mb * MIB), args.batch, args.heads, DTYPE_BYTES[args.dtype])
    if args.json:
        print(json.dumps({"budget_mb": args.budget_mb, "smallest_failing_seq_len": first_fail,
                          "rows": [r.__dict__ for r in rows]}))
        return 0
    print(f"{'S':>7}  {'sdpa_bytes':>14}  {'fa_bytes':>12}  fits_budget")
    for r in rows:
        print(f"{r.seq_len:>7}  {r.sdpa_bytes:>14}  {r.fa_bytes:>12}  {str(r.fits_budget).lower()}")
    print(f"smallest S whose mask exceeds {args.budget_mb:g} MiB: {first_fail}")
    return 0


def _describe(action) -> str:
    from .stream import Consume, Finalize, Forward

    if isinstance(action, Forward):
        return f"Forward({len(action.data)} bytes)"
    if isinstance(action, Consume):
        return f"Consume({action.size} bytes)"
    assert isinstance(action, Finalize)
    return f"Finalize(mode={action.decision.mode}, model={action.decision.selected_model}, body={len(action.body)} bytes)"


def cmd_simulate(args) -> int:
    from .stream import Router, replay

    with open(args.file, "rb") as f:
        body = f.read()
    if args.chunk_size < 1:
        raise UsageError("--chunk-size must be >= 1")
    actions, final = replay(Router(), body, args.chunk_size)
    trace = [_describe(a) for a in actions]
    if args.json:
        print(json.dumps({"actions": trace, "decision": final.decision.to_dict()}))
    else:
        for i, line in enumerate(trace):
            print(f"{i:5d}  {line}")
        print(json.dumps(final.decision.to_dict(), indent=2))
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench

    config = _compression_config(args)
    report = run_bench(args.sizes, args.iters, args.seed, config, tuple(args.modes), args.parallel)
    text = report.to_json() if args.json else report.render()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
    print(text)
    over = [r for r in report.rows if r.output_tokens > config.max_tokens]
    if over:
        print(f"budget exceeded in rows: {[r.tokens for r in over]}", file=sys.stderr)
        return 1
    return 0


def cmd_gen_corpus(args) -> int:
    from .corpus import chat_body, generate_corpus

    os.makedirs(args.out, exist_ok=True)
    n = 0
    with open(os.path.join(args.out, "corpus.jsonl"), "w", encoding="utf-8") as f:
        for doc in generate_corpus(args.sizes, args.per_size, args.seed):
            f.write(json.dumps(doc.to_dict()) + "\n")
            if args.bodies:
                with open(os.path.join(args.out, f"{doc.id}.json"), "wb") as b:
                    b.write(chat_body(doc.text))
            n += 1
    print(json.dumps({"documents": n, "path": os.path.join(args.out, "corpus.jsonl")}))
    return 0


def cmd_serve(args) -> int:
    from .service import config_from_args, serve

    try:
        config = config_from_args(args)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad service config: {exc}") from None
    server = serve(config)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        server.service.close()
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="routefast", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"routefast {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress a prompt to a token budget")
    c.add_argument("file", nargs="?", help="UTF-8 text file (default: stdin)")
    _add_compression_flags(c)
    c.set_defaults(func=cmd_compress)

    r = sub.add_parser("rewrite-graph", help="fuse SDPA subgraphs into flash attention")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", dest="output", required=True)
    r.add_argument("--hdim", type=int, default=64)
    r.add_argument("--local-attention", type=int, default=128)
    r.add_argument("--mask-input", default="attention_mask")
    r.set_defaults(func=cmd_rewrite_graph)

    v = sub.add_parser("verify-rewrite", help="compare original and rewritten graphs numerically")
    v.add_argument("--graph", required=True)
    v.add_argument("--rewritten", required=True)
    v.add_argument("--trials", type=int, default=3)
    v.add_argument("--tol", type=float, default=1e-3)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify_rewrite)

    m = sub.add_parser("memory-model", help="attention mask memory versus sequence length")
    m.add_argument("--heads", type=int, default=12)
    m.add_argument("--dtype", choices=("f16", "bf16", "f32"), default="f16")
    m.add_argument("--budget-mb", type=float, default=718.0)
    m.add_argument("--batch", type=int, default=1)
    m.add_argument("--head-dim", type=int, default=64)
    m.add_argument("--tile", type=int, default=64)
    m.add_argument("--seq-lens", type=_csv_ints, default=[512, 1024, 2048, 4096, 8192, 16384, 32768])
    m.add_argument("--json", action="store_true")
    m.set_defaults(func=cmd_memory_model)

    s = sub.add_parser("simulate", help="replay a request body through the stream handler")
    s.add_argument("--file", required=True)
    s.add_argument("--chunk-size", type=int, default=1024)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="compression ratio and latency by input size")
    b.add_argument("--sizes", type=_csv_ints, default=[2000, 4000, 8000, 16000])
    b.add_argument("--iters", type=int, default=96, help="documents per size")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--parallel", type=int, default=1, help="worker threads")
    b.add_argument("--modes", type=lambda s: s.split(","), default=["compress"], help="compress,route")
    b.add_argument("--json", action="store_true")
    b.add_argument("--out", help="also write the JSON report here")
    _add_compression_flags(b)
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen-corpus", help="write synthetic prompts with ground-truth markers")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--sizes", type=_csv_ints, default=[2000, 4000, 8000, 16000])
    g.add_argument("--per-size", type=int, default=96)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--bodies", action="store_true", help="also write one chat-completion body per document")
    g.set_defaults(func=cmd_gen_corpus)

    from .service import add_config_flags

    sv = sub.add_parser("serve", help="run the demo routing service")
    add_config_flags(sv)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"routefast {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, UnicodeDecodeError) as exc:
        print(f"routefast {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # schema and validation errors in input files
        print(f"routefast {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
