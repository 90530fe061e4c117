"""Command-line entry point: ``simulate``, ``enumerate``, ``verify`` and ``bench``."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .core import ChannelModel, DistortionMeasure, InputError, load_matrix
from .dag import build_huffman_graph, build_interval_graph, build_lc_graph
from .experts import canonicalize
from .pipeline import (CSV_COLUMNS, VARIANTS, ProtocolError, SessionConfig,
                       run_session, stream, write_manifest)
from .sources import parse_source
from .verify import SUITES, run_suites

ENUMERATE_LIMIT = 200


def parse_channel(spec: str, size: int) -> ChannelModel:
    kind, _, arg = spec.partition(":")
    if kind == "identity":
        return ChannelModel.identity(size)
    if kind == "uniform":
        return ChannelModel.uniform(size)
    if kind == "none":
        return ChannelModel.no_side_info(size)
    if kind == "bsc":
        try:
            eps = float(arg)
        except ValueError:
            raise InputError(f"bad crossover probability in {spec!r}") from None
        return ChannelModel.symmetric(size, eps)
    if kind == "file":
        ch = ChannelModel(load_matrix(arg))
        if ch.size != size:
            raise InputError(f"channel file has |X|={ch.size}, expected {size}")
        return ch
    raise InputError(f"unknown channel {spec!r}")


def parse_rho(spec: str, size: int) -> DistortionMeasure:
    """``hamming``, ``abs`` or ``sq`` (on the grid ``i / (size - 1)``), or ``file:<path>``."""
    grid = np.linspace(0.0, 1.0, size)
    if spec == "hamming":
        return DistortionMeasure.hamming(size)
    if spec == "abs":
        return DistortionMeasure.from_difference(grid, abs, name="abs")
    if spec == "sq":
        return DistortionMeasure.from_difference(grid, lambda d: d * d, name="sq")
    if spec.startswith("file:"):
        return DistortionMeasure(load_matrix(spec[5:]), name=spec)
    raise InputError(f"unknown distortion {spec!r}")


def _int_lists(text: str | None) -> list[tuple[int, ...]] | None:
    if text is None:
        return None
    try:
        return [tuple(int(v) for v in part.split(",")) for part in text.split(";") if part]
    except ValueError:
        raise InputError(f"expected ';'-separated lists of integers, got {text!r}") from None


def build_config(args, seed: int) -> SessionConfig:
    size = args.alphabet
    channel = args.channel or ("none" if args.variant == "quantizer" else "identity")
    rho = args.rho or ("sq" if args.variant == "quantizer" else "hamming")
    encs = _int_lists(args.encoders)
    return SessionConfig(
        variant=args.variant, channel=parse_channel(channel, size), M=args.M,
        rho=parse_rho(rho, size), encoders=None if encs is None else [canonicalize(e) for e in encs],
        length_sets=_int_lists(args.length_sets), lam=args.lam, delta=args.delta, seed=seed,
        block_length=args.block_length, eta=args.eta, verify_decoder=args.verify_decoder,
        with_oracle=args.oracle)


def cmd_simulate(args) -> int:
    configs = [build_config(args, args.seed + i) for i in range(args.seeds)]
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for cfg in configs:
            x = parse_source(args.source, args.n, cfg.size, stream(cfg.seed, "source"))
            m = run_session(x, cfg)
            writer.writerow(m.csv_row())
            if args.manifest_dir:
                d = Path(args.manifest_dir)
                d.mkdir(parents=True, exist_ok=True)
                write_manifest(d / f"run_{cfg.variant}_seed{cfg.seed}.txt", m, cfg)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_enumerate(args) -> int:
    if args.huffman:
        dag = build_huffman_graph(args.M, args.lam)
    elif args.intervals:
        dag = build_interval_graph(args.alphabet, args.M)
    else:
        dag = build_lc_graph(args.alphabet, args.M, args.lam)
    count = dag.count_paths()
    print(f"graph={dag.kind} vertices={dag.num_vertices} edges={dag.num_edges} paths={count}")
    if count <= args.limit:
        for p in dag.paths():
            parts = []
            if dag.kind in ("interval", "lc"):
                parts.append("cuts=" + ",".join(map(str, dag.path_cuts(p))))
            if dag.kind in ("huffman", "lc"):
                parts.append("lengths=" + ",".join(map(str, dag.path_lengths(p))))
            print(" ".join(parts))
    else:
        print(f"(more than {args.limit} paths; listing suppressed)")
    if args.export:
        Path(args.export).write_text(dag.export())
    return 0


def cmd_verify(args) -> int:
    names = args.suite or list(SUITES)
    results = run_suites(names, seed=args.seed, fault=args.inject_fault,
                         paths_max=args.paths_max, draws=args.draws)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


def _bench_once(variant: str, size: int, M: int, lam: int | None, n: int, seed: int) -> float:
    cfg = SessionConfig(variant, ChannelModel.symmetric(size, 0.1), M, lam=lam,
                        delta=0.5 if variant != "fixed-structured" else 0.0, seed=seed)
    x = stream(seed, "source").integers(0, size, size=n)
    t0 = time.perf_counter()
    run_session(x, cfg)
    return time.perf_counter() - t0


def bench_times(variant: str, size: int, M: int, lam: int | None, ns, repeats: int = 3,
                seed: int = 0) -> list[float]:
    """Best-of-``repeats`` wall time per horizon."""
    return [min(_bench_once(variant, size, M, lam, n, seed) for _ in range(repeats)) for n in ns]


def cmd_bench(args) -> int:
    if args.n_max <= 0:
        print("n=0: nothing to time")
        return 0
    ns, n = [], max(args.n_min, 1)
    while n <= args.n_max:
        ns.append(n)
        n *= 2
    times = bench_times(args.variant, args.alphabet, args.M, args.lam, ns, args.repeats, args.seed)
    ok = True
    print("n,seconds,ratio")
    for i, (n, t) in enumerate(zip(ns, times)):
        ratio = times[i] / times[i - 1] if i else float("nan")
        # very short runs are dominated by fixed overhead and timer noise
        flagged = i and times[i - 1] > 0.05 and ratio > args.max_ratio
        ok &= not flagged
        print(f"{n},{t:.6f},{ratio:.3f}{'  SLOW' if flagged else ''}")
    return 0 if ok else 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wzonline", allow_abbrev=False,
                                description="Online Wyner-Ziv coding experiments")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", allow_abbrev=False, help="run coding sessions over seeds")
    s.add_argument("--variant", choices=VARIANTS, required=True)
    s.add_argument("--alphabet", type=int, required=True, help="|X|")
    s.add_argument("--M", type=int, required=True, help="cells per encoder")
    s.add_argument("--n", type=int, required=True, help="horizon")
    s.add_argument("--channel", help="identity | bsc:<eps> | uniform | none | file:<path>")
    s.add_argument("--rho", help="hamming | abs | sq | file:<path>")
    s.add_argument("--source", default="iid", help="iid[:p,...] | markov:<file> | switching[:k] | file:<path>")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--lambda", dest="lam", type=int)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--encoders", help="explicit encoders, e.g. '0,0,1;0,1,1'")
    s.add_argument("--length-sets", help="e.g. '1,2,2;2,2,1'")
    s.add_argument("--block-length", type=int)
    s.add_argument("--eta", type=float)
    s.add_argument("--oracle", action="store_true", help="add oracle and regret columns")
    s.add_argument("--verify-decoder", action="store_true")
    s.add_argument("--csv", help="output file (default stdout)")
    s.add_argument("--manifest-dir")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("enumerate", allow_abbrev=False, help="inspect a graph")
    kind = e.add_mutually_exclusive_group(required=True)
    kind.add_argument("--huffman", action="store_true")
    kind.add_argument("--intervals", action="store_true")
    kind.add_argument("--lc", action="store_true")
    e.add_argument("--alphabet", type=int)
    e.add_argument("--M", type=int, required=True)
    e.add_argument("--lambda", dest="lam", type=int)
    e.add_argument("--limit", type=int, default=ENUMERATE_LIMIT)
    e.add_argument("--export", help="write the graph in text form")
    e.set_defaults(func=cmd_enumerate)

    v = sub.add_parser("verify", allow_abbrev=False, help="run the identity suites")
    v.add_argument("--suite", action="append", choices=SUITES)
    v.add_argument("--paths-max", type=int, default=200)
    v.add_argument("--draws", type=int, default=20_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", allow_abbrev=False, help="time sessions over doubling horizons")
    b.add_argument("--variant", choices=("fixed-structured", "variable-lc-graph"),
                   default="fixed-structured")
    b.add_argument("--alphabet", type=int, default=8)
    b.add_argument("--M", type=int, default=3)
    b.add_argument("--lambda", dest="lam", type=int)
    b.add_argument("--n-min", type=int, default=10_000)
    b.add_argument("--n-max", type=int, default=1_000_000)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--max-ratio", type=float, default=2.5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "enumerate":
        if (args.huffman or args.lc) and args.lam is None:
            parser.error("--lambda is required for this graph")
        if (args.intervals or args.lc) and args.alphabet is None:
            parser.error("--alphabet is required for this graph")
    try:
        return args.func(args)
    except (InputError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
