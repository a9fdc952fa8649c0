"""Command line entry point: ``prespec <subcommand> ...``.

Every run writes its artifacts plus ``manifest.json`` into ``--out-dir``.
The manifest records the arguments, input digests and output digests, and
``prespec replay manifest.json --out-dir DIR`` re-executes it and checks
that every artifact comes out byte-identical.

Exit codes: 0 ok, 1 replay mismatch or internal error, 2 usage,
3 input format, 4 non-convergence (``--strict`` only).
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import compare_models
from .core import row_normalize
from .errors import IngestError, NonConvergenceError, PrespecError
from .ingest import FrameConfig, TokenizerConfig, frame_signal, read_edge_stream, read_signal, read_text
from .markov import (
    DANGLING_POLICIES as WALK_POLICIES,
    ChainConfig,
    MarkovChain,
    build_chain,
    build_context_profiles,
    load_chain,
    most_similar,
    simulate,
)
from .rank import DANGLING_POLICIES as RANK_POLICIES
from .rank import DampingConfig, google_matrix, power_iteration, rank_report
from .som import (
    SomConfig,
    encode,
    index_sequence,
    init_grid,
    load_grid,
    quantization_error,
    reconstruct,
    symbolic_chain,
    topographic_error,
    train,
    u_matrix,
)

MANIFEST = "manifest.json"


class UsageError(PrespecError):
    code = "USAGE"
    exit_code = 2


class ReplayMismatch(PrespecError):
    code = "REPLAY_MISMATCH"
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects outputs of one command and writes the manifest."""

    def __init__(self, args):
        self.args = args
        self.out_dir = args.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def write_json(self, name, data):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, ensure_ascii=False)
            fh.write("\n")

    def write_table(self, stem, header, rows, delimiter=","):
        """CSV/TSV by default; a JSON table with ``--format json``."""
        if self.args.format == "json":
            self.write_json(
                f"{stem}.json",
                {"columns": header, "rows": [[_plain(v) for v in r] for r in rows]},
            )
            return
        ext = "tsv" if delimiter == "\t" else "csv"
        with open(self.path(f"{stem}.{ext}"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])

    def finish(self):
        inputs = {p: sha256_file(p) for p in self.args.inputs}
        outputs = {name: sha256_file(os.path.join(self.out_dir, name)) for name in self.outputs}
        manifest = {
            "format": "prespec/manifest/1",
            "command": self.args.command,
            "tool_version": __version__,
            "seed": self.args.seed,
            "argv": self.args.canonical_argv,
            "config": _config_echo(self.args),
            "inputs": inputs,
            "outputs": outputs,
        }
        with open(os.path.join(self.out_dir, MANIFEST), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        return manifest


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


_PRIVATE = {"func", "out_dir", "inputs", "canonical_argv", "input_args"}


def _config_echo(args):
    return {k: _plain(v) for k, v in sorted(vars(args).items()) if k not in _PRIVATE}


# -- commands ---------------------------------------------------------------


def cmd_markov(args, run):
    if args.edges:
        if args.order != 1:
            raise UsageError("edge input builds order-1 chains only")
        seq, counts = read_edge_stream(args.input)
        tail = (int(seq.ids[-1]),) if len(seq) else ()
        chain = MarkovChain.from_counts(seq.alphabet, counts, args.smoothing, tail)
        report = {"format": "prespec/ingest_report/1", "edges": counts.total(), "walk_length": len(seq)}
    else:
        cfg = TokenizerConfig(
            mode=args.mode,
            lowercase=args.lowercase,
            strip_non_letters=args.strip,
            letters=args.letters,
        )
        seq, rep = read_text(args.input, cfg)
        chain = build_chain(seq, ChainConfig(args.order, args.smoothing))
        report = rep.to_dict()
        report["sequence_length"] = len(seq)
    run.write_json("chain.json", chain.to_dict())
    alphabet = seq.alphabet
    profiles = build_context_profiles(seq, args.window)
    rows = []
    for prof in profiles:
        for off in prof.offsets:
            for ctx, p in prof.distribution(off).items():
                rows.append([alphabet[prof.symbol], off, alphabet[ctx], p])
    run.write_table("profiles", ["word", "offset", "context_word", "prob"], rows)
    sims = [
        [alphabet[a], alphabet[b], r, s] for a, b, r, s in most_similar(profiles, args.top_k)
    ]
    run.write_table("similarity", ["word", "neighbor", "rank", "similarity"], sims, "\t")
    run.write_json("ingest_report.json", report)


def _load_rank_input(args):
    path = args.input
    if not args.edges and path.endswith(".json"):
        chain = load_chain(path)
        return chain.matrix, chain.state_labels()
    seq, counts = read_edge_stream(path)
    return row_normalize(counts), list(seq.alphabet.symbols)


def cmd_rank(args, run):
    H, labels = _load_rank_input(args)
    damping = DampingConfig(d=args.damping, dangling_policy=args.dangling)
    result = power_iteration(google_matrix(H, damping), args.tol, args.max_iter)
    entries = rank_report(result, labels, args.top_k)
    run.write_table(
        "rank", ["rank", "symbol", "score"], [[e.rank, e.label, e.score] for e in entries], "\t"
    )
    run.write_json(
        "convergence.json",
        {
            "format": "prespec/convergence/1",
            "n": H.n,
            "converged": result.converged,
            "iterations": result.iterations,
            "final_residual": result.final_residual,
            "tol": args.tol,
            "max_iter": args.max_iter,
            "damping": damping.to_dict(),
        },
    )
    if args.strict and not result.converged:
        run.finish()
        raise NonConvergenceError(
            f"power iteration stopped after {result.iterations} iterations "
            f"with residual {result.final_residual:.3g}"
        )


def _frame_cfg(args, default_len=None):
    frame_len = args.frame_len or default_len
    if not frame_len:
        raise UsageError("--frame-len is required")
    args.normalize = args.normalize or "none"
    return FrameConfig(frame_len, args.hop or frame_len, args.normalize)


def cmd_som_train(args, run):
    signal = read_signal(args.input)
    fcfg = _frame_cfg(args)
    frames = frame_signal(signal, fcfg)
    cfg = SomConfig(
        grid_w=args.grid_w,
        grid_h=args.grid_h,
        dim=fcfg.frame_len,
        epochs=args.epochs,
        lr_start=args.lr_start,
        lr_end=args.lr_end,
        radius_start=args.radius_start,
        radius_end=args.radius_end,
        seed=args.seed,
        mode=args.mode,
    )
    grid0 = init_grid(cfg, frames)
    grid = train(grid0, frames, cfg)
    doc = grid.to_dict()
    doc["frame_config"] = fcfg.to_dict()
    run.write_json("codebook.json", doc)
    run.write_json(
        "metrics.json",
        {
            "format": "prespec/som_metrics/1",
            "n_frames": len(frames),
            "dropped_frames": frames.report.dropped_frames,
            "qe_init": quantization_error(grid0, frames),
            "qe": quantization_error(grid, frames),
            "te": topographic_error(grid, frames) if grid.n_nodes > 1 else None,
        },
    )
    umat = u_matrix(grid)
    run.write_table(
        "umatrix", ["row"] + [f"c{c}" for c in range(grid.w)],
        [[r] + [float(v) for v in vals] for r, vals in enumerate(umat)],
    )


def _codebook(args):
    grid = load_grid(args.codebook)
    with open(args.codebook, encoding="utf-8") as fh:
        stored = json.load(fh).get("frame_config") or {}
    if args.frame_len is None and stored:
        args.hop = args.hop or stored.get("hop")
        args.normalize = args.normalize or stored.get("normalize", "none")
    return grid, _frame_cfg(args, grid.dim)


def cmd_encode(args, run):
    grid, fcfg = _codebook(args)
    enc = encode(grid, read_signal(args.input), fcfg)
    run.write_table(
        "encoding", ["frame_offset", "flat_index"],
        [[int(o), int(i)] for o, i in zip(enc.offsets, enc.indexes)],
    )
    run.write_json("chain.json", symbolic_chain(enc, args.order).to_dict())
    run.write_table("indexes", ["symbol"], [[s] for s in index_sequence(enc).symbols()])
    if fcfg.hop <= fcfg.frame_len:
        run.write_table(
            "reconstruction", ["t", "value"],
            [[t, float(v)] for t, v in enumerate(reconstruct(enc))],
        )


def cmd_compare(args, run):
    grid, fcfg = _codebook(args)
    try:
        terms = [int(t) for t in args.terms.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--terms must be comma-separated integers, got {args.terms!r}") from None
    signal_id = os.path.splitext(os.path.basename(args.input))[0]
    report = compare_models(read_signal(args.input), grid, fcfg, terms, signal_id)
    run.write_json("comparison.json", report.to_dict())
    run.write_table(
        "comparison", ["model", "dof", "rmse"],
        [[m["model"], m["dof"], m["rmse"]] for m in report.models],
    )


def cmd_simulate(args, run):
    chain = load_chain(args.input)
    start = args.start if args.start is not None else chain.state_symbols(0)
    out = simulate(chain, start, args.steps, seed=args.seed, policy=args.policy)
    run.write_table("simulation", ["step", "symbol"], list(enumerate(out.symbols(), start=1)))


def cmd_replay(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "prespec/manifest/1":
        raise IngestError("not a prespec manifest", source=args.manifest)
    for path, digest in manifest["inputs"].items():
        if not os.path.exists(path) or sha256_file(path) != digest:
            raise ReplayMismatch(f"input {path} is missing or has changed")
    code = main(list(manifest["argv"]) + ["--out-dir", args.out_dir])
    if code != 0:
        return code
    bad = [
        name
        for name, digest in manifest["outputs"].items()
        if sha256_file(os.path.join(args.out_dir, name)) != digest
    ]
    if bad:
        raise ReplayMismatch("artifacts differ: " + ", ".join(sorted(bad)))
    print(f"replay ok: {len(manifest['outputs'])} artifacts identical")
    return 0


# -- parser -----------------------------------------------------------------


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    p.add_argument("--out-dir", default=".", help="directory for artifacts")
    p.add_argument("--format", choices=("json", "csv"), default="csv",
                   help="format of tabular artifacts")
    p.add_argument("--strict", action="store_true",
                   help="exit with status 4 when iteration does not converge")
    return p


def _frame_args(p):
    p.add_argument("--frame-len", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--normalize", choices=("none", "zscore"))


def build_parser():
    common = _common()
    parser = _Parser(prog="prespec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"prespec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("markov", parents=[common], help="chain + context profiles from text or edges")
    p.add_argument("input")
    p.add_argument("--edges", action="store_true", help="input is a from,to[,weight] CSV")
    p.add_argument("--mode", choices=("char", "word", "edge"), default="char")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--strip", action="store_true", help="drop non-letters (char mode)")
    p.add_argument("--letters", help="explicit letter whitelist for --strip")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=cmd_markov, input_args=("input",))

    p = sub.add_parser("rank", parents=[common], help="damped eigenvector ranking")
    p.add_argument("input", help="chain JSON or edge CSV")
    p.add_argument("--edges", action="store_true")
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--dangling", choices=RANK_POLICIES, default="uniform-teleport")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_rank, input_args=("input",))

    p = sub.add_parser("som-train", parents=[common], help="train a SOM codebook on signal frames")
    p.add_argument("input", help="one-column CSV signal")
    _frame_args(p)
    p.add_argument("--grid-w", type=int, default=4)
    p.add_argument("--grid-h", type=int, default=4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr-start", type=float, default=0.5)
    p.add_argument("--lr-end", type=float, default=0.01)
    p.add_argument("--radius-start", type=float)
    p.add_argument("--radius-end", type=float, default=1.0)
    p.add_argument("--mode", choices=("online", "batch"), default="online")
    p.set_defaults(func=cmd_som_train, input_args=("input",))

    p = sub.add_parser("encode", parents=[common], help="signal -> codebook indexes -> chain")
    p.add_argument("input", help="one-column CSV signal")
    p.add_argument("--codebook", required=True)
    _frame_args(p)
    p.add_argument("--order", type=int, default=1)
    p.set_defaults(func=cmd_encode, input_args=("input", "codebook"))

    p = sub.add_parser("compare", parents=[common], help="codebook vs Fourier reconstruction error")
    p.add_argument("input", help="one-column CSV signal")
    p.add_argument("--codebook", required=True)
    _frame_args(p)
    p.add_argument("--terms", default="1,2,4,8")
    p.set_defaults(func=cmd_compare, input_args=("input", "codebook"))

    p = sub.add_parser("simulate", parents=[common], help="random walk on a chain")
    p.add_argument("input", help="chain JSON")
    p.add_argument("--start", help="start state (defaults to the first state)")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--policy", choices=WALK_POLICIES, default="halt")
    p.set_defaults(func=cmd_simulate, input_args=("input",))

    p = sub.add_parser("replay", help="re-run a manifest and verify identical artifacts")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=None)
    return parser


def _canonical_argv(argv, args):
    """argv with ``--out-dir`` removed and input paths made absolute."""
    inputs = {getattr(args, name) for name in args.input_args}
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out-dir":
            skip = True
            continue
        if tok.startswith("--out-dir="):
            continue
        out.append(os.path.abspath(tok) if tok in inputs else tok)
    return out


def run_command(argv):
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return cmd_replay(args)
    args.canonical_argv = _canonical_argv(argv, args)
    for name in args.input_args:
        setattr(args, name, os.path.abspath(getattr(args, name)))
    args.inputs = [getattr(args, name) for name in args.input_args]
    for path in args.inputs:
        if not os.path.isfile(path):
            raise IngestError("no such file", source=path)
    run = Run(args)
    args.func(args, run)
    run.finish()
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run_command(argv)
    except PrespecError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.code}]: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[INPUT_FORMAT]: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())
