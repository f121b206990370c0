"""Command-line front end.

Subcommands: ``validate`` (check a DSL file), ``sample`` (draw programs and
optionally render DOT diagrams), ``train`` (fit parameters on a CSV
dataset), ``eval`` (held-out bound and posterior program frequencies) and
``distances`` (soft distance-to-destination table).

Exit codes: 0 success, 1 validation or configuration error, 2 sampling
error, 3 numerical abort.  Every command is deterministic given ``--seed``.
"""

from __future__ import annotations

import argparse
import hashlib
import re
import sys
from pathlib import Path

import numpy as np

from .category import (SpecError, UNIT, min_length_warnings, parse_spec,
                       signature, to_dot)
from .inference import (Baseline, NumericalAbort, TrainConfig, elbo,
                        init_store, structure_posterior, train)
from .model import load_checkpoint, save_checkpoint
from .numerics import make_rng
from .sampler import SamplerError, WalkConfig, path_between
from .transition import arrow_graph, intuitive_distance, transition_matrix


def _load_spec(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(1)
    try:
        return parse_spec(text)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(1)


def _walk_config(args):
    try:
        return WalkConfig(min_generators=args.min_generators,
                          max_steps=args.max_steps,
                          max_macro_depth=args.max_macro_depth)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(1)


def _weights(args, graph, rng):
    nv = len(graph.vertices)
    if args.w_fill is not None:
        return np.full((nv, nv), args.w_fill)
    return rng.gamma(1.0, 1.0, size=(nv, nv))


def _beta(args, rng):
    if args.beta is not None:
        return args.beta
    return float(rng.gamma(1.0, 1.0))


def cmd_validate(args):
    spec = _load_spec(args.spec)
    n_macros = len(spec.macros)
    n_gens = len(spec.generators) - n_macros
    for name in min_length_warnings(spec, args.min_generators):
        print(f"warning: every arrow out of {name} enters the data object; "
              f"walks via {name} cannot honor min_generators={args.min_generators}")
    print(f"{len(spec.objects)} objects, {n_gens} generators, "
          f"{n_macros} macros; OK")
    return 0


def _dot_filename(sig):
    safe = re.sub(r"\W+", "_", sig).strip("_")[:60]
    digest = hashlib.sha1(sig.encode()).hexdigest()[:8]
    return f"{safe}_{digest}.dot"


def cmd_sample(args):
    spec = _load_spec(args.spec)
    graph = arrow_graph(spec)
    cfg = _walk_config(args)
    rng = make_rng(args.seed, 0x5A)
    tm = transition_matrix(graph, _weights(args, graph, rng), _beta(args, rng))
    diagrams = {}
    try:
        for _ in range(args.count):
            m, trace = path_between(tm, UNIT, spec.data_object, cfg, rng)
            sig = signature(m)
            print(f"{sig}  logp={trace.total_path_logprob:.6f}")
            if args.dot and sig not in diagrams:
                diagrams[sig] = to_dot(m)
    except SamplerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.dot:
        out = Path(args.dot)
        out.mkdir(parents=True, exist_ok=True)
        for sig in sorted(diagrams):
            (out / _dot_filename(sig)).write_text(diagrams[sig])
    return 0


def _load_rows(path, spec):
    try:
        rows = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        print(f"error: cannot read dataset {path}: {e}", file=sys.stderr)
        raise SystemExit(1)
    want = spec.data_object.flat_dim
    if rows.shape[1] != want:
        print(f"error: dataset rows have {rows.shape[1]} columns, "
              f"data object needs {want}", file=sys.stderr)
        raise SystemExit(1)
    return rows


def _split(rows, seed):
    order = make_rng(seed, 0x59).permutation(len(rows))
    n_val = max(1, len(rows) // 10)
    return rows[order[n_val:]], rows[order[:n_val]]


def cmd_train(args):
    spec = _load_spec(args.spec)
    graph = arrow_graph(spec)
    cfg = _walk_config(args)
    rows = _load_rows(args.dataset, spec)
    train_rows, _ = _split(rows, args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       step_size=args.step_size,
                       n_elbo_samples=args.elbo_samples,
                       family=args.family, seed=args.seed)
    store = init_store(spec, graph, args.seed)
    try:
        store, metrics, step = train(train_rows, spec, graph, cfg, tcfg,
                                     store=store)
    except NumericalAbort as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", store, spec.content_hash(),
                    args.seed, step)
    (out / "metrics.tsv").write_text("".join(line + "\n" for line in metrics))
    print(f"wrote {out / 'checkpoint.json'} and {out / 'metrics.tsv'}")
    return 0


def cmd_eval(args):
    spec = _load_spec(args.spec)
    graph = arrow_graph(spec)
    cfg = _walk_config(args)
    store, spec_hash, ckpt_seed, _ = load_checkpoint(args.checkpoint)
    if spec_hash != spec.content_hash():
        print("error: checkpoint does not match this DSL declaration",
              file=sys.stderr)
        return 1
    rows = _load_rows(args.dataset, spec)
    _, val_rows = _split(rows, ckpt_seed)
    baseline = Baseline()
    values = []
    for i, row in enumerate(val_rows):
        est = elbo(row, store, spec, graph, cfg, args.elbo_samples,
                   make_rng(args.seed, 0xEA, i), family=args.family,
                   baseline=baseline)
        values.append(est.value)
    print(f"elbo\t{np.mean(values):.6f}")
    table = structure_posterior(val_rows, store, spec, graph, cfg,
                                args.samples, args.seed, family=args.family)
    for sig, freq in sorted(table.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"{freq:.6f}\t{sig}")
    return 0


def cmd_distances(args):
    spec = _load_spec(args.spec)
    graph = arrow_graph(spec)
    rng = make_rng(args.seed, 0xD1)
    tm = transition_matrix(graph, _weights(args, graph, rng), _beta(args, rng))
    dst = args.dst or spec.data_object.name
    try:
        d = intuitive_distance(tm, dst)
    except (KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"# distance to {dst}")
    for name, val in zip(graph.vertices, d):
        print(f"{name}\t{val:.6f}")
    return 0


def _add_common(p, walk=True):
    p.add_argument("--spec", required=True, help="DSL declaration file")
    p.add_argument("--seed", type=int, default=0)
    if walk:
        p.add_argument("--min-generators", type=int, default=2)
        p.add_argument("--max-steps", type=int, default=64)
        p.add_argument("--max-macro-depth", type=int, default=3)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="freecat",
        description="Sample, render, train and evaluate generative programs "
                    "drawn from a typed DSL graph.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a DSL declaration")
    _add_common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("sample", help="draw programs from the walk")
    _add_common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--beta", type=float, default=None,
                   help="inverse temperature; drawn from the hyperprior if unset")
    p.add_argument("--w-fill", type=float, default=None,
                   help="fill the weight matrix with a constant instead of a "
                        "hyperprior draw")
    p.add_argument("--dot", default=None,
                   help="directory for one DOT file per distinct program")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train", help="fit parameters on a CSV dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--elbo-samples", type=int, default=1)
    p.add_argument("--family", choices=("lognormal", "gamma"),
                   default="lognormal")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="held-out bound and program frequencies")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--elbo-samples", type=int, default=8)
    p.add_argument("--samples", type=int, default=1000,
                   help="proposal draws for the frequency table")
    p.add_argument("--family", choices=("lognormal", "gamma"),
                   default="lognormal")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("distances", help="print -log P[., dst] per vertex")
    _add_common(p, walk=False)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--w-fill", type=float, default=None)
    p.add_argument("--dst", default=None, help="defaults to the data object")
    p.set_defaults(fn=cmd_distances)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
