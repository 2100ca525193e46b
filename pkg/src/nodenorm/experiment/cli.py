"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..data import convert_citation_files, generate_sbm, load_bundle, save_bundle
from ..diagnostics import correlation_frobenius, lipschitz_from_outputs, lipschitz_mode, node_variance, variance_bins
from ..errors import ConfigError, DataError
from ..models import forward
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_variant
from .reports import emit_reports, jsonable
from .runner import sweep, train_model

log = logging.getLogger("nodenorm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_int_list(text: str) -> list[int]:
    """``"2,4,8"`` or an inclusive range ``"0..9"`` (the two forms may be mixed)."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return out


def cmd_train(args) -> int:
    config = RunConfig.load(args.config, args.set)
    record, model, _ = train_model(config)
    out = Path(args.out)
    emit_reports([record], out, figures=not args.no_figures)
    save_checkpoint(model, out / "model.ckpt")
    print(f"test_acc={record.test_acc!r} epochs={len(record.history.train_loss)} out={out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = RunConfig.load(args.config, args.set)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        parse_variant(v)
    records = sweep(base, parse_int_list(args.depths), parse_int_list(args.seeds), variants, workers=args.workers)
    emit_reports(records, args.out, figures=not args.no_figures)
    failed = sum(not r.ok for r in records)
    print(f"runs={len(records)} failed={failed} out={args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_bundle(args.dataset)
    X, adj = ds.features, ds.propagation
    logits, hidden = forward(model, X, adj, training=False)
    hidden = [h.data for h in hidden]
    variances = [node_variance(h) for h in hidden]
    with np.errstate(divide="ignore"):
        logs = [np.log10(v) for v in variances]

    nodes = np.flatnonzero(ds.mask("test")) if ds.splits is not None else np.flatnonzero(ds.labels >= 0)
    correct = np.argmax(logits.data[nodes], axis=1) == ds.labels[nodes]
    report = {
        "checkpoint": str(args.checkpoint),
        "dataset": ds.name,
        "eval_nodes": "test split" if ds.splits is not None else "all labeled nodes",
        "accuracy": float(correct.mean()) if nodes.size else None,
        "variance": {"layer_indices": list(range(1, len(hidden) + 1)),
                     "max_log10": [float(v.max()) for v in logs],
                     "median_log10": [float(np.median(v)) for v in logs]},
        "correlation": {"per_layer": [correlation_frobenius(h) for h in hidden], "diagonal_included": True},
    }
    rng = np.random.default_rng(args.seed)
    report["lipschitz"] = {"value": lipschitz_from_outputs(X, logits.data, args.pair_limit, rng),
                           "mode": lipschitz_mode(ds.n, args.pair_limit)}
    if args.shallow_checkpoint:
        shallow = load_checkpoint(args.shallow_checkpoint)
        s_logits, _ = forward(shallow, X, adj, training=False)
        s_correct = np.argmax(s_logits.data[nodes], axis=1) == ds.labels[nodes]
        bins = variance_bins(variances[-2][nodes], correct, s_correct)
        report["bins"] = {"acc_shallow": bins.acc_shallow.tolist(), "acc_deep": bins.acc_deep.tolist(),
                          "gap": bins.gap.tolist(), "sizes": [int(b.size) for b in bins.bins]}
    else:
        report["bins"] = None  # needs a shallow reference model

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.json").write_text(json.dumps(jsonable(report), indent=2) + "\n", encoding="utf-8")
    print(f"lipschitz={report['lipschitz']['value']!r} out={out}")
    return EXIT_OK


def cmd_gen_sbm(args) -> int:
    ds = generate_sbm(args.blocks, args.nodes_per_block, args.p_in, args.p_out,
                      feature_dim=args.feature_dim, feature_noise=args.feature_noise,
                      rng=np.random.default_rng(args.seed))
    save_bundle(ds, args.out)
    print(f"n={ds.n} edges={len(ds.edges)} out={args.out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    ds = convert_citation_files(args.content, args.cites, name=args.name)
    save_bundle(ds, args.out)
    print(f"n={ds.n} edges={len(ds.edges)} d={ds.d} classes={ds.num_classes} out={args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nodenorm", description="Train and diagnose deep GCNs with node-wise normalization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--config", required=True)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--out", required=True)
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train every (variant, depth, seed) combination")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--depths", required=True, help="e.g. 2,4,8,16,32,64")
    s.add_argument("--seeds", required=True, help="e.g. 0..9 or 0,1,2")
    s.add_argument("--variants", required=True, help="comma-separated variant names")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("diagnose", help="variance profile, Lipschitz constant, correlation and bins")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--dataset", required=True, help="bundle directory")
    d.add_argument("--out", required=True)
    d.add_argument("--shallow-checkpoint", help="reference model for the variance-bin comparison")
    d.add_argument("--pair-limit", type=int)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_diagnose)

    g = sub.add_parser("gen-sbm", help="write a stochastic block model bundle")
    g.add_argument("--blocks", type=int, required=True)
    g.add_argument("--nodes-per-block", type=int, required=True)
    g.add_argument("--p-in", type=float, required=True)
    g.add_argument("--p-out", type=float, required=True)
    g.add_argument("--feature-dim", type=int)
    g.add_argument("--feature-noise", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_sbm)

    c = sub.add_parser("convert-citation", help="convert <name>.content / <name>.cites files to a bundle")
    c.add_argument("--content", required=True)
    c.add_argument("--cites", required=True)
    c.add_argument("--name", default="cora")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
