"""Command-line entry points.

Subcommands: synth (write a synthetic corpus), train (one regime from a
config file), eval (score a checkpoint on a split), decode (dump
predictions), oracle-check (verify the analytic training targets and the
search against brute force), report (tables and figures across runs).
Every run is fully determined by its config file and --seed.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import report as report_mod
from .config import load_config
from .data import load_corpus, save_jsonl, synth_generate
from .decoding import predict_dataset
from .metrics import METRIC_COLUMNS, evaluate, format_table
from .model import Model
from .oracle import check_q_equivalence
from .training import train

STRATEGIES = ("rnn", "br", "rescore", "joint")
REGIME_CHOICES = ("mle", "mle-ss", "order-free", "ocd", "ocd-mtl", "br-only")


def _dataset_from_config(cfg, synth_seed=None):
    if cfg.data is not None:
        paths = {"train": cfg.data.train, "val": cfg.data.val, "test": cfg.data.test}
        ds, vocab, space, _ = load_corpus(paths, max_words=cfg.data.max_words,
                                          vocab_cap=cfg.data.vocab_cap or None)
        return ds, vocab, space
    spec = cfg.synth
    if synth_seed is not None:
        spec = dataclasses.replace(spec, seed=synth_seed)
    return synth_generate(spec)


def _load_model(cfg, vocab, space, ckpt=None, seed=0):
    model = Model(cfg.model_config(len(vocab), space.num_labels),
                  init_rng=np.random.default_rng([seed, 0]))
    if ckpt is not None:
        model.load(ckpt)
    model.eval_mode()
    return model


def _split_or_die(dataset, name):
    if name not in dataset.splits:
        raise ValueError(f"split {name!r} not in dataset; available: "
                         f"{', '.join(sorted(dataset.splits))}")
    return dataset[name]


def cmd_synth(args):
    cfg = load_config(args.config)
    ds, vocab, space = _dataset_from_config(cfg, synth_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for split, insts in ds.splits.items():
        save_jsonl(os.path.join(args.out, f"{split}.jsonl"), insts, vocab, space)
    print(f"wrote {sum(len(v) for v in ds.splits.values())} instances "
          f"across {len(ds.splits)} splits to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    tcfg = cfg.train
    if args.regime:
        tcfg = dataclasses.replace(tcfg, regime=args.regime)
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    if args.beam is not None:
        tcfg = dataclasses.replace(tcfg, beam=args.beam)
    ds, vocab, space = _dataset_from_config(cfg)
    model = _load_model(cfg, vocab, space, seed=tcfg.seed)
    state = train(ds, space, model, tcfg, args.out)
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump({"regime": tcfg.regime, "seed": tcfg.seed,
                   "updates": state.updates, "best_val_mif1": state.best_mif1},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {tcfg.regime} for {state.updates} updates; "
          f"best validation micro-F1 {state.best_mif1:.4f}; "
          f"checkpoint at {state.best_path}")
    return 0


def _predict_with_strategy(args, cfg, ds, vocab, space, model):
    instances = _split_or_die(ds, args.split)
    threshold = 0.5
    if args.strategy == "br":
        val = ds.splits.get("val") or instances
        threshold = report_mod.resolve_threshold(model, val, space.num_labels,
                                                 args.threshold)
    width = args.beam if args.beam is not None else cfg.train.beam
    return predict_dataset(model, instances, args.strategy,
                           width=width, threshold=threshold)


def cmd_eval(args):
    cfg = load_config(args.config)
    ds, vocab, space = _dataset_from_config(cfg)
    model = _load_model(cfg, vocab, space, ckpt=args.ckpt)
    preds = _predict_with_strategy(args, cfg, ds, vocab, space, model)
    rep = evaluate([p["gold"] for p in preds], [p["pred"] for p in preds],
                   space.num_labels)
    name = os.path.basename(os.path.dirname(os.path.abspath(args.ckpt)))
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "metrics.csv")
    new_file = not os.path.exists(out_path)
    with open(out_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["model", "strategy", "split", *METRIC_COLUMNS])
        writer.writerow([name, args.strategy, args.split,
                         *(f"{v:.6f}" for v in rep.as_row())])
    print(format_table(
        [[name, args.strategy, args.split, *(f"{v:.4f}" for v in rep.as_row())]],
        ["model", "strategy", "split", *METRIC_COLUMNS]))
    return 0


def cmd_decode(args):
    cfg = load_config(args.config)
    ds, vocab, space = _dataset_from_config(cfg)
    model = _load_model(cfg, vocab, space, ckpt=args.ckpt)
    preds = _predict_with_strategy(args, cfg, ds, vocab, space, model)
    names = space.names()
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "preds.jsonl")
    with open(out_path, "w") as fh:
        for p in preds:
            fh.write(json.dumps({
                "id": p["uid"],
                "gold": [names[i] for i in sorted(p["gold"])],
                "pred": [names[i] for i in sorted(p["pred"])],
                "log_path": None if p["seq"] is None else p["log_path"],
                "log_joint": None if p["seq"] is None else p["log_joint"],
                "strategy": args.strategy,
            }) + "\n")
    print(f"wrote {len(preds)} predictions to {out_path}")
    return 0


def cmd_oracle_check(args):
    checked, mismatch = check_q_equivalence(args.cases, seed=args.seed or 0,
                                            max_labels=args.max_l)
    if mismatch:
        print(f"FAIL after {checked} action checks: {mismatch}", file=sys.stderr)
        return 1
    print(f"oracle-check passed: {args.cases} cases, {checked} action values, "
          f"analytic == brute force and reward/example-F1 argmax sets agree")
    return 0


def cmd_report(args):
    cfg = load_config(args.config)
    ds, vocab, space = _dataset_from_config(cfg)
    runs = [report_mod.load_run(d) for d in args.runs]
    rows = report_mod.build_report(
        runs, ds, vocab, space, cfg.model_config, args.out,
        beam=args.beam if args.beam is not None else cfg.train.beam,
        threshold_mode=args.threshold,
    )
    print(report_mod.metrics_table(rows))
    print(f"report written to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqmlc",
        description="Order-free multi-label sequence classification toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", required=out_required, default=".",
                       help="output directory")

    p = sub.add_parser("synth", help="generate the synthetic corpus as JSONL files")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one regime and keep the best checkpoint")
    common(p)
    p.add_argument("--regime", choices=REGIME_CHOICES, default=None)
    p.add_argument("--beam", type=int, default=None, help="validation beam width")
    p.set_defaults(func=cmd_train)

    for name, fn in (("eval", cmd_eval), ("decode", cmd_decode)):
        p = sub.add_parser(name, help=f"{name} a checkpoint on one split")
        common(p)
        p.add_argument("--ckpt", required=True, help="checkpoint file")
        p.add_argument("--split", default="test_seen")
        p.add_argument("--strategy", choices=STRATEGIES, default="rnn")
        p.add_argument("--beam", type=int, default=None)
        p.add_argument("--threshold", choices=("tuned", "0.5"), default="tuned",
                       help="relevance-head threshold mode (br strategy)")
        p.set_defaults(func=fn)

    p = sub.add_parser("oracle-check",
                       help="verify analytic action values against brute force")
    p.add_argument("--max-l", type=int, default=5)
    p.add_argument("--cases", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="tables and figures for trained runs")
    common(p)
    p.add_argument("runs", nargs="+", help="training run directories")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--threshold", choices=("tuned", "0.5"), default="tuned")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
