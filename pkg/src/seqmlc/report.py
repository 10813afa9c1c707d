"""Experiment report assembly: metrics tables, combination statistics,
position-wise accuracy, frequency-bucketed example-F1, and figures."""

import csv
import json
import os

from . import plots
from .analysis import combination_stats, ebf1_vs_frequency, positionwise_accuracy
from .decoding import predict_dataset, tune_threshold
from .metrics import METRIC_COLUMNS, evaluate, format_table
from .model import Model

SEQUENCE_STRATEGIES = ("rnn", "rescore", "joint")


def strategies_for(regime):
    if regime == "br-only":
        return ("br",)
    if regime == "ocd-mtl":
        return ("rnn", "br", "rescore", "joint")
    return ("rnn",)


def resolve_threshold(model, instances, num_labels, mode):
    """A fixed 0.5 threshold or one tuned on the given instances by micro-F1."""
    if mode == "0.5":
        return 0.5
    if mode != "tuned":
        raise ValueError(f"unknown threshold mode {mode!r}")
    from . import autodiff as ad

    yhats, golds = [], []
    with ad.no_grad():
        for inst in instances:
            enc = model.encode(inst.tokens)
            yhats.append(model.br_forward(enc).data)
            golds.append(inst.labels)
    return tune_threshold(yhats, golds, num_labels)


def load_run(run_dir):
    """Read a training run directory: run.json metadata plus curve rows."""
    with open(os.path.join(run_dir, "run.json")) as fh:
        meta = json.load(fh)
    curve = []
    curve_path = os.path.join(run_dir, "curve.csv")
    if os.path.exists(curve_path):
        with open(curve_path) as fh:
            for row in csv.DictReader(fh):
                curve.append((int(row["update"]), float(row["loss"]),
                              float(row["val_mif1"]), float(row["val_ebf1"])))
    meta["curve"] = curve
    meta["ckpt"] = os.path.join(run_dir, "best.ckpt")
    return meta


def write_metrics_csv(path, rows):
    """rows: (model, strategy, split, MetricsReport)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "strategy", "split", *METRIC_COLUMNS])
        for model_name, strategy, split, rep in rows:
            writer.writerow([model_name, strategy, split,
                             *(f"{v:.6f}" for v in rep.as_row())])


def metrics_table(rows):
    table = [[m, s, sp, *(f"{v:.4f}" for v in rep.as_row())]
             for m, s, sp, rep in rows]
    return format_table(table, ["model", "strategy", "split", *METRIC_COLUMNS])


def build_report(runs, dataset, vocab, space, model_cfg_fn, out_dir,
                 beam=6, threshold_mode="tuned"):
    """Evaluate each trained run on the test splits and write the report
    artifacts (CSV tables plus rendered figures) into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    test_splits = [s for s in ("test_seen", "test_unseen", "test") if s in dataset.splits]
    if not test_splits:
        raise ValueError("dataset has no test split")
    train_sets = [inst.labels for inst in dataset["train"]]
    all_test = [inst for s in test_splits for inst in dataset[s]]

    metric_rows = []
    combo_rows = []
    poswise = {}
    buckets = {}
    curves = {}

    for split in test_splits:
        golds = [inst.labels for inst in dataset[split]]
        s_test, s_novel = combination_stats(golds, train_sets)
        combo_rows.append(("reference", "-", split, s_test, s_novel))

    for meta in runs:
        name = meta["regime"]
        model = Model(model_cfg_fn(len(vocab), space.num_labels))
        model.load(meta["ckpt"])
        model.eval_mode()
        if meta["curve"]:
            curves[name] = meta["curve"]
        threshold = 0.5
        if "br" in strategies_for(name):
            threshold = resolve_threshold(model, dataset.splits.get("val", all_test),
                                          space.num_labels, threshold_mode)
        for strategy in strategies_for(name):
            split_preds = {}
            for split in test_splits:
                preds = predict_dataset(model, dataset[split], strategy,
                                        width=beam, threshold=threshold)
                split_preds[split] = preds
                golds = [p["gold"] for p in preds]
                sets = [p["pred"] for p in preds]
                metric_rows.append((name, strategy, split,
                                    evaluate(golds, sets, space.num_labels)))
                s_test, s_novel = combination_stats(sets, train_sets)
                combo_rows.append((name, strategy, split, s_test, s_novel))
            combined = [p for split in test_splits for p in split_preds[split]]
            tag = name if strategy == "rnn" else f"{name}/{strategy}"
            if strategy in SEQUENCE_STRATEGIES:
                poswise[tag] = positionwise_accuracy(
                    [p["seq"] for p in combined], [p["gold"] for p in combined])
            buckets[tag] = ebf1_vs_frequency(
                [p["pred"] for p in combined], [p["gold"] for p in combined], train_sets)

    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metric_rows)
    with open(os.path.join(out_dir, "metrics.txt"), "w") as fh:
        fh.write(metrics_table(metric_rows) + "\n")

    with open(os.path.join(out_dir, "combos.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "strategy", "split", "s_test", "s_test_train"])
        for row in combo_rows:
            writer.writerow(row)

    with open(os.path.join(out_dir, "poswise.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "position", "accuracy"])
        for name in sorted(poswise):
            for t, acc in enumerate(poswise[name], start=1):
                writer.writerow([name, t, f"{acc:.6f}"])

    with open(os.path.join(out_dir, "ebf1_freq.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "bucket", "instances", "mean_ebf1"])
        for name in sorted(buckets):
            for label, count, score in buckets[name]:
                writer.writerow([name, label, count,
                                 "" if score is None else f"{score:.6f}"])

    if curves:
        plots.training_curves(curves, os.path.join(out_dir, "curve.png"))
    if poswise:
        plots.positionwise(poswise, os.path.join(out_dir, "poswise.png"))
    if buckets:
        plots.ebf1_buckets(buckets, os.path.join(out_dir, "ebf1_freq.png"))
    return metric_rows
