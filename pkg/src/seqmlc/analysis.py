"""Dataset-level analyses: label-combination novelty, position-wise accuracy
of sequence outputs, and example-F1 grouped by how often the gold combination
occurred in training."""

from collections import Counter

from .metrics import example_f1

DEFAULT_BUCKETS = ((0, 0), (1, 5), (6, 20), (21, None))


def combination_stats(label_sets, train_label_sets):
    """(distinct combinations, distinct combinations absent from training)."""
    distinct = {frozenset(s) for s in label_sets}
    train = {frozenset(s) for s in train_label_sets}
    novel = {s for s in distinct if s not in train}
    return len(distinct), len(novel)


def positionwise_accuracy(pred_seqs, gold_sets):
    """Fraction of instances whose step-t emission is a gold label.

    The horizon of an instance is max(len(prediction), len(gold)); positions
    the prediction never filled count as wrong. Position t averages over the
    instances whose horizon covers t. Returns a list indexed by position.
    """
    if len(pred_seqs) != len(gold_sets):
        raise ValueError("prediction/gold length mismatch")
    horizon = 0
    for seq, gold in zip(pred_seqs, gold_sets):
        horizon = max(horizon, len(seq), len(gold))
    correct = [0] * horizon
    total = [0] * horizon
    for seq, gold in zip(pred_seqs, gold_sets):
        gold = set(gold)
        for t in range(max(len(seq), len(gold))):
            total[t] += 1
            if t < len(seq) and seq[t] in gold:
                correct[t] += 1
    return [c / n if n else 0.0 for c, n in zip(correct, total)]


def combination_frequencies(train_label_sets):
    return Counter(frozenset(s) for s in train_label_sets)


def ebf1_vs_frequency(preds, golds, train_label_sets, buckets=DEFAULT_BUCKETS):
    """Mean example-F1 per bucket of training-combination frequency.

    Bucket (lo, hi) covers counts lo..hi inclusive; hi None means unbounded.
    Returns a list of (label, count, mean ebF1 or None for empty buckets).
    """
    freq = combination_frequencies(train_label_sets)
    rows = []
    for lo, hi in buckets:
        members = []
        for pred, gold in zip(preds, golds):
            n = freq[frozenset(gold)]
            if n >= lo and (hi is None or n <= hi):
                members.append((pred, gold))
        label = f"{lo}+" if hi is None else (str(lo) if lo == hi else f"{lo}-{hi}")
        if members:
            score = example_f1([g for _, g in members], [p for p, _ in members])
            rows.append((label, len(members), score))
        else:
            rows.append((label, 0, None))
    return rows
