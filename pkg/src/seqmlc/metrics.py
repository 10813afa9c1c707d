"""The five evaluation measures over predicted and gold label sets.

Zero-denominator conventions: a label with no positives on either side
contributes 0 to macro-F1; an instance where both sets are empty scores an
example-F1 of 1 (gold sets are never empty in practice). The eos action
never enters any metric.
"""

from dataclasses import dataclass


@dataclass
class ConfusionCounts:
    tp: list
    fp: list
    fn: list

    @property
    def num_labels(self):
        return len(self.tp)


@dataclass
class MetricsReport:
    acc: float
    ha: float
    ebf1: float
    maf1: float
    mif1: float

    @property
    def average(self):
        return (self.acc + self.ha + self.ebf1 + self.maf1 + self.mif1) / 5.0

    def as_row(self):
        return [self.acc, self.ha, self.ebf1, self.maf1, self.mif1, self.average]


def _check_lengths(golds, preds):
    if len(golds) != len(preds):
        raise ValueError(f"{len(golds)} gold sets vs {len(preds)} predictions")
    if not golds:
        raise ValueError("cannot score an empty dataset")


def subset_accuracy(golds, preds):
    _check_lengths(golds, preds)
    return sum(set(g) == set(p) for g, p in zip(golds, preds)) / len(golds)


def hamming_accuracy(golds, preds, num_labels):
    _check_lengths(golds, preds)
    total = 0.0
    for g, p in zip(golds, preds):
        g, p = set(g), set(p)
        agree = sum((i in g) == (i in p) for i in range(num_labels))
        total += agree / num_labels
    return total / len(golds)


def example_f1(golds, preds):
    _check_lengths(golds, preds)
    total = 0.0
    for g, p in zip(golds, preds):
        g, p = set(g), set(p)
        denom = len(g) + len(p)
        total += 2.0 * len(g & p) / denom if denom else 1.0
    return total / len(golds)


def confusion_counts(golds, preds, num_labels):
    _check_lengths(golds, preds)
    tp = [0] * num_labels
    fp = [0] * num_labels
    fn = [0] * num_labels
    for g, p in zip(golds, preds):
        g, p = set(g), set(p)
        for lab in p & g:
            tp[lab] += 1
        for lab in p - g:
            fp[lab] += 1
        for lab in g - p:
            fn[lab] += 1
    return ConfusionCounts(tp, fp, fn)


def macro_f1(counts):
    total = 0.0
    for tp, fp, fn in zip(counts.tp, counts.fp, counts.fn):
        denom = 2 * tp + fp + fn
        total += 2.0 * tp / denom if denom else 0.0
    return total / counts.num_labels


def micro_f1(counts):
    tp, fp, fn = sum(counts.tp), sum(counts.fp), sum(counts.fn)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def evaluate(golds, preds, num_labels):
    counts = confusion_counts(golds, preds, num_labels)
    return MetricsReport(
        acc=subset_accuracy(golds, preds),
        ha=hamming_accuracy(golds, preds, num_labels),
        ebf1=example_f1(golds, preds),
        maf1=macro_f1(counts),
        mif1=micro_f1(counts),
    )


METRIC_COLUMNS = ("acc", "ha", "ebf1", "maf1", "mif1", "average")


def format_table(rows, headers):
    """Plain-text table with aligned columns; rows are lists of strings."""
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths))
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)
