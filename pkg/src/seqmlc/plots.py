"""Figure rendering for the report path.

Every report figure is written next to its CSV. Uses the Agg backend so
rendering works headless; PNG output carries no timestamps, keeping report
directories byte-stable across reruns.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FIGSIZE = (6.0, 3.7)


def _style(ax, xlabel, ylabel, title):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def training_curves(curves, path):
    """curves: {run name: list of (update, loss, val_mif1, val_ebf1)}."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.7))
    for name, rows in sorted(curves.items()):
        updates = [r[0] for r in rows]
        ax1.plot(updates, [r[1] for r in rows], label=name)
        ax2.plot(updates, [r[2] for r in rows], label=name)
    _style(ax1, "updates", "training loss", "loss")
    _style(ax2, "updates", "validation micro-F1", "validation")
    ax2.legend(fontsize=8)
    save(fig, path)


def positionwise(accs, path):
    """accs: {run name: accuracy list indexed by decoder position}."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for name, acc in sorted(accs.items()):
        ax.plot(range(1, len(acc) + 1), acc, marker="o", label=name)
    _style(ax, "decoder position", "accuracy", "position-wise accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    save(fig, path)


def ebf1_buckets(tables, path):
    """tables: {run name: [(bucket label, count, mean ebF1 or None), ...]}."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    names = sorted(tables)
    labels = [row[0] for row in tables[names[0]]]
    width = 0.8 / max(len(names), 1)
    for i, name in enumerate(names):
        xs = [j + i * width for j in range(len(labels))]
        ys = [row[2] if row[2] is not None else 0.0 for row in tables[name]]
        ax.bar(xs, ys, width=width, label=name)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(labels))])
    ax.set_xticklabels(labels)
    _style(ax, "gold combination count in training", "mean example-F1",
           "example-F1 vs combination frequency")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    save(fig, path)
