"""Corpus ingestion, label space construction, and synthetic dataset generation.

Text is lowercased and whitespace-tokenized. The vocabulary is built from
the training split only, most frequent first up to a cap, with PAD=0 and
UNK=1 reserved. The synthetic generator emits tokens from per-label pools
so the labels are recoverable from the text, and reserves a set of label
combinations that never appear in training (the unseen test half).
"""

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD_ID = 0
UNK_ID = 1

DEFAULT_MAX_WORDS = 500


@dataclass
class Vocabulary:
    token_to_id: dict

    def __post_init__(self):
        if self.token_to_id.get("<pad>") != PAD_ID or self.token_to_id.get("<unk>") != UNK_ID:
            raise ValueError("vocabulary must reserve <pad>=0 and <unk>=1")

    def __len__(self):
        return len(self.token_to_id)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]


@dataclass
class LabelSpace:
    label_to_id: dict
    frequencies: list  # per-label counts over the training split

    def __post_init__(self):
        ids = sorted(self.label_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("label ids must be dense in [0, L)")
        if any(f < 0 for f in self.frequencies):
            raise ValueError("label frequencies must be nonnegative")

    @property
    def num_labels(self):
        return len(self.label_to_id)

    @property
    def eos_id(self):
        return len(self.label_to_id)

    def names(self):
        inv = {i: name for name, i in self.label_to_id.items()}
        return [inv[i] for i in range(self.num_labels)]


@dataclass(frozen=True)
class Instance:
    uid: int
    tokens: tuple  # token ids, length >= 1
    labels: frozenset  # label ids, nonempty

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError(f"instance {self.uid}: empty token sequence")
        if not self.labels:
            raise ValueError(f"instance {self.uid}: empty label set")


@dataclass
class Dataset:
    splits: dict  # name -> list of Instance
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for name, insts in self.splits.items():
            for inst in insts:
                if inst.uid in seen:
                    raise ValueError(f"duplicate instance id {inst.uid} in split {name}")
                seen.add(inst.uid)

    def __getitem__(self, split):
        return self.splits[split]


def tokenize(text):
    return text.lower().split()


def order_labels_by_frequency(labels, space):
    """Sort a label set from frequent to rare; ties break on ascending id."""
    for lab in labels:
        if not 0 <= lab < space.num_labels:
            raise ValueError(f"label id {lab} outside label space")
    return sorted(labels, key=lambda lab: (-space.frequencies[lab], lab))


def encode_multi_hot(labels, num_labels):
    if not labels:
        raise ValueError("label set must be nonempty")
    vec = np.zeros(num_labels, dtype=np.float64)
    for lab in labels:
        if not 0 <= lab < num_labels:
            raise ValueError(f"label id {lab} out of range [0, {num_labels})")
        vec[lab] = 1.0
    return vec


def decode_multi_hot(vec):
    return frozenset(int(i) for i in np.nonzero(vec)[0])


def _read_jsonl(path):
    """Yield (line_number, text tokens, label strings); malformed lines raise."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "text" not in obj or "labels" not in obj:
                raise ValueError(f'{path}:{lineno}: expected object with "text" and "labels"')
            text, labels = obj["text"], obj["labels"]
            if not isinstance(text, str) or not isinstance(labels, list):
                raise ValueError(f'{path}:{lineno}: "text" must be a string and "labels" an array')
            yield lineno, tokenize(text), [str(lab) for lab in labels]


def build_vocabulary(token_lists, cap=None):
    """Most-frequent-first vocabulary from training tokens; PAD and UNK reserved."""
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    vocab = {"<pad>": PAD_ID, "<unk>": UNK_ID}
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    limit = None if cap is None else max(cap - 2, 0)
    for token, _ in ranked[:limit]:
        vocab[token] = len(vocab)
    return Vocabulary(vocab)


def build_label_space(train_label_lists, extra_label_lists=()):
    """Label inventory over all splits; frequencies counted on training only."""
    train_counts = Counter()
    for labs in train_label_lists:
        train_counts.update(set(labs))
    inventory = set(train_counts)
    for labs in extra_label_lists:
        inventory.update(labs)
    ordered = sorted(inventory, key=lambda name: (-train_counts[name], name))
    label_to_id = {name: i for i, name in enumerate(ordered)}
    freqs = [train_counts[name] for name in ordered]
    return LabelSpace(label_to_id, freqs)


def load_jsonl(path, vocab, space, max_words=DEFAULT_MAX_WORDS, start_uid=0):
    """Encode one JSONL file against an existing vocabulary and label space.

    Instances with an empty label set are rejected (counted, with a warning);
    instances longer than `max_words` tokens are dropped (counted).
    Returns (instances, stats dict).
    """
    instances = []
    stats = {"rejected_empty_labels": 0, "dropped_too_long": 0}
    uid = start_uid
    for lineno, toks, labs in _read_jsonl(path):
        if not labs:
            stats["rejected_empty_labels"] += 1
            continue
        if len(toks) > max_words:
            stats["dropped_too_long"] += 1
            continue
        if not toks:
            raise ValueError(f"{path}:{lineno}: empty text")
        for name in labs:
            if name not in space.label_to_id:
                raise ValueError(f"{path}:{lineno}: unknown label {name!r}")
        instances.append(
            Instance(uid, tuple(vocab.encode(toks)), frozenset(space.label_to_id[n] for n in labs))
        )
        uid += 1
    if stats["rejected_empty_labels"]:
        warnings.warn(f"{path}: rejected {stats['rejected_empty_labels']} instances with no labels")
    return instances, stats


def load_corpus(paths, max_words=DEFAULT_MAX_WORDS, vocab_cap=None):
    """Build vocabulary and label space from the train file, then encode all splits.

    `paths` maps split name -> JSONL path and must include "train".
    Returns (Dataset, Vocabulary, LabelSpace, per-split stats).
    """
    if "train" not in paths:
        raise ValueError("corpus paths must include a train split")
    raw = {name: list(_read_jsonl(path)) for name, path in paths.items()}
    train_rows = [(t, l) for _, t, l in raw["train"] if l and len(t) <= max_words]
    vocab = build_vocabulary([t for t, _ in train_rows], cap=vocab_cap)
    space = build_label_space(
        [l for _, l in train_rows],
        [l for name in paths if name != "train" for _, _, l in raw[name]],
    )
    splits, stats = {}, {}
    uid = 0
    for name, path in paths.items():
        insts, st = load_jsonl(path, vocab, space, max_words=max_words, start_uid=uid)
        uid += len(insts)
        splits[name] = insts
        stats[name] = st
    return Dataset(splits, provenance=";".join(paths.values())), vocab, space, stats


def save_jsonl(path, instances, vocab, space):
    """Write instances back out as JSONL (inverse of load_jsonl)."""
    inv_tok = {i: t for t, i in vocab.token_to_id.items()}
    inv_lab = {i: n for n, i in space.label_to_id.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            obj = {
                "text": " ".join(inv_tok[t] for t in inst.tokens),
                "labels": [inv_lab[lab] for lab in sorted(inst.labels)],
            }
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    labels: int = 10
    vocab: int = 200
    train: int = 2000
    val: int = 400
    test: int = 400  # size of EACH test half (seen and unseen)
    seed: int = 7
    seen_pool: int = 40  # distinct label combinations available to train/val/test-seen
    unseen_pool: int = 20  # distinct combinations reserved for the unseen test half
    tokens_per_label: int = 4
    min_labels: int = 1
    max_labels: int = 3
    pool_overlap: int = 3  # tokens shared between adjacent label pools

    def __post_init__(self):
        if self.labels < 2:
            raise ValueError("need at least 2 labels")
        if self.min_labels < 1 or self.max_labels < self.min_labels:
            raise ValueError("invalid label-count range")
        if self.max_labels > self.labels:
            raise ValueError("max_labels exceeds label count")

    def total_combinations(self):
        return sum(math.comb(self.labels, k) for k in range(self.min_labels, self.max_labels + 1))


def _sample_combination(rng, affinity, sizes_cdf, L, min_labels):
    k = min_labels + int(np.searchsorted(sizes_cdf, rng.random(), side="right"))
    first = int(rng.integers(L))
    chosen = [first]
    while len(chosen) < k:
        weights = affinity[chosen].sum(axis=0)
        weights[chosen] = 0.0
        weights = weights / weights.sum()
        nxt = int(np.searchsorted(np.cumsum(weights), rng.random(), side="right"))
        chosen.append(min(nxt, L - 1))
    return frozenset(chosen)


def synth_generate(spec):
    """Deterministic synthetic corpus with dependent labels and an unseen test half.

    Returns (Dataset, Vocabulary, LabelSpace). Splits: train, val, test_seen,
    test_unseen. Every combination in the unseen pool is absent from train/val/
    test_seen by construction; every seen-pool combination occurs in train.
    """
    needed = spec.seen_pool + spec.unseen_pool
    if needed > spec.total_combinations():
        raise ValueError(
            f"requested {needed} distinct combinations but only "
            f"{spec.total_combinations()} exist for L={spec.labels}, "
            f"sizes {spec.min_labels}..{spec.max_labels}"
        )
    rng = np.random.default_rng(spec.seed)
    L, V = spec.labels, spec.vocab

    # pairwise label affinity drives co-occurrence, so label dependency exists
    aff = rng.random((L, L)) + 0.1
    aff = (aff + aff.T) / 2.0
    np.fill_diagonal(aff, 0.0)

    size_weights = rng.random(spec.max_labels - spec.min_labels + 1) + 0.5
    sizes_cdf = np.cumsum(size_weights / size_weights.sum())

    combos = []
    seen_sets = set()
    attempts = 0
    while len(combos) < needed:
        attempts += 1
        if attempts > 200 * needed:
            raise ValueError("could not sample enough distinct label combinations")
        c = _sample_combination(rng, aff, sizes_cdf, L, spec.min_labels)
        if c not in seen_sets:
            seen_sets.add(c)
            combos.append(c)
    seen_combos = combos[: spec.seen_pool]
    unseen_combos = combos[spec.seen_pool :]

    # per-label token pools: contiguous chunks with a small overlap into the
    # next label's chunk, so tokens are informative but not perfectly so
    chunk = V // L
    pools = []
    for lab in range(L):
        lo = lab * chunk
        hi = min(lo + chunk + spec.pool_overlap, V)
        pools.append(np.arange(lo, hi))

    # a Zipf-like tilt over seen combinations creates the frequency spread
    # the combination-frequency analysis buckets rely on
    tilt = 1.0 / np.arange(1, spec.seen_pool + 1)
    tilt = tilt / tilt.sum()
    seen_cdf = np.cumsum(tilt)

    def draw_tokens(combo):
        toks = []
        for lab in sorted(combo):
            pool = pools[lab]
            toks.extend(pool[rng.integers(len(pool))] for _ in range(spec.tokens_per_label))
        order = rng.permutation(len(toks))
        return tuple(int(toks[i]) for i in order)

    def draw_seen_combo():
        return seen_combos[min(int(np.searchsorted(seen_cdf, rng.random(), side="right")),
                               spec.seen_pool - 1)]

    uid = 0
    splits = {}

    # guarantee every seen combination occurs in training at least once
    train = []
    for combo in seen_combos:
        train.append((combo, draw_tokens(combo)))
    while len(train) < spec.train:
        combo = draw_seen_combo()
        train.append((combo, draw_tokens(combo)))
    if len(train) > spec.train:
        raise ValueError(f"train size {spec.train} smaller than seen pool {spec.seen_pool}")
    order = rng.permutation(len(train))
    train = [train[i] for i in order]

    plan = [("train", train)]
    for name, count, pool_draw in [
        ("val", spec.val, draw_seen_combo),
        ("test_seen", spec.test, draw_seen_combo),
        ("test_unseen", spec.test, None),
    ]:
        rows = []
        for i in range(count):
            combo = unseen_combos[int(rng.integers(len(unseen_combos)))] if pool_draw is None else pool_draw()
            rows.append((combo, draw_tokens(combo)))
        plan.append((name, rows))

    token_names = {i: f"w{i:03d}" for i in range(V)}
    label_names = {lab: f"L{lab:02d}" for lab in range(L)}

    vocab_map = {"<pad>": PAD_ID, "<unk>": UNK_ID}
    for i in range(V):
        vocab_map[token_names[i]] = i + 2
    vocab = Vocabulary(vocab_map)

    train_counts = Counter()
    for combo, _ in train:
        train_counts.update(combo)
    space = LabelSpace({label_names[i]: i for i in range(L)},
                       [train_counts[i] for i in range(L)])

    for name, rows in plan:
        insts = []
        for combo, toks in rows:
            insts.append(Instance(uid, tuple(t + 2 for t in toks), combo))
            uid += 1
        splits[name] = insts

    ds = Dataset(splits, provenance=f"synthetic(seed={spec.seed})")

    train_sets = {inst.labels for inst in ds["train"]}
    for inst in ds["test_unseen"]:
        if inst.labels in train_sets:
            raise AssertionError("unseen-pool combination leaked into training")
    return ds, vocab, space
