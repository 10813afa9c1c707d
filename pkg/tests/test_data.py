import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmlc.data import (
    Dataset,
    Instance,
    LabelSpace,
    SyntheticSpec,
    Vocabulary,
    build_label_space,
    build_vocabulary,
    decode_multi_hot,
    encode_multi_hot,
    load_corpus,
    load_jsonl,
    order_labels_by_frequency,
    save_jsonl,
    synth_generate,
)


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture
def tiny_corpus(tmp_path):
    path = tmp_path / "train.jsonl"
    write_jsonl(path, [
        {"text": "a b", "labels": ["x"]},
        {"text": "A b c", "labels": ["y", "x"]},
    ])
    return path


def test_load_jsonl_direct_mapping(tiny_corpus):
    vocab = build_vocabulary([["a", "b"], ["a", "b", "c"]])
    space = build_label_space([["x"], ["y", "x"]])
    insts, stats = load_jsonl(tiny_corpus, vocab, space)
    assert insts[0].tokens == tuple(vocab.encode(["a", "b"]))
    assert insts[0].labels == frozenset({space.label_to_id["x"]})
    # lowercasing: "A b c" hits the same ids as "a b c"
    assert insts[1].tokens[0] == vocab.token_to_id["a"]
    assert stats == {"rejected_empty_labels": 0, "dropped_too_long": 0}


def test_load_jsonl_rejects_empty_labels(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [
        {"text": "a", "labels": []},
        {"text": "a b", "labels": ["x"]},
    ])
    vocab = build_vocabulary([["a", "b"]])
    space = build_label_space([["x"]])
    with pytest.warns(UserWarning):
        insts, stats = load_jsonl(path, vocab, space)
    assert len(insts) == 1
    assert stats["rejected_empty_labels"] == 1


def test_load_jsonl_drops_over_max_words(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [
        {"text": " ".join(["w"] * 501), "labels": ["x"]},
        {"text": " ".join(["w"] * 500), "labels": ["x"]},
    ])
    vocab = build_vocabulary([["w"]])
    space = build_label_space([["x"]])
    insts, stats = load_jsonl(path, vocab, space, max_words=500)
    assert len(insts) == 1
    assert stats["dropped_too_long"] == 1


def test_load_jsonl_malformed_line_reports_lineno(tmp_path):
    path = tmp_path / "bad.jsonl"
    with open(path, "w") as fh:
        fh.write('{"text": "a", "labels": ["x"]}\n')
        fh.write("{not json}\n")
    vocab = build_vocabulary([["a"]])
    space = build_label_space([["x"]])
    with pytest.raises(ValueError, match=":2:"):
        load_jsonl(path, vocab, space)


def test_vocabulary_reserves_pad_and_unk():
    vocab = build_vocabulary([["b", "a", "b"]])
    assert vocab.token_to_id["<pad>"] == 0
    assert vocab.token_to_id["<unk>"] == 1
    assert vocab.encode(["zzz"]) == [1]
    ids = sorted(vocab.token_to_id.values())
    assert ids == list(range(len(ids)))


def test_vocabulary_cap_keeps_most_frequent():
    vocab = build_vocabulary([["a", "a", "b", "b", "c"]], cap=4)
    assert len(vocab) == 4  # pad, unk, a, b
    assert "c" not in vocab.token_to_id


def test_order_labels_by_frequency():
    space = LabelSpace({"A": 0, "B": 1, "C": 2}, [10, 3, 7])
    assert order_labels_by_frequency({0, 1, 2}, space) == [0, 2, 1]


def test_order_labels_tie_breaks_on_id():
    space = LabelSpace({"A": 0, "B": 1}, [5, 5])
    assert order_labels_by_frequency({1, 0}, space) == [0, 1]


def test_order_labels_singleton():
    space = LabelSpace({"A": 0, "B": 1}, [5, 5])
    assert order_labels_by_frequency({1}, space) == [1]


@given(st.sets(st.integers(min_value=0, max_value=7), min_size=1, max_size=8))
@settings(max_examples=50)
def test_order_labels_is_permutation(labels):
    space = LabelSpace({f"l{i}": i for i in range(8)}, [3, 1, 4, 1, 5, 9, 2, 6])
    out = order_labels_by_frequency(labels, space)
    assert sorted(out) == sorted(labels)


def test_encode_multi_hot_examples():
    assert np.array_equal(encode_multi_hot({0, 2}, 4), [1, 0, 1, 0])
    assert np.array_equal(encode_multi_hot(set(range(5)), 5), np.ones(5))
    with pytest.raises(ValueError):
        encode_multi_hot(set(), 4)


@given(st.sets(st.integers(min_value=0, max_value=9), min_size=1, max_size=10))
@settings(max_examples=50)
def test_multi_hot_round_trip(labels):
    assert decode_multi_hot(encode_multi_hot(labels, 10)) == frozenset(labels)


def test_instance_invariants():
    with pytest.raises(ValueError):
        Instance(0, (), frozenset({1}))
    with pytest.raises(ValueError):
        Instance(0, (1,), frozenset())


def test_dataset_rejects_duplicate_ids():
    a = Instance(0, (1,), frozenset({0}))
    with pytest.raises(ValueError):
        Dataset({"train": [a], "val": [a]})


def test_synth_deterministic():
    d1, v1, s1 = synth_generate(SyntheticSpec(labels=4, vocab=40, train=60, val=10,
                                              test=10, seen_pool=8, unseen_pool=4, seed=7))
    d2, v2, s2 = synth_generate(SyntheticSpec(labels=4, vocab=40, train=60, val=10,
                                              test=10, seen_pool=8, unseen_pool=4, seed=7))
    for split in d1.splits:
        for a, b in zip(d1[split], d2[split]):
            assert a.tokens == b.tokens and a.labels == b.labels
    assert v1.token_to_id == v2.token_to_id
    assert s1.label_to_id == s2.label_to_id and s1.frequencies == s2.frequencies


def test_synth_unseen_never_in_train():
    ds, _, _ = synth_generate(SyntheticSpec(labels=6, vocab=60, train=200, val=40,
                                            test=40, seen_pool=15, unseen_pool=8, seed=3))
    train_sets = {inst.labels for inst in ds["train"]}
    assert all(inst.labels not in train_sets for inst in ds["test_unseen"])
    assert all(inst.labels in train_sets for inst in ds["test_seen"])


def test_synth_infeasible_pools_error():
    # L=2 with sizes 1..2 has only 3 possible combinations
    with pytest.raises(ValueError, match="distinct"):
        synth_generate(SyntheticSpec(labels=2, vocab=20, train=10, val=2, test=2,
                                     seen_pool=3, unseen_pool=3, max_labels=2))


def test_synth_frequencies_from_train_only():
    ds, _, space = synth_generate(SyntheticSpec(labels=4, vocab=40, train=80, val=20,
                                                test=20, seen_pool=8, unseen_pool=4, seed=1))
    counts = [0] * space.num_labels
    for inst in ds["train"]:
        for lab in inst.labels:
            counts[lab] += 1
    assert counts == space.frequencies


def test_save_load_round_trip(tmp_path):
    ds, vocab, space = synth_generate(SyntheticSpec(labels=4, vocab=40, train=30, val=5,
                                                    test=5, seen_pool=6, unseen_pool=3, seed=2))
    path = tmp_path / "train.jsonl"
    save_jsonl(path, ds["train"], vocab, space)
    insts, _ = load_jsonl(path, vocab, space)
    assert [i.tokens for i in insts] == [i.tokens for i in ds["train"]]
    assert [i.labels for i in insts] == [i.labels for i in ds["train"]]


def test_load_corpus_builds_everything(tmp_path):
    write_jsonl(tmp_path / "train.jsonl", [
        {"text": "a a b", "labels": ["x"]},
        {"text": "b c", "labels": ["y"]},
    ])
    write_jsonl(tmp_path / "test.jsonl", [{"text": "c", "labels": ["x", "z"]}])
    ds, vocab, space, stats = load_corpus({
        "train": str(tmp_path / "train.jsonl"),
        "test": str(tmp_path / "test.jsonl"),
    })
    assert space.num_labels == 3  # z appears only in test but is in the inventory
    assert space.frequencies[space.label_to_id["z"]] == 0
    assert len(ds["train"]) == 2 and len(ds["test"]) == 1
