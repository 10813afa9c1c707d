import pytest

from seqmlc.analysis import (
    combination_stats,
    ebf1_vs_frequency,
    positionwise_accuracy,
)


def test_combination_stats_subset_case():
    train = [{0, 1}, {2}, {0, 1}]
    s_test, s_novel = combination_stats([{0, 1}, {2}], train)
    assert (s_test, s_novel) == (2, 0)


def test_combination_stats_disjoint_case():
    train = [{0}]
    s_test, s_novel = combination_stats([{1}, {2}, {1, 2}], train)
    assert (s_test, s_novel) == (3, 3)


def test_combination_stats_counts_distinct():
    s_test, s_novel = combination_stats([{0}, {0}, {1}], [{0}])
    assert (s_test, s_novel) == (2, 1)
    assert s_novel <= s_test


def test_positionwise_perfect():
    preds = [(0, 1), (2,)]
    golds = [{0, 1}, {2}]
    acc = positionwise_accuracy(preds, golds)
    assert acc == [1.0, 1.0]


def test_positionwise_empty_predictions():
    acc = positionwise_accuracy([(), ()], [{0, 1}, {2}])
    assert acc == [0.0, 0.0]


def test_positionwise_short_prediction_counts_wrong():
    # gold drives a 3-step horizon; the unpredicted tail is wrong
    acc = positionwise_accuracy([(0,)], [{0, 1, 2}])
    assert acc == [1.0, 0.0, 0.0]


def test_positionwise_long_prediction_scored_against_gold():
    acc = positionwise_accuracy([(0, 5, 1)], [{0, 1}])
    assert acc == [1.0, 0.0, 1.0]


def test_positionwise_length_mismatch():
    with pytest.raises(ValueError):
        positionwise_accuracy([()], [{0}, {1}])


def test_ebf1_vs_frequency_single_bucket_when_all_unseen():
    rows = ebf1_vs_frequency([{0}], [{0}], [{1}], buckets=((0, 0),))
    assert rows == [("0", 1, 1.0)]


def test_ebf1_vs_frequency_buckets():
    train = [{0}] * 3 + [{1}] * 1
    golds = [{0}, {1}, {2}]
    preds = [{0}, set(), {2}]
    rows = ebf1_vs_frequency(preds, golds, train,
                             buckets=((0, 0), (1, 2), (3, None)))
    assert rows[0] == ("0", 1, 1.0)   # {2} unseen, predicted exactly
    assert rows[1] == ("1-2", 1, 0.0)  # {1} seen once, empty prediction
    assert rows[2] == ("3+", 1, 1.0)  # {0} seen three times
    for _, _, score in rows:
        assert score is None or 0.0 <= score <= 1.0


def test_ebf1_vs_frequency_empty_bucket():
    rows = ebf1_vs_frequency([{0}], [{0}], [{0}], buckets=((0, 0), (1, None)))
    assert rows[0] == ("0", 0, None)
    assert rows[1][1] == 1
