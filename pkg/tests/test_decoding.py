import itertools
import math

import numpy as np
import pytest

from seqmlc import autodiff as ad
from seqmlc.decoding import (
    THRESHOLD_GRID,
    beam_search,
    br_score,
    br_threshold_predict,
    joint_decode,
    logistic_rescore,
    predict_instance,
    score_sequence,
    tune_threshold,
)
from seqmlc.metrics import confusion_counts, micro_f1
from seqmlc.model import Model, ModelConfig
from seqmlc.oracle import brute_best_hypothesis


def make_model(num_labels=3, seed=5, vocab=12):
    cfg = ModelConfig(vocab_size=vocab, num_labels=num_labels, embed=6,
                      enc_hidden=8, dec_hidden=8, br_hidden=8)
    return Model(cfg, init_rng=np.random.default_rng(seed))


TOKENS = (2, 5, 7)


def test_beam_width_validation():
    with pytest.raises(ValueError):
        beam_search(make_model(), TOKENS, 0)


def test_beam_deterministic():
    model = make_model()
    a = beam_search(model, TOKENS, 4)
    b = beam_search(model, TOKENS, 4)
    assert [(h.labels, h.log_path) for h in a] == [(h.labels, h.log_path) for h in b]


def test_beam_l1_two_paths():
    model = make_model(num_labels=1)
    hyps = beam_search(model, TOKENS, 2)
    assert {h.labels for h in hyps} == {(), (0,)}
    assert hyps[0].log_path >= hyps[1].log_path


def test_beam_hypotheses_distinct_and_bounded():
    model = make_model(num_labels=4, seed=3)
    for width in (1, 2, 6):
        for h in beam_search(model, TOKENS, width):
            assert len(set(h.labels)) == len(h.labels)
            assert len(h.labels) <= 4
            assert h.finished


def test_beam_score_exactness():
    model = make_model(num_labels=4, seed=1)
    for h in beam_search(model, TOKENS, 6):
        assert abs(score_sequence(model, TOKENS, h.labels) - h.log_path) < 1e-10


def test_beam_exhaustive_matches_brute_force_both_scorers():
    for seed in range(8):
        model = make_model(num_labels=3, seed=seed)
        with ad.no_grad():
            yhat = model.br_forward(model.encode(TOKENS)).data
        top = beam_search(model, TOKENS, 64, scorer="path")[0]
        bl, bs = brute_best_hypothesis(model, TOKENS, "path")
        assert top.labels == bl and abs(top.log_path - bs) < 1e-10

        top_j = beam_search(model, TOKENS, 64, scorer="joint", yhat=yhat)[0]
        bl_j, bs_j = brute_best_hypothesis(model, TOKENS, "joint", yhat=yhat)
        assert top_j.labels == bl_j
        assert abs(top_j.log_path + br_score(set(top_j.labels), yhat) - bs_j) < 1e-10


def test_beam_monotone_in_width():
    for seed in range(6):
        model = make_model(num_labels=4, seed=seed)
        for scorer in ("path", "joint"):
            best = -np.inf
            for width in (1, 2, 4, 8, 64):
                hyps = beam_search(model, TOKENS, width, scorer=scorer)
                score = hyps[0].log_path if scorer == "path" else hyps[0].log_joint
                assert score >= best - 1e-12
                best = max(best, score)


def test_joint_equals_path_under_uniform_br():
    model = make_model(num_labels=4, seed=2)
    yhat = np.full(4, 0.5)
    paths = beam_search(model, TOKENS, 64, scorer="path")
    joints = beam_search(model, TOKENS, 64, scorer="joint", yhat=yhat)
    assert [h.labels for h in paths] == [h.labels for h in joints]
    for p, j in zip(paths, joints):
        assert abs(p.log_path - j.log_joint) < 1e-12


def test_joint_score_identity():
    # per-step joint total equals path + br odds; adding the constant
    # sum(log(1 - yhat)) recovers log P_path + log P_br (the product form)
    model = make_model(num_labels=3, seed=6)
    with ad.no_grad():
        yhat = model.br_forward(model.encode(TOKENS)).data
    const = float(np.log(1.0 - yhat).sum())
    for h in beam_search(model, TOKENS, 64, scorer="joint", yhat=yhat):
        lhs = h.log_joint + const
        rhs = h.log_path + br_score(set(h.labels), yhat)
        assert abs(lhs - rhs) < 1e-10


def test_joint_ranking_matches_product_ranking():
    model = make_model(num_labels=3, seed=7)
    with ad.no_grad():
        yhat = model.br_forward(model.encode(TOKENS)).data
    hyps = beam_search(model, TOKENS, 64, scorer="joint", yhat=yhat)
    for a, b in itertools.combinations(hyps, 2):
        joint_delta = a.log_joint - b.log_joint
        product_delta = (a.log_path + br_score(set(a.labels), yhat)) - (
            b.log_path + br_score(set(b.labels), yhat))
        if abs(joint_delta) > 1e-9:
            assert joint_delta * product_delta > 0


def test_eos_contributes_nothing_to_odds():
    model = make_model(num_labels=2, seed=3)
    skewed = np.array([0.9, 0.1])
    hyps = beam_search(model, TOKENS, 64, scorer="joint", yhat=skewed)
    for h in hyps:
        odds = sum(math.log(skewed[l] / (1 - skewed[l])) for l in h.labels)
        assert abs(h.log_joint - (h.log_path + odds)) < 1e-10


def test_br_score_values():
    yhat = np.array([0.9, 0.2, 0.6])
    val = br_score({0, 2}, yhat)
    assert abs(val - math.log(0.9 * 0.8 * 0.6)) < 1e-12

    flat = np.full(4, 0.5)
    for subset in ({0}, {1, 2}, set()):
        assert abs(br_score(subset, flat) - 4 * math.log(0.5)) < 1e-12


def test_br_score_maximized_by_half_threshold():
    rng = np.random.default_rng(0)
    for _ in range(20):
        yhat = rng.uniform(0.05, 0.95, size=5)
        best_set = {i for i in range(5) if yhat[i] > 0.5}
        best_score = br_score(best_set, yhat)
        for k in range(6):
            for subset in itertools.combinations(range(5), k):
                assert br_score(set(subset), yhat) <= best_score + 1e-12


def test_logistic_rescore_rules():
    model = make_model(num_labels=3, seed=4)
    hyps = beam_search(model, TOKENS, 64)
    only = logistic_rescore(hyps[:1], np.full(3, 0.5))
    assert only.labels == hyps[0].labels

    # br strongly prefers {1}; rescoring overrides the path order
    yhat = np.array([0.01, 0.99, 0.01])
    best = logistic_rescore(hyps, yhat)
    assert best.labels == (1,)

    # exhaustive: the rescored winner maximizes the set score over the pool
    best_score = max(br_score(set(h.labels), yhat) for h in hyps)
    assert abs(br_score(set(best.labels), yhat) - best_score) < 1e-12

    with pytest.raises(ValueError):
        logistic_rescore([], yhat)


def test_joint_decode_returns_best():
    model = make_model(num_labels=3, seed=8)
    with ad.no_grad():
        yhat = model.br_forward(model.encode(TOKENS)).data
    best = joint_decode(model, TOKENS, 64)
    bl, _ = brute_best_hypothesis(model, TOKENS, "joint", yhat=yhat)
    assert best.labels == bl


def test_br_threshold_predict():
    yhat = np.array([0.9, 0.2, 0.6])
    assert br_threshold_predict(yhat, 0.5) == {0, 2}
    assert br_threshold_predict(yhat, 0.95) == frozenset()
    with pytest.raises(ValueError):
        br_threshold_predict(yhat, 0.0)


def test_threshold_grid_contains_half():
    assert 0.5 in THRESHOLD_GRID


def test_tuned_threshold_at_least_as_good_as_half():
    rng = np.random.default_rng(3)
    golds = [frozenset(np.nonzero(rng.random(4) < 0.4)[0]) | {0} for _ in range(40)]
    yhats = [np.clip(rng.normal(0.35, 0.3, size=4)
                     + 0.4 * np.isin(np.arange(4), sorted(g)), 0.01, 0.99)
             for g in golds]
    thr = tune_threshold(yhats, golds, 4)
    def mif1_at(t):
        preds = [br_threshold_predict(y, t) for y in yhats]
        return micro_f1(confusion_counts(golds, preds, 4))
    assert mif1_at(thr) >= mif1_at(0.5)


def test_predict_instance_strategies():
    model = make_model(num_labels=3, seed=1)
    for strategy in ("rnn", "br", "rescore", "joint"):
        pred, seq, lp, lj = predict_instance(model, TOKENS, strategy, width=4)
        assert isinstance(pred, frozenset)
        if strategy == "br":
            assert seq is None
        else:
            assert frozenset(seq) == pred
    with pytest.raises(ValueError):
        predict_instance(model, TOKENS, "nope")
