"""Beam search over the label decoder and the decoder-integration strategies.

All scoring is log-domain. A hypothesis accumulates the masked, renormalized
step log-probabilities of its labels (and final eos). The joint scorer adds
the binary-relevance odds log(p/(1-p)) per emitted label, with eos pinned to
even odds so it contributes nothing; ranking by that per-step sum orders
hypotheses exactly as the product of the path probability and the set
probability of the relevance head.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .model import masked_log_probs_np


@dataclass(frozen=True)
class Hypothesis:
    labels: tuple  # distinct labels, excluding eos
    log_path: float
    log_joint: float
    finished: bool
    state: object = None  # DecoderState while live


def _rank_key(scorer):
    attr = "log_path" if scorer == "path" else "log_joint"

    def key(h):
        return (-getattr(h, attr), len(h.labels), h.labels)

    return key


def beam_search(model, tokens, width, scorer="path", yhat=None, enc=None):
    """Ranked finished hypotheses.

    Every eos extension of a live hypothesis is banked as finished; the beam
    slots hold only unfinished hypotheses, at most `width` of them per step.
    With `width` at least the number of live prefixes at every step the
    search is exhaustive.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    if scorer not in ("path", "joint"):
        raise ValueError(f"unknown scorer {scorer!r}")
    L = model.config.num_labels
    with ad.no_grad():
        if enc is None:
            enc = model.encode(tokens)
        if scorer == "joint" and yhat is None:
            yhat = model.br_forward(enc).data
        odds = np.log(yhat / (1.0 - yhat)) if yhat is not None else None

        root = Hypothesis((), 0.0, 0.0, False, state=model.init_decoder(enc))
        live = [root]
        finished = []
        for _ in range(L + 1):
            if not live:
                break
            candidates = []
            for hyp in live:
                prev = hyp.labels[-1] if hyp.labels else model.config.bos_id
                state, logprobs = model.decoder_step(hyp.state, prev, enc)
                mlp = masked_log_probs_np(logprobs.data, hyp.labels, L)
                lp_eos = hyp.log_path + mlp[L]
                finished.append(replace(hyp, log_path=lp_eos,
                                         log_joint=hyp.log_joint + mlp[L],
                                         finished=True, state=None))
                for a in range(L):
                    if a in hyp.labels:
                        continue
                    step_joint = mlp[a] + (odds[a] if odds is not None else 0.0)
                    candidates.append(Hypothesis(hyp.labels + (a,),
                                                 hyp.log_path + mlp[a],
                                                 hyp.log_joint + step_joint,
                                                 False, state=state))
            candidates.sort(key=_rank_key(scorer))
            live = candidates[:width]
    finished.sort(key=_rank_key(scorer))
    return finished


def score_sequence(model, tokens, labels, enc=None):
    """Recompute a finished hypothesis' path score from scratch: the sum of
    masked step log-probabilities over its labels plus the final eos."""
    L = model.config.num_labels
    with ad.no_grad():
        if enc is None:
            enc = model.encode(tokens)
        state = model.init_decoder(enc)
        prev = model.config.bos_id
        total = 0.0
        for t, lab in enumerate(labels):
            state, logprobs = model.decoder_step(state, prev, enc)
            total += masked_log_probs_np(logprobs.data, labels[:t], L)[lab]
            prev = lab
        state, logprobs = model.decoder_step(state, prev, enc)
        total += masked_log_probs_np(logprobs.data, labels, L)[L]
    return total


def br_score(label_set, yhat):
    """Log-probability of a label set under the relevance head (eos excluded)."""
    total = 0.0
    for lab in range(len(yhat)):
        total += math.log(yhat[lab]) if lab in label_set else math.log(1.0 - yhat[lab])
    return total


def logistic_rescore(hypotheses, yhat):
    """Best finished hypothesis by relevance-head set score; ties prefer the
    higher path score, then the lexicographically smaller sequence."""
    if not hypotheses:
        raise ValueError("no finished hypotheses to rescore")
    return min(hypotheses,
               key=lambda h: (-br_score(set(h.labels), yhat), -h.log_path, h.labels))


def joint_decode(model, tokens, width, enc=None, yhat=None):
    """One-pass beam search under the joint scorer; returns the best hypothesis."""
    hyps = beam_search(model, tokens, width, scorer="joint", yhat=yhat, enc=enc)
    return hyps[0]


def br_threshold_predict(yhat, threshold):
    """Labels whose relevance probability exceeds the threshold (may be empty)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return frozenset(int(i) for i in np.nonzero(yhat > threshold)[0])


THRESHOLD_GRID = tuple(i / 20.0 for i in range(1, 20))  # 0.05 .. 0.95, includes 0.5


def tune_threshold(yhats, golds, num_labels, grid=THRESHOLD_GRID):
    """Threshold maximizing micro-F1 over the grid; ties take the smallest."""
    from .metrics import confusion_counts, micro_f1

    best = None
    for thr in grid:
        preds = [br_threshold_predict(y, thr) for y in yhats]
        score = micro_f1(confusion_counts(golds, preds, num_labels))
        if best is None or score > best[1]:
            best = (thr, score)
    return best[0]


def predict_instance(model, tokens, strategy, width=6, threshold=0.5, enc=None):
    """Decode one instance; returns (label set, label sequence or None,
    log_path, log_joint)."""
    with ad.no_grad():
        if enc is None:
            enc = model.encode(tokens)
        if strategy == "rnn":
            best = beam_search(model, tokens, width, scorer="path", enc=enc)[0]
            return frozenset(best.labels), best.labels, best.log_path, best.log_joint
        if strategy == "br":
            yhat = model.br_forward(enc).data
            return br_threshold_predict(yhat, threshold), None, 0.0, 0.0
        if strategy == "rescore":
            yhat = model.br_forward(enc).data
            hyps = beam_search(model, tokens, width, scorer="path", enc=enc)
            best = logistic_rescore(hyps, yhat)
            return frozenset(best.labels), best.labels, best.log_path, best.log_joint
        if strategy == "joint":
            yhat = model.br_forward(enc).data
            best = joint_decode(model, tokens, width, enc=enc, yhat=yhat)
            return frozenset(best.labels), best.labels, best.log_path, best.log_joint
    raise ValueError(f"unknown strategy {strategy!r}")


def predict_dataset(model, instances, strategy, width=6, threshold=0.5):
    """Decode a list of instances; returns per-instance prediction records."""
    out = []
    for inst in instances:
        pred, seq, lp, lj = predict_instance(model, inst.tokens, strategy,
                                             width=width, threshold=threshold)
        out.append({"uid": inst.uid, "gold": inst.labels, "pred": pred,
                    "seq": seq, "log_path": lp, "log_joint": lj})
    return out
