"""Brute-force reference implementations for small label spaces.

These certify, by literal enumeration, the analytic action values used for
training targets and the beam search used at inference. Completions share
the masked action space of the main code: distinct unused labels in any
order, then eos.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .decoding import br_score, score_sequence
from .ocd import PrefixState, allowed_actions, optimal_q

MAX_ENUMERATION = 100_000


@dataclass
class OracleBudget:
    max_labels: int = 5
    max_targets: int = 3


def _enumeration_size(num_labels):
    return sum(math.perm(num_labels, k) for k in range(num_labels + 1))


def _check_budget(num_labels, budget):
    budget = budget or OracleBudget()
    if num_labels > budget.max_labels:
        raise ValueError(f"L={num_labels} exceeds oracle budget {budget.max_labels}")
    if _enumeration_size(num_labels) > MAX_ENUMERATION:
        raise ValueError("enumeration budget exceeded")
    return budget


def _completions(unused):
    """Every ordered sequence of distinct labels drawn from `unused` (labels
    ascending within the subset choice, all orders enumerated)."""
    unused = sorted(unused)
    for k in range(len(unused) + 1):
        for subset in itertools.combinations(unused, k):
            yield from itertools.permutations(subset)


def brute_q(prefix, action, num_labels, budget=None):
    """Max reward over every mask-consistent completion after `action`."""
    _check_budget(num_labels, budget)
    if action in prefix.emitted:
        raise ValueError(f"action {action} already emitted")
    targets = set(prefix.targets)
    base = list(prefix.emitted)
    if action == num_labels:  # eos terminates immediately
        gen = set(base)
        return -len(targets - gen) - len(gen - targets)
    used = set(base) | {action}
    unused = [lab for lab in range(num_labels) if lab not in used]
    best = None
    for completion in _completions(unused):
        gen = set(base) | {action} | set(completion)
        r = -len(targets - gen) - len(gen - targets)
        if best is None or r > best:
            best = r
    return best


def brute_q_ebf1(prefix, action, num_labels, budget=None):
    """Same enumeration with the terminal score replaced by the example-F1 of
    the completed label set; exact rational arithmetic."""
    _check_budget(num_labels, budget)
    if action in prefix.emitted:
        raise ValueError(f"action {action} already emitted")
    targets = set(prefix.targets)

    def ebf1(gen):
        denom = len(targets) + len(gen)
        return Fraction(2 * len(targets & gen), denom) if denom else Fraction(1)

    base = list(prefix.emitted)
    if action == num_labels:
        return ebf1(set(base))
    used = set(base) | {action}
    unused = [lab for lab in range(num_labels) if lab not in used]
    best = None
    for completion in _completions(unused):
        r = ebf1(set(base) | {action} | set(completion))
        if best is None or r > best:
            best = r
    return best


def argmax_actions(prefix, num_labels, value_fn):
    """Actions achieving the maximal value over the allowed action set."""
    actions = allowed_actions(prefix, num_labels)
    values = [value_fn(prefix, a, num_labels) for a in actions]
    best = max(values)
    return frozenset(a for a, v in zip(actions, values) if v == best)


def brute_best_hypothesis(model, tokens, scorer, yhat=None, budget=None):
    """Exhaustive argmax over every distinct-label sequence plus eos.

    scorer: "path" ranks by the path score alone, "br" by the relevance-head
    set score, "joint" by their sum. Ties prefer shorter then
    lexicographically smaller sequences, matching the beam.
    Returns (labels tuple, score).
    """
    L = model.config.num_labels
    _check_budget(L, budget)
    if scorer not in ("path", "br", "joint"):
        raise ValueError(f"unknown scorer {scorer!r}")
    if scorer in ("br", "joint") and yhat is None:
        raise ValueError(f"scorer {scorer!r} needs relevance probabilities")
    from . import autodiff as ad

    best = None
    with ad.no_grad():
        enc = model.encode(tokens)
        for seq in _completions(range(L)):
            if scorer == "path":
                score = score_sequence(model, tokens, seq, enc=enc)
            elif scorer == "br":
                score = br_score(set(seq), yhat)
            else:
                score = score_sequence(model, tokens, seq, enc=enc) + br_score(set(seq), yhat)
            key = (-score, len(seq), seq)
            if best is None or key < best[0]:
                best = (key, seq, score)
    return best[1], best[2]


def random_case(rng, max_labels=5, max_targets=3):
    """One random (num_labels, PrefixState): targets and a mask-consistent prefix."""
    L = int(rng.integers(2, max_labels + 1))
    t = int(rng.integers(1, min(max_targets, L) + 1))
    targets = frozenset(int(x) for x in rng.choice(L, size=t, replace=False))
    plen = int(rng.integers(0, L + 1))
    prefix = tuple(int(x) for x in rng.choice(L, size=plen, replace=False))
    return L, PrefixState(prefix, targets)


def check_q_equivalence(cases, seed=0, max_labels=5, max_targets=3):
    """Compare analytic and brute-force action values (and the argmax sets of
    the reward and example-F1 objectives) on random cases.

    Returns (actions checked, first mismatch description or None).
    """
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(cases):
        L, prefix = random_case(rng, max_labels, max_targets)
        for action in allowed_actions(prefix, L):
            analytic = optimal_q(prefix, action, L)
            brute = brute_q(prefix, action, L)
            checked += 1
            if analytic != brute:
                return checked, (
                    f"Q mismatch: L={L} targets={sorted(prefix.targets)} "
                    f"prefix={prefix.emitted} action={action}: "
                    f"analytic {analytic} != brute {brute}"
                )
        reward_set = argmax_actions(prefix, L, brute_q)
        ebf1_set = argmax_actions(prefix, L, brute_q_ebf1)
        if reward_set != ebf1_set:
            return checked, (
                f"argmax mismatch: L={L} targets={sorted(prefix.targets)} "
                f"prefix={prefix.emitted}: reward {sorted(reward_set)} "
                f"!= ebF1 {sorted(ebf1_set)}"
            )
    return checked, None
