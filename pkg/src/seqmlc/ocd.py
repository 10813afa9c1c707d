"""Optimal-completion training targets and loss.

The decoder is treated as an agent emitting distinct labels and then an
end-of-sequence action. The terminal reward is the negated count of missing
labels plus false alarms. For any prefix, the best achievable reward after
taking an action has a closed form, so the optimal policy (softmax over
those action values, hard in the low-temperature limit) is available exactly
at every step of a model-sampled trajectory. The loss distills that policy
into the decoder: a per-step KL divergence with the target held constant.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import masked_log_probs_np

HARD_TAU_CUTOFF = 1e-6


@dataclass(frozen=True)
class PrefixState:
    """Generated-so-far labels plus cached false-alarm count and remaining targets."""

    emitted: tuple
    targets: frozenset
    fa: int = field(init=False)
    remaining: frozenset = field(init=False)

    def __post_init__(self):
        emitted_set = set(self.emitted)
        if len(emitted_set) != len(self.emitted):
            raise ValueError(f"emitted prefix {self.emitted} repeats a label")
        if not self.targets:
            raise ValueError("target set must be nonempty")
        object.__setattr__(self, "fa", len(emitted_set - self.targets))
        object.__setattr__(self, "remaining", frozenset(self.targets - emitted_set))


@dataclass
class OCDConfig:
    tau: float = 1e-8

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("temperature must be nonnegative")


def reward(targets, generated):
    """-(missing labels) - (false alarms); 0 iff the sets match."""
    gen = set(generated)
    targets = set(targets)
    return -len(targets - gen) - len(gen - targets)


def optimal_q(prefix, action, num_labels):
    """Best achievable terminal reward after taking `action` from `prefix`.

    Closed form: a remaining target costs nothing beyond existing false
    alarms; eos forfeits every remaining target; any other label adds one
    false alarm.
    """
    if action in prefix.emitted:
        raise ValueError(f"action {action} already emitted; the mask forbids it")
    if not 0 <= action <= num_labels:
        raise ValueError(f"action {action} outside 0..{num_labels}")
    if action == num_labels:  # eos
        return -prefix.fa - len(prefix.remaining)
    if action in prefix.remaining:
        return -prefix.fa
    return -prefix.fa - 1


def allowed_actions(prefix, num_labels):
    emitted = set(prefix.emitted)
    return [a for a in range(num_labels) if a not in emitted] + [num_labels]


def optimal_policy(prefix, num_labels, tau=1e-8):
    """Target distribution over L+1 actions: softmax of action values at
    temperature tau, exactly uniform over the argmax set when tau is tiny."""
    actions = allowed_actions(prefix, num_labels)
    qs = np.array([optimal_q(prefix, a, num_labels) for a in actions], dtype=np.float64)
    probs = np.zeros(num_labels + 1)
    if tau <= HARD_TAU_CUTOFF:
        best = qs.max()
        support = [a for a, q in zip(actions, qs) if q == best]
        for a in support:
            probs[a] = 1.0 / len(support)
    else:
        z = qs / tau
        z -= z.max()
        e = np.exp(z)
        e /= e.sum()
        for a, p in zip(actions, e):
            probs[a] = p
    return probs


def sample_from_logprobs(logprobs, rng):
    """Inverse-CDF draw over a log-probability vector."""
    cdf = np.cumsum(np.exp(logprobs))
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(logprobs) - 1)


def sample_trajectory(model, instance, rng):
    """Sample labels from the masked step distribution until eos; returns the
    full action sequence ending in eos (length at most L+1)."""
    L = model.config.num_labels
    with ad.no_grad():
        enc = model.encode(instance.tokens)
        state = model.init_decoder(enc)
        prev = model.config.bos_id
        emitted = []
        trajectory = []
        for _ in range(L + 1):
            state, logprobs = model.decoder_step(state, prev, enc)
            mlp = masked_log_probs_np(logprobs.data, emitted, L)
            action = sample_from_logprobs(mlp, rng)
            trajectory.append(action)
            if action == L:
                break
            emitted.append(action)
            prev = action
    return trajectory


def kl_to_target(target_probs, logprobs):
    """KL(target || p) with the target a constant; zero when p equals the target.

    Only the support of the target contributes, so the value stays finite
    even when p assigns (numerically) zero mass elsewhere.
    """
    support = np.nonzero(target_probs)[0]
    entropy = float(np.sum(target_probs[support] * np.log(target_probs[support])))
    cross = ad.matmul(ad.constant(-target_probs), logprobs)
    return ad.add(cross, ad.constant(entropy))


def ocd_loss_for_trajectory(model, instance, trajectory, cfg=None):
    """Distillation loss along a fixed action sequence (ending in eos)."""
    cfg = cfg or OCDConfig()
    L = model.config.num_labels
    targets = frozenset(instance.labels)
    enc = model.encode(instance.tokens)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    emitted = []
    terms = []
    for action in trajectory:
        state, logprobs = model.decoder_step(state, prev, enc)
        pi = optimal_policy(PrefixState(tuple(emitted), targets), L, cfg.tau)
        terms.append(kl_to_target(pi, logprobs))
        if action == L:
            break
        emitted.append(action)
        prev = action
    return ad.add_many(terms)


def ocd_loss(model, instance, rng, cfg=None):
    """Single-pass loss: sample the trajectory from the masked distribution
    while accumulating the per-step KL terms on the same forward graph."""
    cfg = cfg or OCDConfig()
    L = model.config.num_labels
    targets = frozenset(instance.labels)
    enc = model.encode(instance.tokens)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    emitted = []
    terms = []
    for _ in range(L + 1):
        state, logprobs = model.decoder_step(state, prev, enc)
        pi = optimal_policy(PrefixState(tuple(emitted), targets), L, cfg.tau)
        terms.append(kl_to_target(pi, logprobs))
        action = sample_from_logprobs(masked_log_probs_np(logprobs.data, emitted, L), rng)
        if action == L:
            break
        emitted.append(action)
        prev = action
    return ad.add_many(terms)
