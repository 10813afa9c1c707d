"""Training regimes, the optimizer loop, and checkpoint selection.

Regimes: teacher-forced likelihood on the frequency-ordered label sequence
(mle), the same with scheduled sampling of decoder inputs (mle-ss), the
dynamic-target variant that lets the model pick which remaining gold label
to train on each step (order-free), optimal-completion distillation (ocd),
its multitask combination with the relevance head (ocd-mtl), and the
relevance head alone (br-only). Per-instance losses are summed over a batch
and divided by the batch size, gradients are clipped to a global norm, and
Adam applies the update. Validation micro-F1 drives best-checkpoint
selection. Runs are bit-reproducible under a fixed seed.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import encode_multi_hot, order_labels_by_frequency
from .decoding import br_threshold_predict, predict_instance
from .metrics import evaluate
from .ocd import OCDConfig, ocd_loss

REGIMES = ("mle", "mle-ss", "order-free", "ocd", "ocd-mtl", "br-only")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    regime: str = "ocd"
    lr: float = 0.0005
    clip_norm: float = 10.0
    batch_size: int = 16
    epochs: int = 4
    lam: float = 1.0  # weight of the logistic loss inside ocd-mtl
    ss_start: float = 1.0  # teacher-forcing ratio at the first update
    ss_end: float = 0.7  # and at the last
    eval_every: int = 200
    seed: int = 1
    beam: int = 6
    tau: float = 1e-8

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        if self.lam < 0:
            raise ValueError("loss weight must be nonnegative")
        if not 0.0 <= self.ss_end <= self.ss_start <= 1.0:
            raise ValueError("need 0 <= ss_end <= ss_start <= 1")


@dataclass
class TrainState:
    params: dict
    adam_m: dict
    adam_v: dict
    updates: int = 0
    best_mif1: float = -1.0
    best_path: str = ""
    curve: list = field(default_factory=list)  # (update, loss, val_mif1, val_ebf1)


# ---------------------------------------------------------------------------
# per-instance losses


def _nll_of(logprobs, target):
    return ad.scale(ad.pick(logprobs, target), -1.0)


def mle_loss(model, instance, space):
    """Teacher-forced negative log-likelihood of the frequency-ordered sequence."""
    targets = order_labels_by_frequency(instance.labels, space)
    enc = model.encode(instance.tokens)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    terms = []
    for target in targets + [model.config.eos_id]:
        state, logprobs = model.decoder_step(state, prev, enc)
        terms.append(_nll_of(logprobs, target))
        prev = target
    return ad.add_many(terms)


def scheduled_sampling_loss(model, instance, space, ratio, rng):
    """MLE on the frequency-ordered targets, but each decoder input is the
    ground-truth previous label only with probability `ratio`, otherwise a
    label sampled from the model's own masked step distribution."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("teacher-forcing ratio must be in [0, 1]")
    from .model import masked_log_probs_np
    from .ocd import sample_from_logprobs

    L = model.config.num_labels
    targets = order_labels_by_frequency(instance.labels, space)
    enc = model.encode(instance.tokens)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    fed = []  # labels fed as inputs so far, for the sampling mask
    terms = []
    for target in targets + [model.config.eos_id]:
        state, logprobs = model.decoder_step(state, prev, enc)
        terms.append(_nll_of(logprobs, target))
        if ratio >= 1.0 or rng.random() < ratio:
            prev = target
        else:
            prev = sample_from_logprobs(masked_log_probs_np(logprobs.data, fed, L), rng)
        if prev < L:
            fed.append(prev)
    return ad.add_many(terms)


def order_free_target(remaining, logprobs):
    """The remaining gold label the model currently ranks highest, or eos when
    none remain; probability ties take the lower label id."""
    if not remaining:
        return len(logprobs) - 1  # eos
    return max(sorted(remaining), key=lambda lab: (logprobs[lab], -lab))


def order_free_loss(model, instance):
    """Dynamic-target training on correct prefixes: each step trains toward the
    most probable remaining gold label and feeds it as the next input."""
    enc = model.encode(instance.tokens)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    remaining = set(instance.labels)
    terms = []
    while True:
        state, logprobs = model.decoder_step(state, prev, enc)
        target = order_free_target(remaining, logprobs.data)
        terms.append(_nll_of(logprobs, target))
        if target == model.config.eos_id:
            break
        remaining.discard(target)
        prev = target
    return ad.add_many(terms)


def logistic_loss(yhat, target_vec):
    """Binary cross-entropy summed over labels; `target_vec` is multi-hot."""
    y = ad.constant(target_vec)
    ones = ad.constant(np.ones_like(target_vec))
    pos = ad.mul(y, ad.log(yhat))
    neg = ad.mul(ad.add(ones, ad.scale(y, -1.0)), ad.log(ad.add(ones, ad.scale(yhat, -1.0))))
    return ad.scale(ad.sum_(ad.add(pos, neg)), -1.0)


def br_instance_loss(model, instance, enc=None):
    if enc is None:
        enc = model.encode(instance.tokens)
    yhat = model.br_forward(enc)
    return logistic_loss(yhat, encode_multi_hot(instance.labels, model.config.num_labels))


def mtl_loss(model, instance, rng, cfg):
    """Distillation plus weighted logistic loss on one shared encoding."""
    enc = model.encode(instance.tokens)
    ocd_part = _ocd_loss_with_enc(model, instance, rng, OCDConfig(cfg.tau), enc)
    if cfg.lam == 0.0:
        return ocd_part
    br_part = br_instance_loss(model, instance, enc=enc)
    return ad.add(ocd_part, ad.scale(br_part, cfg.lam))


def _ocd_loss_with_enc(model, instance, rng, ocd_cfg, enc):
    from .model import masked_log_probs_np
    from .ocd import PrefixState, kl_to_target, optimal_policy, sample_from_logprobs

    L = model.config.num_labels
    targets = frozenset(instance.labels)
    state = model.init_decoder(enc)
    prev = model.config.bos_id
    emitted = []
    terms = []
    for _ in range(L + 1):
        state, logprobs = model.decoder_step(state, prev, enc)
        pi = optimal_policy(PrefixState(tuple(emitted), targets), L, ocd_cfg.tau)
        terms.append(kl_to_target(pi, logprobs))
        action = sample_from_logprobs(masked_log_probs_np(logprobs.data, emitted, L), rng)
        if action == L:
            break
        emitted.append(action)
        prev = action
    return ad.add_many(terms)


def instance_loss(model, instance, space, cfg, rng, ss_ratio=None):
    regime = cfg.regime
    if regime == "mle":
        return mle_loss(model, instance, space)
    if regime == "mle-ss":
        return scheduled_sampling_loss(model, instance, space, ss_ratio, rng)
    if regime == "order-free":
        return order_free_loss(model, instance)
    if regime == "ocd":
        return ocd_loss(model, instance, rng, OCDConfig(cfg.tau))
    if regime == "ocd-mtl":
        return mtl_loss(model, instance, rng, cfg)
    if regime == "br-only":
        return br_instance_loss(model, instance)
    raise ValueError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# optimizer


def clip_gradients(grads, max_norm):
    """Scale the gradient map so its global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        grads = {name: g * factor for name, g in grads.items()}
    return grads, norm


class Adam:
    def __init__(self, param_names, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(shapes[n]) for n in param_names}
        self.v = {n: np.zeros(shapes[n]) for n in param_names}

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1t
            v_hat = self.v[name] / b2t
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# loop


def ss_ratio_at(cfg, update, total_updates):
    """Linear decay of the teacher-forcing ratio over the whole run."""
    if total_updates <= 0:
        return cfg.ss_start
    frac = update / total_updates
    return cfg.ss_start - (cfg.ss_start - cfg.ss_end) * frac


def validate(model, instances, space, cfg):
    """Validation micro-F1 and example-F1. Sequence regimes decode with a path
    beam; br-only thresholds the relevance head at 0.5."""
    model.eval_mode()
    golds = [inst.labels for inst in instances]
    preds = []
    with ad.no_grad():
        for inst in instances:
            if cfg.regime == "br-only":
                enc = model.encode(inst.tokens)
                yhat = model.br_forward(enc).data
                preds.append(br_threshold_predict(yhat, 0.5))
            else:
                pred, _, _, _ = predict_instance(model, inst.tokens, "rnn", width=cfg.beam)
                preds.append(pred)
    report = evaluate(golds, preds, space.num_labels)
    return report.mif1, report.ebf1


def train(dataset, space, model, cfg, out_dir):
    """Run one training regime; returns a TrainState with the best checkpoint.

    Writes best.ckpt and curve.csv under out_dir. Deterministic for a fixed
    (dataset, config, seed): reruns produce bit-identical artifacts.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    train_insts = dataset["train"]
    val_insts = dataset.splits.get("val", [])
    n = len(train_insts)
    if n == 0:
        raise ValueError("empty training split")
    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_updates = cfg.epochs * batches_per_epoch

    adam = Adam(model.params.keys(), {k: p.data.shape for k, p in model.params.items()}, cfg.lr)
    state = TrainState(params=model.params, adam_m=adam.m, adam_v=adam.v)
    best_path = os.path.join(out_dir, "best.ckpt")
    loss_since_eval, batches_since_eval = 0.0, 0

    def run_validation(update):
        nonlocal loss_since_eval, batches_since_eval
        mif1, ebf1 = validate(model, val_insts, space, cfg) if val_insts else (0.0, 0.0)
        avg_loss = loss_since_eval / max(batches_since_eval, 1)
        state.curve.append((update, avg_loss, mif1, ebf1))
        loss_since_eval, batches_since_eval = 0.0, 0
        if mif1 > state.best_mif1:
            state.best_mif1 = mif1
            state.best_path = best_path
            model.save(best_path)

    update = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for b in range(batches_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = [train_insts[int(i)] for i in idx]
            ratio = ss_ratio_at(cfg, update, total_updates)
            model.train_mode(rng)
            terms = [instance_loss(model, inst, space, cfg, rng, ss_ratio=ratio)
                     for inst in batch]
            loss = ad.scale(ad.add_many(terms), 1.0 / len(batch))
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss {loss_val} at update {update} (regime {cfg.regime})"
                )
            model.zero_grads()
            ad.backward(loss)
            grads, _ = clip_gradients(model.gradients(), cfg.clip_norm)
            adam.step(model.params, grads)
            model.zero_grads()
            update += 1
            loss_since_eval += loss_val
            batches_since_eval += 1
            if cfg.eval_every > 0 and update % cfg.eval_every == 0:
                run_validation(update)
    if not state.curve or state.curve[-1][0] != update:
        run_validation(update)
    state.updates = update
    model.eval_mode()

    with open(os.path.join(out_dir, "curve.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "loss", "val_mif1", "val_ebf1"])
        for row in state.curve:
            writer.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.6f}"])
    return state
