"""Encoder, label decoder, and binary-relevance head.

Three networks share one parameter store: a bidirectional LSTM encoder over
token embeddings, an LSTM label decoder with scaled dot-product attention
over the encoder states, and a binary-relevance head that turns the final
encoder state (plus its own attention context) into per-label probabilities.
The decoder's step distribution covers the L labels plus an end-of-sequence
action; a mask vector removes already-emitted labels from the sampling and
search distributions.
"""

import contextlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import NEG_INF, Tensor

CKPT_MAGIC = b"SMLC"
CKPT_VERSION = 1

INIT_SCALE = 0.08


@dataclass
class ModelConfig:
    vocab_size: int
    num_labels: int
    embed: int = 32
    enc_hidden: int = 64
    enc_layers: int = 1
    dec_hidden: int = 64
    dec_layers: int = 1
    br_hidden: int = 64
    br_depth: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        dims = (self.vocab_size, self.num_labels, self.embed, self.enc_hidden,
                self.enc_layers, self.dec_hidden, self.dec_layers,
                self.br_hidden, self.br_depth)
        if any(d < 1 for d in dims):
            raise ValueError("all model dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def eos_id(self):
        return self.num_labels

    @property
    def bos_id(self):
        return self.num_labels + 1


@dataclass
class EncoderStates:
    states: Tensor  # (m, 2*enc_hidden), forward||backward per position
    positions: list  # per-position (2*enc_hidden,) tensors
    final: Tensor  # (2*enc_hidden,), state at the last position


@dataclass
class DecoderState:
    layers: tuple  # ((h, c), ...) per decoder layer
    keys: Tensor  # (m, dec_hidden) projected attention keys, shared across steps


def mask_vector(emitted, num_labels):
    """Additive mask over L+1 actions: NEG_INF at emitted labels, 0 elsewhere."""
    m = np.zeros(num_labels + 1)
    for lab in emitted:
        if not 0 <= lab < num_labels:
            raise ValueError(f"cannot mask action {lab}; eos is never masked")
        m[lab] = NEG_INF
    return m


def masked_distribution(logprobs, mask):
    """Renormalized log-probabilities after adding the mask (graph op)."""
    return ad.log_softmax(ad.add(logprobs, ad.constant(mask)))


def masked_log_probs_np(logprobs, emitted, num_labels):
    """Plain-numpy twin of masked_distribution for sampling and search."""
    x = logprobs + mask_vector(emitted, num_labels)
    m = x.max()
    return x - m - math.log(np.exp(x - m).sum())


class Model:
    """Parameter store plus the forward functions of the three networks."""

    def __init__(self, config, init_rng=None):
        self.config = config
        self.params = {}
        self.training = False
        self._dropout_rng = None
        rng = init_rng if init_rng is not None else np.random.default_rng(0)
        self._build(rng)

    # -- parameters --------------------------------------------------------

    def _add(self, name, shape, rng):
        self.params[name] = Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape))

    def _build(self, rng):
        c = self.config
        enc_out = 2 * c.enc_hidden
        self._add("tok_emb", (c.vocab_size, c.embed), rng)
        for layer in range(c.enc_layers):
            in_dim = c.embed if layer == 0 else enc_out
            for d in ("fwd", "bwd"):
                self._add(f"enc.{layer}.{d}.W", (4 * c.enc_hidden, in_dim + c.enc_hidden), rng)
                self._add(f"enc.{layer}.{d}.b", (4 * c.enc_hidden,), rng)
        for layer in range(c.dec_layers):
            self._add(f"bridge.{layer}.h.W", (c.dec_hidden, enc_out), rng)
            self._add(f"bridge.{layer}.h.b", (c.dec_hidden,), rng)
            self._add(f"bridge.{layer}.c.W", (c.dec_hidden, enc_out), rng)
            self._add(f"bridge.{layer}.c.b", (c.dec_hidden,), rng)
            in_dim = c.embed if layer == 0 else c.dec_hidden
            self._add(f"dec.{layer}.W", (4 * c.dec_hidden, in_dim + c.dec_hidden), rng)
            self._add(f"dec.{layer}.b", (4 * c.dec_hidden,), rng)
        self._add("lab_emb", (c.num_labels + 2, c.embed), rng)  # labels + eos + bos
        self._add("att.key", (c.dec_hidden, enc_out), rng)
        self._add("out.W", (c.num_labels + 1, c.dec_hidden + enc_out), rng)
        self._add("out.b", (c.num_labels + 1,), rng)
        in_dim = enc_out
        for layer in range(c.br_depth):
            self._add(f"br.mlp.{layer}.W", (c.br_hidden, in_dim), rng)
            self._add(f"br.mlp.{layer}.b", (c.br_hidden,), rng)
            in_dim = c.br_hidden
        self._add("br.att.key", (c.br_hidden, enc_out), rng)
        self._add("br.out.W", (c.num_labels, c.br_hidden + enc_out), rng)
        self._add("br.out.b", (c.num_labels,), rng)

    def train_mode(self, rng):
        self.training = True
        self._dropout_rng = rng

    def eval_mode(self):
        self.training = False
        self._dropout_rng = None

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    def gradients(self):
        """Parameter name -> gradient array (zeros for untouched parameters)."""
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }

    def _dropout(self, x):
        p = self.config.dropout
        if not self.training or p == 0.0:
            return x
        keep = (self._dropout_rng.random(x.data.shape) >= p) / (1.0 - p)
        return ad.mul(x, ad.constant(keep))

    # -- networks ----------------------------------------------------------

    def _lstm_step(self, W, b, x, h, c):
        return ad.lstm_cell(W, b, x, h, c)

    def encode(self, tokens):
        """Run the bidirectional encoder; returns per-position states and the final one."""
        c = self.config
        if len(tokens) < 1:
            raise ValueError("cannot encode an empty token sequence")
        for t in tokens:
            if not 0 <= t < c.vocab_size:
                raise ValueError(f"unknown token id {t} (vocab size {c.vocab_size})")
        inputs = [ad.embedding(self.params["tok_emb"], int(t)) for t in tokens]
        for layer in range(c.enc_layers):
            if layer > 0:
                inputs = [self._dropout(x) for x in inputs]
            outputs = []
            for direction, order in (("fwd", range(len(tokens))),
                                     ("bwd", range(len(tokens) - 1, -1, -1))):
                W = self.params[f"enc.{layer}.{direction}.W"]
                b = self.params[f"enc.{layer}.{direction}.b"]
                h = ad.constant(np.zeros(c.enc_hidden))
                cc = ad.constant(np.zeros(c.enc_hidden))
                states = [None] * len(tokens)
                for t in order:
                    h, cc = self._lstm_step(W, b, inputs[t], h, cc)
                    states[t] = h
                outputs.append(states)
            inputs = [ad.concat([outputs[0][t], outputs[1][t]]) for t in range(len(tokens))]
        return EncoderStates(states=ad.stack(inputs), positions=inputs, final=inputs[-1])

    def init_decoder(self, enc):
        """Decoder start state: a linear map of the final encoder state per layer."""
        layers = []
        for layer in range(self.config.dec_layers):
            h = ad.add(ad.matmul(self.params[f"bridge.{layer}.h.W"], enc.final),
                       self.params[f"bridge.{layer}.h.b"])
            cc = ad.add(ad.matmul(self.params[f"bridge.{layer}.c.W"], enc.final),
                        self.params[f"bridge.{layer}.c.b"])
            layers.append((h, cc))
        keys = ad.matmul(enc.states, ad.transpose(self.params["att.key"]))
        return DecoderState(layers=tuple(layers), keys=keys)

    def decoder_step(self, state, prev_id, enc):
        """One decoder step; returns (new state, log-probabilities over L+1 actions)."""
        c = self.config
        if not 0 <= prev_id <= c.num_labels + 1:
            raise ValueError(f"invalid previous action id {prev_id}")
        x = ad.embedding(self.params["lab_emb"], int(prev_id))
        new_layers = []
        for layer, (h, cc) in enumerate(state.layers):
            if layer > 0:
                x = self._dropout(x)
            h_new, c_new = self._lstm_step(
                self.params[f"dec.{layer}.W"], self.params[f"dec.{layer}.b"], x, h, cc
            )
            new_layers.append((h_new, c_new))
            x = h_new
        top = new_layers[-1][0]
        scores = ad.scale(ad.matmul(state.keys, top), 1.0 / math.sqrt(c.dec_hidden))
        alpha = ad.softmax(scores)
        context = ad.matmul(alpha, enc.states)
        out = ad.add(ad.matmul(self.params["out.W"], ad.concat([top, context])),
                     self.params["out.b"])
        logprobs = ad.log_softmax(out)
        return DecoderState(layers=tuple(new_layers), keys=state.keys), logprobs

    def br_forward(self, enc):
        """Binary-relevance head: per-label probabilities in (0, 1)."""
        c = self.config
        z = enc.final
        for layer in range(c.br_depth):
            z = ad.leaky_relu(ad.add(ad.matmul(self.params[f"br.mlp.{layer}.W"], z),
                                     self.params[f"br.mlp.{layer}.b"]))
            z = self._dropout(z)
        keys = ad.matmul(enc.states, ad.transpose(self.params["br.att.key"]))
        scores = ad.scale(ad.matmul(keys, z), 1.0 / math.sqrt(c.br_hidden))
        context = ad.matmul(ad.softmax(scores), enc.states)
        logits = ad.add(ad.matmul(self.params["br.out.W"], ad.concat([z, context])),
                        self.params["br.out.b"])
        return ad.sigmoid(logits)

    # -- checkpoints ---------------------------------------------------------

    def save(self, path):
        """Binary container: magic, version, then (name, shape, float64-LE payload) records."""
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<II", CKPT_VERSION, len(self.params)))
            for name in sorted(self.params):
                arr = self.params[name].data
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.astype("<f8", copy=False).tobytes())

    def load(self, path):
        for name, arr in load_checkpoint(path).items():
            if name not in self.params:
                raise ValueError(f"checkpoint parameter {name!r} unknown to this model")
            if self.params[name].data.shape != arr.shape:
                raise ValueError(
                    f"checkpoint parameter {name!r} has shape {arr.shape}, "
                    f"expected {self.params[name].data.shape}"
                )
            self.params[name] = Tensor(arr)

    def clone_params(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def set_params(self, arrays):
        for name, arr in arrays.items():
            self.params[name] = Tensor(arr.copy())


def pack_params(model):
    """All parameters flattened into one vector (sorted by name)."""
    return np.concatenate([model.params[n].data.reshape(-1) for n in sorted(model.params)])


def theta_views(model, theta):
    """Parameter dict whose entries are graph slices of the flat vector, so
    gradients w.r.t. each parameter flow back into theta."""
    views = {}
    offset = 0
    for name in sorted(model.params):
        shape = model.params[name].data.shape
        n = int(np.prod(shape))
        views[name] = ad.reshape(ad.slice_(theta, offset, offset + n), shape)
        offset += n
    if offset != theta.data.size:
        raise ValueError(f"theta has {theta.data.size} entries, model needs {offset}")
    return views


@contextlib.contextmanager
def use_params(model, params):
    """Temporarily swap the model's parameter store (whole-model grad checks)."""
    saved = model.params
    model.params = params
    try:
        yield
    finally:
        model.params = saved


def load_checkpoint(path):
    """Read a checkpoint container back into name -> float64 array."""
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
            out[name] = arr
        return out
