"""Dense float64 tensors with reverse-mode automatic differentiation.

Small, deliberately explicit engine: every op computes its value eagerly
and registers a closure that propagates the output gradient to its inputs.
`backward` runs an iterative topological sweep, so graphs produced by long
recurrent rollouts do not hit the interpreter recursion limit.
"""

import contextlib

import numpy as np

NEG_INF = -1e30  # finite stand-in for -inf so masked logits stay arithmetic-safe


class ShapeError(ValueError):
    """Raised when an op receives incompatible operand shapes."""

    def __init__(self, kind, *shapes):
        super().__init__(f"{kind}: incompatible shapes {', '.join(map(str, shapes))}")
        self.kind = kind
        self.shapes = shapes


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "_backward", "_prev")

    def __init__(self, data, _prev=()):
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._backward = None
        self._prev = _prev if _grad_enabled else ()

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)

    def item(self):
        return float(self.data)


def constant(data):
    """Leaf tensor whose gradient is discarded (targets, masks, inputs)."""
    return Tensor(np.asarray(data, dtype=np.float64))


def _record(out, fn):
    if _grad_enabled:
        out._backward = fn


def backward(loss):
    """Reverse sweep from a scalar loss; accumulates .grad on every reachable tensor."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))
    for node in topo:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# ops


def add(a, b):
    """Elementwise add; also (m, n) + (n,) row-broadcast for bias terms."""
    if a.data.shape == b.data.shape:
        out = Tensor(a.data + b.data, (a, b))

        def fn():
            a.grad += out.grad
            b.grad += out.grad

    elif a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = Tensor(a.data + b.data, (a, b))

        def fn():
            a.grad += out.grad
            b.grad += out.grad.sum(axis=0)

    else:
        raise ShapeError("add", a.data.shape, b.data.shape)
    _record(out, fn)
    return out


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError("mul", a.data.shape, b.data.shape)
    out = Tensor(a.data * b.data, (a, b))

    def fn():
        a.grad += b.data * out.grad
        b.grad += a.data * out.grad

    _record(out, fn)
    return out


def scale(a, c):
    out = Tensor(a.data * c, (a,))

    def fn():
        a.grad += c * out.grad

    _record(out, fn)
    return out


def matmul(a, b):
    """matrix@vector, vector@matrix, matrix@matrix, or vector@vector (dot)."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd, (a, b))

        def fn():
            a.grad += np.outer(out.grad, bd)
            b.grad += ad.T @ out.grad

    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd, (a, b))

        def fn():
            a.grad += bd @ out.grad
            b.grad += np.outer(ad, out.grad)

    elif ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd, (a, b))

        def fn():
            a.grad += out.grad @ bd.T
            b.grad += ad.T @ out.grad

    elif ad.ndim == 1 and bd.ndim == 1:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd, (a, b))

        def fn():
            a.grad += out.grad * bd
            b.grad += out.grad * ad

    else:
        raise ShapeError("matmul", ad.shape, bd.shape)
    _record(out, fn)
    return out


def transpose(a):
    if a.data.ndim != 2:
        raise ShapeError("transpose", a.data.shape)
    out = Tensor(a.data.T.copy(), (a,))

    def fn():
        a.grad += out.grad.T

    _record(out, fn)
    return out


def concat(parts):
    """Concatenate 1-D tensors."""
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError("concat", p.data.shape)
    out = Tensor(np.concatenate([p.data for p in parts]), tuple(parts))
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def fn():
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.grad += out.grad[lo:hi]

    _record(out, fn)
    return out


def stack(rows):
    """Stack 1-D tensors of equal length into a matrix."""
    n = rows[0].data.shape[0]
    for r in rows:
        if r.data.shape != (n,):
            raise ShapeError("stack", r.data.shape, (n,))
    out = Tensor(np.stack([r.data for r in rows]), tuple(rows))

    def fn():
        for i, r in enumerate(rows):
            r.grad += out.grad[i]

    _record(out, fn)
    return out


def slice_(a, start, stop):
    """Contiguous slice along axis 0."""
    out = Tensor(a.data[start:stop].copy(), (a,))

    def fn():
        a.grad[start:stop] += out.grad

    _record(out, fn)
    return out


def pick(a, index):
    """Single element of a 1-D tensor as a scalar."""
    if a.data.ndim != 1:
        raise ShapeError("pick", a.data.shape)
    out = Tensor(a.data[index], (a,))

    def fn():
        a.grad[index] += out.grad

    _record(out, fn)
    return out


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape).copy(), (a,))

    def fn():
        a.grad += out.grad.reshape(a.data.shape)

    _record(out, fn)
    return out


def embedding(table, ids):
    """Rows of a 2-D table; `ids` is an int or a sequence of ints."""
    if table.data.ndim != 2:
        raise ShapeError("embedding", table.data.shape)
    out = Tensor(table.data[ids].copy(), (table,))

    def fn():
        np.add.at(table.grad, ids, out.grad)

    _record(out, fn)
    return out


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s, (a,))

    def fn():
        a.grad += s * (1.0 - s) * out.grad

    _record(out, fn)
    return out


def tanh(a):
    t = np.tanh(a.data)
    out = Tensor(t, (a,))

    def fn():
        a.grad += (1.0 - t * t) * out.grad

    _record(out, fn)
    return out


def leaky_relu(a, alpha=0.01):
    out = Tensor(np.where(a.data > 0, a.data, alpha * a.data), (a,))

    def fn():
        a.grad += np.where(a.data > 0, 1.0, alpha) * out.grad

    _record(out, fn)
    return out


def log(a):
    out = Tensor(np.log(a.data), (a,))

    def fn():
        a.grad += out.grad / a.data

    _record(out, fn)
    return out


def softmax(a):
    """Max-subtracted softmax over the last axis (1-D or row-wise 2-D)."""
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, (a,))

    def fn():
        g = out.grad
        dot = (g * p).sum(axis=-1, keepdims=True)
        a.grad += p * (g - dot)

    _record(out, fn)
    return out


def log_softmax(a):
    """Log-probabilities over the last axis; numerically stable."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = Tensor(shifted - lse, (a,))
    p = np.exp(out.data)

    def fn():
        g = out.grad
        a.grad += g - p * g.sum(axis=-1, keepdims=True)

    _record(out, fn)
    return out


def sum_(a):
    out = Tensor(a.data.sum(), (a,))

    def fn():
        a.grad += out.grad

    _record(out, fn)
    return out


def mean_(a):
    n = a.data.size
    out = Tensor(a.data.sum() / n, (a,))

    def fn():
        a.grad += out.grad / n

    _record(out, fn)
    return out


def dot(a, b):
    return matmul(a, b)


def add_many(terms):
    """Sum a list of same-shape tensors (loss accumulation)."""
    total = terms[0].data.copy()
    for t in terms[1:]:
        total += t.data
    out = Tensor(total, tuple(terms))

    def fn():
        for t in terms:
            t.grad += out.grad

    _record(out, fn)
    return out


def lstm_cell(W, b, x, h, c):
    """Fused LSTM step: gates from W @ [x; h] + b, returns (h_new, c_new).

    One node carries the whole cell's backward (the composition of the
    primitive ops it replaces), which keeps recurrent graphs small. The
    c_new output participates in the graph through h_new's parent list, so
    its incoming gradient is complete by the time h_new's sweep runs.
    """
    hidden = h.data.shape[0]
    if W.data.shape != (4 * hidden, x.data.shape[0] + hidden):
        raise ShapeError("lstm_cell", W.data.shape, x.data.shape, h.data.shape)
    v = np.concatenate([x.data, h.data])
    z = W.data @ v + b.data
    i = 1.0 / (1.0 + np.exp(-z[:hidden]))
    f = 1.0 / (1.0 + np.exp(-z[hidden : 2 * hidden]))
    g = np.tanh(z[2 * hidden : 3 * hidden])
    o = 1.0 / (1.0 + np.exp(-z[3 * hidden :]))
    c_data = f * c.data + i * g
    tc = np.tanh(c_data)
    c_new = Tensor(c_data)
    h_new = Tensor(o * tc, (W, b, x, h, c, c_new))

    def fn():
        gh = h_new.grad
        gct = c_new.grad + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            gct * g * i * (1.0 - i),
            gct * c.data * f * (1.0 - f),
            gct * i * (1.0 - g * g),
            gh * tc * o * (1.0 - o),
        ])
        W.grad += np.outer(dz, v)
        b.grad += dz
        dv = W.data.T @ dz
        n_in = x.data.shape[0]
        x.grad += dv[:n_in]
        h.grad += dv[n_in:]
        c.grad += gct * f

    _record(h_new, fn)
    return h_new, c_new


# ---------------------------------------------------------------------------
# verification


def grad_check(f, theta, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` maps a parameter Tensor to a scalar Tensor. The relative error per
    coordinate is |analytic - numeric| / max(1, |numeric|).
    """
    if not (0.0 < eps <= 1e-3):
        raise ValueError(f"eps must be in (0, 1e-3], got {eps}")
    base = np.array(theta.data, dtype=np.float64)

    t = Tensor(base.copy())
    loss = f(t)
    backward(loss)
    analytic = t.grad.reshape(-1).copy()

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(Tensor(base.copy())).data)
            flat[i] = orig - eps
            fm = float(f(Tensor(base.copy())).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * eps)

    denom = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
