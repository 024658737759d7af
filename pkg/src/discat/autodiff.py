"""Dense tensors with reverse-mode differentiation on an explicit tape.

Forward operations take the tape as their first argument and append one
record per call; passing tape=None computes values only, which is how
evaluation runs.  backward() replays the records in reverse order and
accumulates gradients into the participating tensors.  Records whose
outputs never received a gradient are skipped, so subgraphs that do not
feed the loss cost nothing on the way back.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12

_dtype = np.float64


def set_default_dtype(dtype) -> None:
    """Switch the element type used for newly created tensors.

    Only float32 and float64 are supported.  Everything in one
    computation should be built under a single setting.
    """
    global _dtype
    dt = np.dtype(dtype)
    if dt.type not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _dtype = dt.type


def default_dtype():
    return _dtype


class Tensor:
    """A dense float array plus a gradient slot filled in by backward()."""

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape=None):
        self.data = np.asarray(data, dtype=_dtype)
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def add_grad(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of forward operations.

    Appending order is construction order, which is already a
    topological order of the graph, so reverse replay visits every node
    after all of its consumers.
    """

    def __init__(self):
        self.records = []

    def record(self, outputs, rule) -> None:
        self.records.append((outputs, rule))

    def __len__(self):
        return len(self.records)


def backward(tape: Tape, loss: Tensor) -> None:
    """Fill in gradients of everything reachable from the scalar loss."""
    if loss.shape != ():
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if loss.tape is not tape:
        raise ValueError("loss is not a node produced on this tape")
    loss.add_grad(np.asarray(1.0, dtype=loss.data.dtype))
    for outputs, rule in reversed(tape.records):
        if any(out.grad is not None for out in outputs):
            rule()


def _require_vector(name: str, t: Tensor) -> None:
    if t.data.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {t.shape}")


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two tensors of identical shape."""
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, tape)
    if tape is not None:
        def rule():
            a.add_grad(out.grad)
            b.add_grad(out.grad)
        tape.record((out,), rule)
    return out


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors of identical shape."""
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, tape)
    if tape is not None:
        def rule():
            a.add_grad(out.grad * b.data)
            b.add_grad(out.grad * a.data)
        tape.record((out,), rule)
    return out


def scale(tape, s: Tensor, v: Tensor) -> Tensor:
    """Scalar node times tensor node."""
    if s.shape != ():
        raise ValueError(f"scale factor must be a scalar, got shape {s.shape}")
    out = Tensor(s.data * v.data, tape)
    if tape is not None:
        def rule():
            s.add_grad(np.sum(out.grad * v.data))
            v.add_grad(out.grad * s.data)
        tape.record((out,), rule)
    return out


def matvec(tape, w: Tensor, x: Tensor) -> Tensor:
    """Matrix times vector."""
    if w.data.ndim != 2 or x.data.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {w.shape} vs vector {x.shape}")
    out = Tensor(w.data @ x.data, tape)
    if tape is not None:
        def rule():
            w.add_grad(np.outer(out.grad, x.data))
            x.add_grad(w.data.T @ out.grad)
        tape.record((out,), rule)
    return out


def dot(tape, a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equal-length vectors, as a scalar node."""
    _require_vector("dot left", a)
    _require_vector("dot right", b)
    if a.shape != b.shape:
        raise ValueError(f"dot shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(np.dot(a.data, b.data), tape)
    if tape is not None:
        def rule():
            a.add_grad(out.grad * b.data)
            b.add_grad(out.grad * a.data)
        tape.record((out,), rule)
    return out


def vsum(tape, x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar node."""
    out = Tensor(np.sum(x.data), tape)
    if tape is not None:
        def rule():
            x.add_grad(np.full_like(x.data, float(out.grad)))
        tape.record((out,), rule)
    return out


def average(tape, items) -> Tensor:
    """Mean of same-shaped tensors; the gradient fans out evenly."""
    items = list(items)
    if not items:
        raise ValueError("average needs at least one tensor")
    shape = items[0].shape
    for t in items[1:]:
        if t.shape != shape:
            raise ValueError(f"average shape mismatch: {shape} vs {t.shape}")
    total = items[0].data.copy()
    for t in items[1:]:
        total += t.data
    out = Tensor(total / len(items), tape)
    if tape is not None:
        def rule():
            share = out.grad / len(items)
            for t in items:
                t.add_grad(share)
        tape.record((out,), rule)
    return out


def concat(tape, a: Tensor, b: Tensor) -> Tensor:
    """Vector concatenation; the gradient splits at the seam."""
    _require_vector("concat left", a)
    _require_vector("concat right", b)
    m = a.shape[0]
    out = Tensor(np.concatenate([a.data, b.data]), tape)
    if tape is not None:
        def rule():
            a.add_grad(out.grad[:m])
            b.add_grad(out.grad[m:])
        tape.record((out,), rule)
    return out


def pick(tape, v: Tensor, i: int) -> Tensor:
    """One element of a vector, as a scalar node."""
    _require_vector("pick input", v)
    if not 0 <= i < v.shape[0]:
        raise ValueError(f"pick index {i} out of range for length {v.shape[0]}")
    out = Tensor(v.data[i], tape)
    if tape is not None:
        def rule():
            if v.grad is None:
                v.grad = np.zeros_like(v.data)
            v.grad[i] += out.grad
        tape.record((out,), rule)
    return out


def stack_scalars(tape, items) -> Tensor:
    """Pack scalar nodes into one vector node."""
    items = list(items)
    if not items:
        raise ValueError("stack_scalars needs at least one scalar")
    for t in items:
        if t.shape != ():
            raise ValueError(f"stack_scalars takes scalars, got shape {t.shape}")
    out = Tensor(np.array([t.data for t in items]), tape)
    if tape is not None:
        def rule():
            for i, t in enumerate(items):
                t.add_grad(out.grad[i])
        tape.record((out,), rule)
    return out


def take_row(tape, m: Tensor, i: int) -> Tensor:
    """Row i of a matrix, as a vector node; the gradient scatters back."""
    if m.data.ndim != 2:
        raise ValueError(f"take_row needs a matrix, got shape {m.shape}")
    if not 0 <= i < m.shape[0]:
        raise ValueError(f"row {i} out of range for {m.shape[0]} rows")
    out = Tensor(m.data[i], tape)
    if tape is not None:
        def rule():
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            m.grad[i] += out.grad
        tape.record((out,), rule)
    return out


def tanh(tape, x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data), tape)
    if tape is not None:
        def rule():
            x.add_grad(out.grad * (1.0 - out.data * out.data))
        tape.record((out,), rule)
    return out


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # two-branch form keeps exp() bounded for large |x|
    pos = x >= 0
    ex = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def sigmoid(tape, x: Tensor) -> Tensor:
    out = Tensor(_sigmoid_values(x.data), tape)
    if tape is not None:
        def rule():
            x.add_grad(out.grad * out.data * (1.0 - out.data))
        tape.record((out,), rule)
    return out


def softmax(tape, x: Tensor) -> Tensor:
    """Exponential normalization of a vector, stabilized by max subtraction."""
    _require_vector("softmax input", x)
    if x.shape[0] < 1:
        raise ValueError("softmax needs at least one element")
    e = np.exp(x.data - np.max(x.data))
    y = e / np.sum(e)
    out = Tensor(y, tape)
    if tape is not None:
        def rule():
            g = out.grad
            x.add_grad(out.data * (g - np.dot(out.data, g)))
        tape.record((out,), rule)
    return out


def cross_entropy(tape, probs: Tensor, gold: int) -> Tensor:
    """Negative log probability of the gold class.

    The probability is floored at PROB_FLOOR before the log so a
    confidently wrong model yields a large finite loss, never an
    infinity.  Below the floor the derivative is defined as zero.
    """
    _require_vector("probabilities", probs)
    k = probs.shape[0]
    if not 0 <= gold < k:
        raise ValueError(f"gold class {gold} out of range for {k} classes")
    p = float(probs.data[gold])
    out = Tensor(-np.log(max(p, PROB_FLOOR)), tape)
    if tape is not None:
        def rule():
            if p >= PROB_FLOOR:
                g = np.zeros_like(probs.data)
                g[gold] = -float(out.grad) / p
                probs.add_grad(g)
        tape.record((out,), rule)
    return out


def lstm_cell(tape, w: Tensor, u: Tensor, b: Tensor,
              x: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One LSTM step with fused gate parameters.

    The rows of w [4h, d], u [4h, h] and b [4h] hold the input, forget,
    output and candidate blocks in that order.  Returns (hidden, cell).
    The whole step is a single tape record with a hand-derived backward
    rule, which keeps long token loops cheap to differentiate.
    """
    hd = h_prev.shape[0]
    if x.data.ndim != 1 or w.shape != (4 * hd, x.shape[0]):
        raise ValueError(
            f"lstm_cell: input weights {w.shape} do not fit input {x.shape} with hidden size {hd}")
    if u.shape != (4 * hd, hd) or b.shape != (4 * hd,):
        raise ValueError(
            f"lstm_cell: recurrent weights {u.shape} / bias {b.shape} do not fit hidden size {hd}")
    if c_prev.shape != (hd,):
        raise ValueError(f"lstm_cell: cell state {c_prev.shape} does not fit hidden size {hd}")
    z = w.data @ x.data + u.data @ h_prev.data + b.data
    gi = _sigmoid_values(z[:hd])
    gf = _sigmoid_values(z[hd:2 * hd])
    go = _sigmoid_values(z[2 * hd:3 * hd])
    gc = np.tanh(z[3 * hd:])
    c = gf * c_prev.data + gi * gc
    tc = np.tanh(c)
    h_out = Tensor(go * tc, tape)
    c_out = Tensor(c, tape)
    if tape is not None:
        def rule():
            dh = h_out.grad if h_out.grad is not None else 0.0
            dc = c_out.grad if c_out.grad is not None else 0.0
            dcell = dc + dh * go * (1.0 - tc * tc)
            dz = np.concatenate([
                dcell * gc * gi * (1.0 - gi),
                dcell * c_prev.data * gf * (1.0 - gf),
                dh * tc * go * (1.0 - go),
                dcell * gi * (1.0 - gc * gc),
            ])
            w.add_grad(np.outer(dz, x.data))
            u.add_grad(np.outer(dz, h_prev.data))
            b.add_grad(dz)
            x.add_grad(w.data.T @ dz)
            h_prev.add_grad(u.data.T @ dz)
            c_prev.add_grad(dcell * gf)
        tape.record((h_out, c_out), rule)
    return h_out, c_out


def dropout_mask(rng, shape, p: float) -> Tensor:
    """Inverted-dropout mask: zero with probability p, else 1/(1-p).

    Multiplying by the mask keeps activations unbiased in expectation,
    so evaluation needs no rescaling.  The mask is a constant leaf, not
    a tape node.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"drop probability must be in [0, 1), got {p}")
    keep = rng.uniform(0.0, 1.0, shape) >= p
    return Tensor(keep.astype(_dtype) / (1.0 - p))
