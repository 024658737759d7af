"""Bidirectional LSTM encoder turning one EDU's tokens into a vector.

Both directions run over the same embedded tokens, one left to right
and one right to left, and the two final hidden states are concatenated,
so an EDU with hidden size h encodes as a vector of width 2h.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, dropout_mask, lstm_cell, mul, take_row

log = logging.getLogger(__name__)

GATES = ("input", "forget", "output", "candidate")


def uniform_init(rng, rows: int, cols: int) -> np.ndarray:
    """Fan-balanced uniform weights in [-r, r] with r = sqrt(6 / (rows + cols))."""
    r = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-r, r, (rows, cols))


@dataclass
class LstmParams:
    """Fused gate parameters for one direction.

    w is [4h, d], u is [4h, h], b is [4h]; row blocks follow GATES order.
    """

    w: Tensor
    u: Tensor
    b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.u.shape[1]

    def gate_views(self, gate: str):
        """Numpy views of one gate's slices of the fused parameters."""
        k = GATES.index(gate)
        h = self.hidden_dim
        rows = slice(k * h, (k + 1) * h)
        return self.w.data[rows], self.u.data[rows], self.b.data[rows]


def init_lstm_arrays(in_dim: int, hidden_dim: int, rng):
    """Initial fused parameter arrays; the forget gate bias starts at 1."""
    r_w = math.sqrt(6.0 / (hidden_dim + in_dim))
    r_u = math.sqrt(6.0 / (hidden_dim + hidden_dim))
    w = rng.uniform(-r_w, r_w, (4 * hidden_dim, in_dim))
    u = rng.uniform(-r_u, r_u, (4 * hidden_dim, hidden_dim))
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim:2 * hidden_dim] = 1.0
    return w, u, b


def lstm_step(tape, params: LstmParams, x, h_prev, c_prev):
    """Advance one direction by one token; returns (hidden, cell)."""
    return lstm_cell(tape, params.w, params.u, params.b, x, h_prev, c_prev)


def _embed_row(tape, embeddings, idx: int):
    if isinstance(embeddings, Tensor):
        return take_row(tape, embeddings, idx)
    return embeddings.row(tape, idx)


def _run_direction(tape, params: LstmParams, xs):
    hd = params.hidden_dim
    h = Tensor(np.zeros(hd))
    c = Tensor(np.zeros(hd))
    for x in xs:
        h, c = lstm_step(tape, params, x, h, c)
    return h


def encode_edu(tape, token_ids, embeddings, forward_params: LstmParams,
               backward_params: LstmParams, dropout_p: float = 0.0,
               rng=None, training: bool = False):
    """Encode a token id sequence as [last forward state ++ last backward state].

    embeddings is either a Tensor matrix (rows participate in the
    gradient) or any object with a row(tape, idx) method.  In training
    mode each embedded position is multiplied by its own dropout mask.
    An EDU that lost every token to normalization encodes as zeros.
    """
    h = forward_params.hidden_dim
    if len(token_ids) == 0:
        log.warning("encoding an empty EDU as a zero vector")
        return Tensor(np.zeros(2 * h))
    xs = [_embed_row(tape, embeddings, int(i)) for i in token_ids]
    if training and dropout_p > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        xs = [mul(tape, x, dropout_mask(rng, x.shape, dropout_p)) for x in xs]
    last_forward = _run_direction(tape, forward_params, xs)
    last_backward = _run_direction(tape, backward_params, list(reversed(xs)))
    return concat(tape, last_forward, last_backward)
