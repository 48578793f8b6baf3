"""Communication Block: scaled dot-product attention over the agents' hidden
states, producing each agent's aggregated peer information.

One head, no value projection: scores come from a self-query and a cognition
map, the values are the raw hidden states.  The softmax normalizer runs over
all agents (self included) while the value sum skips the self term, so each
row's effective weights sum to 1 - w[i][i].  Renormalizing over peers only is
available behind ``exclude_self_from_softmax`` for the ambiguity-curious.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, ShapeError
from .nn import glorot


class AttentionParams:
    """Registers the square self-query / cognition maps W_q, W_k."""

    def __init__(self, prefix, d_h):
        self.prefix = prefix
        self.d_h = d_h

    def init(self, params, rng):
        params.add(f"{self.prefix}.wq", glorot(rng, self.d_h, self.d_h))
        params.add(f"{self.prefix}.wk", glorot(rng, self.d_h, self.d_h))


def attention_scores(hidden, params, prefix):
    """Score matrix c[..., i, j] = dot(W_q h_i, W_k h_j) / sqrt(d_h).

    `hidden` is a stacked DiffValue of shape (..., n_agents, d_h).
    """
    d_h = hidden.data.shape[-1]
    wq = params[f"{prefix}.wq"]
    wk = params[f"{prefix}.wk"]
    if wq.data.shape != (d_h, d_h) or wk.data.shape != (d_h, d_h):
        raise ShapeError(
            f"attention: hidden dim {d_h} does not match maps "
            f"{wq.data.shape} / {wk.data.shape}"
        )
    q = ad.matmul(hidden, wq)
    k = ad.matmul(hidden, wk)
    return ad.scale(ad.bmatmul(q, k, transpose_b=True), 1.0 / np.sqrt(d_h))


def attention_weights(scores, exclude_self=False):
    """Row-wise softmax of the score matrix.

    With ``exclude_self`` the diagonal is pushed to -inf before the softmax,
    so the normalizer runs over peers only.
    """
    if exclude_self:
        n = scores.data.shape[-1]
        mask = DiffValue(np.where(np.eye(n) > 0.5, -1e30, 0.0))
        scores = ad.add(scores, mask)
    return ad.softmax(scores)


def true_info(weights, hidden):
    """Peer aggregate v_i = sum_{j != i} w[i][j] h_j (self term dropped)."""
    n = weights.data.shape[-1]
    if n == 1:
        return ad.scale(hidden, 0.0)
    offdiag = DiffValue(1.0 - np.eye(n))
    return ad.bmatmul(ad.mul(weights, offdiag), hidden)


def communicate(hidden, params, prefix, exclude_self_from_softmax=False):
    """Full block: stacked hidden states (..., n, d_h) -> stacked v (..., n, d_h)."""
    scores = attention_scores(hidden, params, prefix)
    weights = attention_weights(scores, exclude_self=exclude_self_from_softmax)
    return true_info(weights, hidden)
