"""Regeneration Block and the transition schedules.

The block rebuilds the peer aggregate from local history: its own selection
block (separate parameters) runs over the agent's window, optionally extended
with peers' windows early in training, and an MLP maps the hidden state to the
regenerated vector.  Two schedules drive the centralized-to-decentralized
handover: the cosine weight on true vs regenerated information, and the linear
decay of how many peer windows the block may still read.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, ShapeError
from .nn import MLP
from .ssm import GatedRecurrentBlock, SelectionBlock, encode_padded


@dataclass
class AlphaSchedule:
    """Cosine interpolation from alpha_start down to alpha_final over t_max.

    alpha(t) = final + (start - final) * (1 + cos(pi t / t_max)) / 2, clamped
    beyond t_max; alpha(0) = start, alpha(t_max) = final, alpha(t_max/2) is the
    midpoint exactly.
    """

    t_max: int
    alpha_start: float = 1.0
    alpha_final: float = 0.0

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")

    def __call__(self, t):
        if t < 0:
            raise ValueError("schedule step must be >= 0")
        if t >= self.t_max:
            return self.alpha_final
        w = 0.5 * (1.0 + np.cos(np.pi * t / self.t_max))
        return self.alpha_final + (self.alpha_start - self.alpha_final) * w


@dataclass
class PeerDecaySchedule:
    """Linear ramp of permitted peer windows from n-1 down to 0 at step K."""

    decay_steps: int
    n_agents: int

    def __post_init__(self):
        if self.decay_steps <= 0:
            raise ValueError("decay_steps must be positive")

    def __call__(self, t):
        if t < 0:
            raise ValueError("schedule step must be >= 0")
        if t >= self.decay_steps:
            return 0
        frac = 1.0 - t / self.decay_steps
        return min(self.n_agents - 1, int(np.ceil(frac * (self.n_agents - 1))))


def cross_info(v_hat, v, a):
    """Convex combination (1-a)*v_hat + a*v."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"mixing weight must lie in [0,1], got {a}")
    if v_hat.data.shape != v.data.shape:
        raise ShapeError(
            f"cross_info: shapes {v_hat.data.shape} and {v.data.shape} differ"
        )
    return ad.add(ad.scale(v_hat, 1.0 - a), ad.scale(v, a))


def align_loss(v_hats, vs, detach_target=True):
    """Mean squared regeneration error, averaged over agents.

    The true-information targets are detached by default so gradients shape
    only the regeneration path; ``detach_target=False`` gives the literal
    two-sided direction for ablation.
    """
    if len(v_hats) != len(vs) or not v_hats:
        raise ValueError("need one regenerated/true pair per agent")
    terms = []
    for v_hat, v in zip(v_hats, vs):
        target = ad.detach(v) if detach_target else v
        terms.append(ad.mse(v_hat, target))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.scale(total, 1.0 / len(v_hats))


class RegenBlock:
    """Own selection block over (own + permitted peer) windows, then an MLP.

    ``in_width`` must cover all n agents' windows; absent peers are zero-padded
    so shapes stay static as the decay schedule shrinks the input.
    """

    def __init__(self, prefix, in_width, state_dim, out_dim, hidden=64, recurrent=False):
        self.prefix = prefix
        self.in_width = in_width
        self.state_dim = state_dim
        self.out_dim = out_dim
        block_cls = GatedRecurrentBlock if recurrent else SelectionBlock
        self.block = block_cls(f"{prefix}.sel", in_width, state_dim, hidden=hidden)
        self.head = MLP(f"{prefix}.head", [state_dim, hidden, out_dim])

    def init(self, params, rng):
        self.block.init(params, rng)
        self.head.init(params, rng)
        # random output bias: the initial regenerated vector should be a
        # genuine guess, not a zero that trivially matches the small early
        # targets
        out_b = params[f"{self.prefix}.head.l1.b"]
        out_b.data[...] = 0.3 * rng.standard_normal(out_b.data.shape)

    def forward(self, params, window, h_prev):
        h = self.block.forward(params, window, h_prev)
        return self.head(params, h), h


def regen_window(own_buf, peer_bufs, t, schedule, total_width):
    """Encode own window plus the first peers(t) peer windows, zero-padded.

    Peers are retained lowest-index first as the decay schedule tightens; at
    and beyond the decay horizon the encoding is a function of own_buf only.
    """
    allowed = schedule(t)
    return encode_padded([own_buf] + list(peer_bufs[:allowed]), total_width)


def regenerate(own_buf, peer_bufs, t, schedule, block, params, h_prev):
    """One regeneration step; returns (v_hat, new inner hidden state)."""
    flat = regen_window(own_buf, peer_bufs, t, schedule, block.in_width)
    return block.forward(params, DiffValue(flat[None, :]), h_prev)
