"""Value-decomposition heads: per-agent Q head, monotonic state-conditioned
mixing (hypernetwork weights forced nonnegative), additive mixing, and an
exhaustive individual-vs-joint argmax checker.

Every argmax in this package breaks ties toward the lowest index, so the
greedy-composition property is literally testable.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, ShapeError
from .nn import Linear, MLP


class AgentQHead:
    """MLP from concat(cross info, hidden state) to the action-value vector."""

    def __init__(self, prefix, d_h, n_actions, hidden=64):
        self.prefix = prefix
        self.d_h = d_h
        self.n_actions = n_actions
        self.mlp = MLP(prefix, [2 * d_h, hidden, n_actions])

    def init(self, params, rng, bias_init=0.0):
        self.mlp.init(params, rng, final_bias_init=bias_init)

    def __call__(self, params, v_bar, h):
        if v_bar.data.shape[-1] != self.d_h or h.data.shape[-1] != self.d_h:
            raise ShapeError(
                f"q head: inputs {v_bar.data.shape} / {h.data.shape}, "
                f"expected trailing dim {self.d_h}"
            )
        return self.mlp(params, ad.concat([v_bar, h]))


def _nonneg(x, transform):
    if transform == "abs":
        return ad.absval(x)
    if transform == "softplus":
        return ad.softplus(x)
    if transform == "identity":  # deliberately unsafe; used to probe the checker
        return x
    raise ValueError(f"unknown weight transform {transform!r}")


class QmixMixer:
    """Monotonic two-layer mixer with state-conditioned hypernetwork weights.

    Q_tot = w2 . elu(W1 q + b1) + b2, with W1 and w2 elementwise nonnegative
    via the configured transform, which is what makes Q_tot monotone
    non-decreasing in every agent utility.
    """

    def __init__(self, prefix, n_agents, state_dim, mix_hidden=32, transform="abs"):
        self.prefix = prefix
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.mix_hidden = mix_hidden
        self.transform = transform
        self.hyper_w1 = Linear(f"{prefix}.hw1", state_dim, n_agents * mix_hidden)
        self.hyper_b1 = Linear(f"{prefix}.hb1", state_dim, mix_hidden)
        self.hyper_w2 = Linear(f"{prefix}.hw2", state_dim, mix_hidden)
        self.hyper_b2 = MLP(f"{prefix}.hb2", [state_dim, mix_hidden, 1])

    def init(self, params, rng):
        self.hyper_w1.init(params, rng)
        self.hyper_b1.init(params, rng)
        self.hyper_w2.init(params, rng)
        self.hyper_b2.init(params, rng)

    def __call__(self, params, qs, state):
        n, m = self.n_agents, self.mix_hidden
        batch = qs.data.shape[0]
        if qs.data.shape != (batch, n) or state.data.shape != (batch, self.state_dim):
            raise ShapeError(
                f"mixer: qs {qs.data.shape} / state {state.data.shape}, expected "
                f"({batch}, {n}) / ({batch}, {self.state_dim})"
            )
        w1 = ad.reshape(_nonneg(self.hyper_w1(params, state), self.transform), (batch, n, m))
        b1 = self.hyper_b1(params, state)
        w2 = _nonneg(self.hyper_w2(params, state), self.transform)
        b2 = self.hyper_b2(params, state)
        hidden = ad.elu(ad.add(ad.sum_axis(ad.mul(ad.reshape(qs, (batch, n, 1)), w1), 1), b1))
        return ad.add(ad.sum_axis(ad.mul(hidden, w2), 1, keepdims=True), b2)


class VdnMixer:
    """Parameter-free additive mixing: Q_tot is the exact sum of utilities."""

    def __init__(self, prefix, n_agents, state_dim):
        self.prefix = prefix
        self.n_agents = n_agents
        self.state_dim = state_dim

    def init(self, params, rng):
        pass

    def __call__(self, params, qs, state):
        if qs.data.shape[-1] != self.n_agents:
            raise ShapeError(
                f"vdn: qs {qs.data.shape}, expected trailing dim {self.n_agents}"
            )
        return ad.sum_axis(qs, -1, keepdims=True)


def vdn_mix(qs):
    """Plain-array additive mix for callers outside the autodiff graph."""
    qs = np.asarray(qs, dtype=np.float64)
    if qs.size < 1:
        raise ShapeError("vdn_mix needs at least one utility")
    return float(qs.sum())


@dataclass
class IgmReport:
    """Outcome of the exhaustive greedy-composition check."""

    trials: int
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def igm_check(mixer, params, n_actions, trials, rng):
    """Compare exhaustive joint argmax of the mixed value with the tuple of
    per-agent argmaxes on random utility tables and states.

    Ties break toward the lowest (joint) index on both sides.  Any mismatch is
    recorded as a violation with the offending tables.
    """
    n = mixer.n_agents
    if n_actions ** n > 10 ** 6:
        raise ValueError("joint action space too large to enumerate")
    combos = np.array(list(itertools.product(range(n_actions), repeat=n)))
    report = IgmReport(trials=trials)
    for trial in range(trials):
        qtab = rng.standard_normal((n, n_actions))
        state = rng.standard_normal(mixer.state_dim)
        per_agent = tuple(int(np.argmax(qtab[i])) for i in range(n))
        qs = DiffValue(qtab[np.arange(n), combos])  # (A^n, n) chosen utilities
        states = DiffValue(np.repeat(state[None, :], len(combos), axis=0))
        totals = mixer(params, qs, states).data.ravel()
        joint = tuple(int(a) for a in combos[int(np.argmax(totals))])
        if joint != per_agent:
            report.violations.append(
                {"trial": trial, "joint": joint, "individual": per_agent, "qtab": qtab}
            )
    return report
