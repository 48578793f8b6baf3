"""Full agent network: selection block, attention communication, regeneration
and the per-agent Q head, sharing one ParamSet across agents.

Two evaluation paths cover the whole lifecycle:

* :class:`RolloutState` steps a single episode incrementally (acting);
* :func:`episode_forward` replays padded episode batches for training, with
  agents stacked into the batch axis so shared parameters are evaluated once.
"""

import numpy as np

from . import autodiff as ad
from . import comm
from .autodiff import DiffValue, ParamSet
from .mixer import AgentQHead, QmixMixer, VdnMixer
from .regen import RegenBlock
from .ssm import GatedRecurrentBlock, MiniBuffer, SelectionBlock


def _even(width):
    return width + (width % 2)


class AgentNetwork:
    """Shape/assembly of all learnable blocks; parameters live in a ParamSet."""

    def __init__(self, env_spec, d_h=32, window=4, hidden=64, mixer_key="qmix",
                 mix_hidden=32, weight_transform="abs", recurrent=False,
                 exclude_self_from_softmax=False, q_bias_init=0.0):
        self.env_spec = env_spec
        self.d_h = d_h
        self.window = window
        self.recurrent = recurrent
        self.exclude_self_from_softmax = exclude_self_from_softmax
        self.q_bias_init = q_bias_init
        self.pair_dim = env_spec.obs_dim + env_spec.n_actions
        self.sel_width = _even(window * self.pair_dim)
        self.regen_width = _even(env_spec.n_agents * window * self.pair_dim)

        block_cls = GatedRecurrentBlock if recurrent else SelectionBlock
        self.sel = block_cls("sel", self.sel_width, d_h, hidden=hidden)
        self.att = comm.AttentionParams("att", d_h)
        self.regen = RegenBlock("regen", self.regen_width, d_h, d_h,
                                hidden=hidden, recurrent=recurrent)
        self.qhead = AgentQHead("qhead", d_h, env_spec.n_actions, hidden=hidden)
        if mixer_key == "qmix":
            self.mixer = QmixMixer("mix", env_spec.n_agents, env_spec.state_dim,
                                   mix_hidden=mix_hidden, transform=weight_transform)
        elif mixer_key == "vdn":
            self.mixer = VdnMixer("mix", env_spec.n_agents, env_spec.state_dim)
        else:
            raise ValueError(f"unknown mixer key {mixer_key!r}")

    def init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet()
        self.sel.init(params, rng)
        self.att.init(params, rng)
        self.regen.init(params, rng)
        self.qhead.init(params, rng, bias_init=self.q_bias_init)
        self.mixer.init(params, rng)
        return params

    # -- shared forward pieces (agents stacked into the leading axis) -------

    def _hidden_step(self, params, window_flat, h_prev):
        return self.sel.forward(params, window_flat, h_prev)

    def _regen_step(self, params, window_flat, h_prev):
        return self.regen.forward(params, window_flat, h_prev)

    def _q_values(self, params, v_bar, h):
        return self.qhead(params, v_bar, h)

    def _communicate(self, params, hidden3):
        return comm.communicate(hidden3, params, "att",
                                exclude_self_from_softmax=self.exclude_self_from_softmax)


class RolloutState:
    """Incremental per-episode evaluation state for one environment instance.

    ``use_comm=False`` is the decentralized execution path: the communication
    block is never evaluated and peer windows are never read, so agent i's
    action is a function of agent i's own history alone.
    """

    def __init__(self, net, params):
        self.net = net
        self.params = params
        spec = net.env_spec
        self.n = spec.n_agents
        self.buffers = [MiniBuffer(net.window, spec.obs_dim, spec.n_actions)
                        for _ in range(self.n)]
        self.h = DiffValue(np.zeros((self.n, net.d_h)))
        self.h_regen = DiffValue(np.zeros((self.n, net.d_h)))
        self.prev_actions = np.zeros((self.n, spec.n_actions))

    def reset(self):
        for buf in self.buffers:
            buf.clear()
        self.h = DiffValue(np.zeros((self.n, self.net.d_h)))
        self.h_regen = DiffValue(np.zeros((self.n, self.net.d_h)))
        self.prev_actions = np.zeros((self.n, self.net.env_spec.n_actions))

    def _windows(self, peers_allowed):
        net = self.net
        own = np.zeros((self.n, net.sel_width))
        for i, buf in enumerate(self.buffers):
            flat = buf.encode_window()
            own[i, : flat.size] = flat
        reg = np.zeros((self.n, net.regen_width))
        for i in range(self.n):
            peers = [j for j in range(self.n) if j != i][:peers_allowed]
            parts = [self.buffers[i].encode_window()]
            parts += [self.buffers[j].encode_window() for j in peers]
            flat = np.concatenate(parts)
            reg[i, : flat.size] = flat
        return own, reg

    def q_values(self, observations, alpha_val, peers_allowed, use_comm):
        """Push the step's observations and return per-agent action values."""
        net = self.net
        for i, obs in enumerate(observations):
            self.buffers[i].push(obs, self.prev_actions[i])
        own, reg = self._windows(peers_allowed if use_comm else 0)

        self.h = net._hidden_step(self.params, DiffValue(own), self.h)
        v_hat, self.h_regen = net._regen_step(self.params, DiffValue(reg), self.h_regen)
        if use_comm:
            hidden3 = ad.reshape(self.h, (1, self.n, net.d_h))
            v = ad.reshape(net._communicate(self.params, hidden3), (self.n, net.d_h))
            v_bar = ad.add(ad.scale(v_hat, 1.0 - alpha_val), ad.scale(v, alpha_val))
        else:
            v_bar = v_hat
        q = net._q_values(self.params, v_bar, self.h)
        return q.data.copy()

    def record_actions(self, joint_action):
        self.prev_actions = np.zeros_like(self.prev_actions)
        for i, a in enumerate(joint_action):
            self.prev_actions[i, a] = 1.0


def build_windows(obs, actions_onehot, window):
    """Per-step encoded windows from padded episode arrays.

    obs: (B, L1, n, obs_dim); actions_onehot: (B, L1-1, n, A).  Returns
    (L1, B, n, window*pair_dim): at step t the window holds the pairs
    (obs_k, action_{k-1}) for k = t-window+1 .. t, zero slots where k < 0,
    oldest first.
    """
    B, L1, n, obs_dim = obs.shape
    A = actions_onehot.shape[-1]
    pair_dim = obs_dim + A
    prev = np.zeros((B, L1, n, A))
    prev[:, 1:] = actions_onehot
    pairs = np.concatenate([obs, prev], axis=-1)  # (B, L1, n, pair_dim)
    out = np.zeros((L1, B, n, window * pair_dim))
    for t in range(L1):
        for slot in range(window):
            k = t - window + 1 + slot
            if k < 0:
                continue
            lo = slot * pair_dim
            out[t, :, :, lo : lo + pair_dim] = pairs[:, k]
    return out


def episode_forward(net, params, obs, actions_onehot, alpha_val, peers_allowed,
                    use_comm):
    """Replay a padded episode batch through the agent network.

    Returns (qs, v_hats, vs): lists over steps t = 0..L of per-step action
    values (B, n, A) and, when communication is on, the stacked regenerated /
    true information tensors (B, n, d_h).  `vs` entries are None with
    communication off.
    """
    B, L1, n, _ = obs.shape
    d_h = net.d_h
    windows = build_windows(obs, actions_onehot, net.window)  # (L1, B, n, w)

    h = DiffValue(np.zeros((B * n, d_h)))
    h_regen = DiffValue(np.zeros((B * n, d_h)))
    qs, v_hats, vs = [], [], []
    for t in range(L1):
        own_flat = np.zeros((B * n, net.sel_width))
        own_flat[:, : windows.shape[-1]] = windows[t].reshape(B * n, -1)

        reg = np.zeros((B, n, net.regen_width))
        allowed = peers_allowed if use_comm else 0
        for i in range(n):
            peers = [j for j in range(n) if j != i][:allowed]
            parts = [windows[t][:, i]] + [windows[t][:, j] for j in peers]
            flat = np.concatenate(parts, axis=-1)
            reg[:, i, : flat.shape[-1]] = flat

        h = net._hidden_step(params, DiffValue(own_flat), h)
        v_hat, h_regen = net._regen_step(
            params, DiffValue(reg.reshape(B * n, -1)), h_regen
        )
        if use_comm:
            hidden3 = ad.reshape(h, (B, n, d_h))
            v3 = net._communicate(params, hidden3)
            v = ad.reshape(v3, (B * n, d_h))
            v_bar = ad.add(ad.scale(v_hat, 1.0 - alpha_val), ad.scale(v, alpha_val))
            vs.append(ad.reshape(v, (B, n, d_h)))
        else:
            v_bar = v_hat
            vs.append(None)
        q = net._q_values(params, v_bar, h)
        qs.append(ad.reshape(q, (B, n, net.env_spec.n_actions)))
        v_hats.append(ad.reshape(v_hat, (B, n, d_h)))
    return qs, v_hats, vs
