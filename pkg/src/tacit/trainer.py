"""End-to-end training pipeline: epsilon-greedy rollouts into an episodic
replay buffer, TD learning through the monotonic mixer with a target network,
the scheduled alignment loss, and the ablation variants as presets.

Single-threaded throughout; given (seed, config) the emitted metrics are
bit-identical across reruns.
"""

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .agent import AgentNetwork, RolloutState, episode_forward
from .autodiff import DiffValue, NumericsError, sgd_step, save_params
from .envs import CaptureGrid, ClimbGame, SignalMatch, oracle_optimal_return
from .regen import AlphaSchedule, PeerDecaySchedule

METRICS_HEADER = [
    "step", "episode", "return", "optimal_return", "L_TD", "L_Align", "sigma",
    "alpha", "epsilon", "grad_norm", "eval_return_centralized",
    "eval_return_decentralized",
]


def epsilon_greedy(q, eps, rng):
    """Lowest-index argmax with probability 1-eps, else uniform."""
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("empty action-value vector")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"epsilon must lie in [0,1], got {eps}")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def td_target(r, gamma, q_next_max, terminated):
    """y = r if terminal else r + gamma * max_u' Q'."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0,1], got {gamma}")
    return r if terminated else r + gamma * q_next_max


def target_update(params, target_params, period, t):
    """Hard copy every `period` training steps; no-op otherwise."""
    if period < 1:
        raise ValueError("target period must be >= 1")
    if t % period == 0:
        target_params.copy_from(params)
        return True
    return False


@dataclass
class SigmaSchedule:
    """Step weight on the alignment loss: beta1 up to T, beta2 after."""

    threshold: int
    beta1: float
    beta2: float

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 <= self.beta1:
            raise ValueError("need 0 <= beta1 < beta2")

    def __call__(self, t):
        return self.beta1 if t <= self.threshold else self.beta2


class Episode:
    """One recorded trajectory (observation point T+1 included for targets)."""

    def __init__(self):
        self.obs = []        # length T+1, each (n, obs_dim)
        self.states = []     # length T+1
        self.actions = []    # length T, each (n,) ints
        self.rewards = []    # length T
        self.terminated = []  # length T

    @property
    def length(self):
        return len(self.actions)

    @property
    def undiscounted_return(self):
        return float(sum(self.rewards))


class ReplayBuffer:
    """Ring of full episodes, sampled uniformly without replacement."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._slots = []
        self._next = 0
        self.inserted = 0

    def __len__(self):
        return len(self._slots)

    def add(self, episode):
        if len(self._slots) < self.capacity:
            self._slots.append(episode)
        else:
            self._slots[self._next] = episode
        self._next = (self._next + 1) % self.capacity
        self.inserted += 1

    def sample(self, batch_size, rng):
        if batch_size > len(self._slots):
            raise ValueError(
                f"cannot sample {batch_size} episodes from {len(self._slots)}"
            )
        idx = rng.choice(len(self._slots), size=batch_size, replace=False)
        return [self._slots[i] for i in idx]


def batch_episodes(episodes, n_agents, n_actions, obs_dim, state_dim):
    """Pad a list of episodes into dense arrays plus a step mask."""
    B = len(episodes)
    L = max(ep.length for ep in episodes)
    obs = np.zeros((B, L + 1, n_agents, obs_dim))
    states = np.zeros((B, L + 1, state_dim))
    actions = np.zeros((B, L, n_agents), dtype=np.int64)
    onehot = np.zeros((B, L, n_agents, n_actions))
    rewards = np.zeros((B, L))
    terminated = np.zeros((B, L))
    mask = np.zeros((B, L))
    for e, ep in enumerate(episodes):
        T = ep.length
        obs[e, : T + 1] = np.stack(ep.obs)
        states[e, : T + 1] = np.stack(ep.states)
        actions[e, :T] = np.stack(ep.actions)
        for t, acts in enumerate(ep.actions):
            for i, a in enumerate(acts):
                onehot[e, t, i, a] = 1.0
        rewards[e, :T] = ep.rewards
        terminated[e, :T] = ep.terminated
        mask[e, :T] = 1.0
    return {
        "obs": obs, "states": states, "actions": actions, "onehot": onehot,
        "rewards": rewards, "terminated": terminated, "mask": mask,
    }


# ---------------------------------------------------------------------------
# variant presets


def apply_variant(cfg):
    """Resolve a variant key into network structure plus per-step settings.

    Returns (recurrent, settings) where settings(t) gives the dict of
    {alpha, use_comm, use_align} driving that training step.
    """
    alpha_sched = AlphaSchedule(cfg.t_max)
    switch = int(round(0.95 * cfg.total_steps))

    if cfg.variant in ("sica", "ica"):
        def settings(t):
            return {"alpha": alpha_sched(t), "use_comm": True, "use_align": True}
    elif cfg.variant == "sica-zero":
        def settings(t):
            return {"alpha": 0.0, "use_comm": False, "use_align": False}
    elif cfg.variant == "sica-one":
        def settings(t):
            return {"alpha": 1.0 if t < switch else 0.0, "use_comm": True,
                    "use_align": True}
    else:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    return cfg.variant == "ica", settings


class Trainer:
    """Owns the networks, schedules, buffer and the single-threaded run loop."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.env = cfg.build_env()
        spec = self.env.spec
        self.gamma = cfg.resolved_gamma(spec)

        recurrent, self.variant_settings = apply_variant(cfg)
        self.net = AgentNetwork(
            spec, d_h=cfg.state_dim, window=cfg.window, hidden=cfg.hidden,
            mixer_key=cfg.mixer, mix_hidden=cfg.mix_hidden,
            weight_transform=cfg.weight_transform, recurrent=recurrent,
            exclude_self_from_softmax=cfg.exclude_self_from_softmax,
            q_bias_init=cfg.q_bias_init,
        )
        self.params = self.net.init_params(cfg.seed)
        self.target_params = self.params.clone()
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.peer_decay = PeerDecaySchedule(cfg.peer_decay_steps, spec.n_agents)
        self.sigma = SigmaSchedule(cfg.sigma_threshold, cfg.beta1, cfg.beta2)
        self.rng = np.random.default_rng(cfg.seed)
        self.episode_count = 0

    # -- policies and rollouts ---------------------------------------------

    def epsilon(self, t):
        frac = min(1.0, t / self.cfg.eps_anneal_steps)
        return self.cfg.eps_start + frac * (self.cfg.eps_final - self.cfg.eps_start)

    def _mode_settings(self, t, mode):
        if mode == "decentralized":
            return {"alpha": 0.0, "use_comm": False}, 0
        if mode != "centralized":
            raise ValueError(f"unknown rollout mode {mode!r}")
        s = self.variant_settings(t)
        peers = 0 if not s["use_comm"] else self.peer_decay(t)
        return s, peers

    def rollout_episode(self, env, eps, t, mode, env_seed, rng=None,
                        perturb_peer_obs=None):
        """Play one episode; returns the recorded Episode.

        ``perturb_peer_obs`` (agent index -> callable) corrupts what *other*
        agents would see, for decentralization probes; the acting agent's own
        stream is left intact.
        """
        settings, peers = self._mode_settings(t, mode)
        state = RolloutState(self.net, self.params)
        result = env.reset(env_seed)
        ep = Episode()
        ep.obs.append(np.stack(result.obs))
        ep.states.append(result.state)
        while not result.terminated:
            obs_in = [o.copy() for o in result.obs]
            if perturb_peer_obs:
                for keep, fn in perturb_peer_obs.items():
                    for j in range(len(obs_in)):
                        if j != keep:
                            obs_in[j] = fn(obs_in[j])
            q = state.q_values(obs_in, settings["alpha"], peers, settings["use_comm"])
            acts = [epsilon_greedy(q[i], eps, rng or self.rng)
                    for i in range(len(obs_in))]
            state.record_actions(acts)
            result = env.step(acts)
            ep.actions.append(np.array(acts))
            ep.rewards.append(result.reward)
            ep.terminated.append(1.0 if result.terminated else 0.0)
            ep.obs.append(np.stack(result.obs))
            ep.states.append(result.state)
        return ep

    # -- learning ----------------------------------------------------------

    def train_step(self, batch, t):
        """One optimization step on a padded episode batch; returns metrics."""
        cfg = self.cfg
        spec = self.env.spec
        settings, peers = self._mode_settings(t, "centralized")
        n, d_h = spec.n_agents, self.net.d_h
        B, L = batch["rewards"].shape

        qs, v_hats, vs = episode_forward(
            self.net, self.params, batch["obs"], batch["onehot"],
            settings["alpha"], peers, settings["use_comm"],
        )
        tqs, _, _ = episode_forward(
            self.net, self.target_params, batch["obs"], batch["onehot"],
            settings["alpha"], peers, settings["use_comm"],
        )

        # bootstrapped targets from the target network (constants in the graph)
        y = np.zeros((B, L))
        for t_ep in range(L):
            max_next = tqs[t_ep + 1].data.max(axis=-1)          # (B, n)
            qtot_next = self.net.mixer(
                self.target_params, DiffValue(max_next),
                DiffValue(batch["states"][:, t_ep + 1]),
            ).data.ravel()
            y[:, t_ep] = (
                batch["rewards"][:, t_ep]
                + self.gamma * (1.0 - batch["terminated"][:, t_ep]) * qtot_next
            )

        mask = batch["mask"]
        mask_total = float(mask.sum())
        td_terms = None
        align_terms = None
        for t_ep in range(L):
            chosen = ad.sum_axis(ad.mul(qs[t_ep], DiffValue(batch["onehot"][:, t_ep])), -1)
            qtot = self.net.mixer(self.params, chosen, DiffValue(batch["states"][:, t_ep]))
            resid = ad.square(ad.sub(qtot, DiffValue(y[:, t_ep : t_ep + 1])))
            masked = ad.sum_all(ad.mul(resid, DiffValue(mask[:, t_ep : t_ep + 1])))
            td_terms = masked if td_terms is None else ad.add(td_terms, masked)

            if settings["use_align"] and vs[t_ep] is not None:
                diff = ad.sub(
                    v_hats[t_ep],
                    ad.detach(vs[t_ep]) if cfg.detach_align_target else vs[t_ep],
                )
                sq = ad.sum_axis(ad.sum_axis(ad.square(diff), -1), -1)  # (B,)
                masked_sq = ad.sum_all(ad.mul(sq, DiffValue(mask[:, t_ep])))
                align_terms = (
                    masked_sq if align_terms is None else ad.add(align_terms, masked_sq)
                )

        l_td = ad.scale(td_terms, 1.0 / mask_total)
        sigma_t = self.sigma(t)
        if align_terms is not None:
            l_align = ad.scale(align_terms, 1.0 / (mask_total * n * d_h))
            loss = ad.add(l_td, ad.scale(l_align, sigma_t))
            l_align_val = float(l_align.data)
        else:
            l_align = None
            loss = l_td
            l_align_val = 0.0

        if not np.isfinite(loss.data):
            raise NumericsError(f"non-finite loss at training step {t}")
        ad.backward(loss)
        grad_norm = sgd_step(self.params, cfg.lr, clip=cfg.grad_clip)
        return {
            "L_TD": float(l_td.data),
            "L_Align": l_align_val,
            "sigma": sigma_t,
            "alpha": settings["alpha"],
            "grad_norm": grad_norm,
        }

    # -- evaluation --------------------------------------------------------

    def evaluate(self, mode, episodes, t=None, seed_base=None):
        """Greedy rollouts; returns (mean return, std, action sequences)."""
        if episodes < 1:
            raise ValueError("need at least one evaluation episode")
        t = self.cfg.total_steps if t is None else t
        seed_base = 777_000_001 if seed_base is None else seed_base
        env = self.cfg.build_env()
        returns, action_seqs = [], []
        for e in range(episodes):
            ep = self.rollout_episode(
                env, 0.0, t, mode, seed_base + e, rng=np.random.default_rng(0)
            )
            returns.append(ep.undiscounted_return)
            action_seqs.append([tuple(int(a) for a in acts) for acts in ep.actions])
        arr = np.array(returns)
        return float(arr.mean()), float(arr.std()), action_seqs

    # -- episode oracle for the metrics stream ------------------------------

    def _episode_oracle(self, env_seed):
        if isinstance(self.env, (ClimbGame, SignalMatch)):
            return oracle_optimal_return(self.env)
        if isinstance(self.env, CaptureGrid):
            # value iteration per episode would dominate the run time; the
            # deterministic pursuit dynamics admit a closed form instead
            scratch = self.cfg.build_env()
            scratch.reset(env_seed)
            return capture_shortest_return(scratch)
        return float("nan")

    # -- main loop ---------------------------------------------------------

    def run(self, out_dir, quiet=False):
        cfg = self.cfg
        spec = self.env.spec
        os.makedirs(out_dir, exist_ok=True)
        manifest = {
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "code_version": _code_version(),
            "start_time": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "artifacts": {
                "metrics": "metrics.csv",
                "checkpoint": "checkpoint_final.bin",
            },
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

        metrics_path = os.path.join(out_dir, "metrics.csv")
        t = 0
        last_return = 0.0
        last_oracle = float("nan")
        with open(metrics_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRICS_HEADER)
            while t < cfg.total_steps:
                eps = self.epsilon(t)
                env_seed = cfg.seed * 1_000_003 + self.episode_count
                ep = self.rollout_episode(self.env, eps, t, "centralized", env_seed)
                self.buffer.add(ep)
                self.episode_count += 1
                last_return = ep.undiscounted_return
                last_oracle = self._episode_oracle(env_seed)
                if len(self.buffer) < cfg.batch_size:
                    continue
                episodes = self.buffer.sample(cfg.batch_size, self.rng)
                batch = batch_episodes(
                    episodes, spec.n_agents, spec.n_actions, spec.obs_dim,
                    spec.state_dim,
                )
                metrics = self.train_step(batch, t)
                target_update(self.params, self.target_params, cfg.target_period, t)

                row = [t, self.episode_count, last_return, last_oracle,
                       metrics["L_TD"], metrics["L_Align"], metrics["sigma"],
                       metrics["alpha"], eps, metrics["grad_norm"], "", ""]
                if cfg.eval_interval > 0 and (t + 1) % cfg.eval_interval == 0:
                    mc, _, _ = self.evaluate("centralized", cfg.eval_episodes, t=t,
                                             seed_base=900_000 + t)
                    md, _, _ = self.evaluate("decentralized", cfg.eval_episodes, t=t,
                                             seed_base=900_000 + t)
                    row[-2], row[-1] = mc, md
                    if not quiet:
                        print(f"step {t + 1}/{cfg.total_steps}: "
                              f"eval centralized {mc:.3f} decentralized {md:.3f}")
                writer.writerow(row)
                t += 1

        save_params(os.path.join(out_dir, "checkpoint_final.bin"), self.params)
        return metrics_path


def capture_shortest_return(env):
    """Closed-form optimal return for the pursuit grid (deterministic moves):
    every agent walks to the nearest cell adjacent to the prey, capture fires
    on the step the slowest agent arrives."""
    size = env.SIZE
    prey = env._prey
    near_cells = [
        (r, c)
        for r in range(size)
        for c in range(size)
        if max(abs(r - prey[0]), abs(c - prey[1])) <= 1
    ]
    steps_needed = 0
    for pos in env._agents:
        d = min(abs(pos[0] - r) + abs(pos[1] - c) for r, c in near_cells)
        steps_needed = max(steps_needed, d)
    k = max(steps_needed, 1)  # capture is only checked after a step
    if k > env.spec.episode_limit:
        return sum(-0.1 * env.spec.gamma ** (i - 1)
                   for i in range(1, env.spec.episode_limit + 1))
    return sum(-0.1 * env.spec.gamma ** (i - 1) for i in range(1, k + 1)) + \
        10.0 * env.spec.gamma ** (k - 1)


def _code_version():
    from . import __version__

    return __version__
