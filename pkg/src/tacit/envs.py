"""Desk-scale cooperative Dec-POMDP environments with exact oracles.

Three environments, each small enough that the optimal expected discounted
return is exactly computable:

* ClimbGame: one-shot 2-agent 3-action matrix game with steep miscoordination
  penalties; each agent observes only its own id.
* SignalMatch: the first agent holds a private signal; reward arrives on the
  second (final) step only when every agent outputs the signal value.  All
  previous-step joint actions are observable, so the signal can be passed by
  acting it out.
* CaptureGrid: 4x4 grid pursuit with a 1-cell observation radius, shared
  capture bonus and per-step penalty.

All dynamics are deterministic given the reset seed, so replaying a recorded
action sequence reproduces a trajectory bit-exactly.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DecPomdpSpec:
    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    gamma: float
    episode_limit: int

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"discount must lie in (0, 1], got {self.gamma}")
        for name in ("n_agents", "n_actions", "obs_dim", "state_dim", "episode_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class StepResult:
    obs: list            # per-agent observation vectors
    state: np.ndarray    # global state vector
    reward: float        # shared by every agent
    terminated: bool
    step: int


class EpisodeOver(RuntimeError):
    """Raised when stepping an already-terminated episode."""


def _one_hot(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


class _EnvBase:
    def _check_actions(self, joint_action):
        if self._done:
            raise EpisodeOver("step() on a terminated episode; call reset() first")
        if len(joint_action) != self.spec.n_agents:
            raise ValueError(
                f"expected {self.spec.n_agents} actions, got {len(joint_action)}"
            )
        for a in joint_action:
            if not 0 <= a < self.spec.n_actions:
                raise ValueError(f"action {a} outside [0, {self.spec.n_actions})")


class ClimbGame(_EnvBase):
    """One-shot cooperative matrix game; the 11 sits behind two -30 cliffs."""

    PAYOFF = np.array([[11.0, -30.0, 0.0], [-30.0, 7.0, 6.0], [0.0, 0.0, 5.0]])

    def __init__(self):
        self.spec = DecPomdpSpec(
            n_agents=2, n_actions=3, obs_dim=2, state_dim=1, gamma=1.0, episode_limit=1
        )
        self._done = True

    def reset(self, seed=0):
        self._done = False
        self._t = 0
        return StepResult(
            obs=[_one_hot(i, 2) for i in range(2)],
            state=np.ones(1),
            reward=0.0,
            terminated=False,
            step=0,
        )

    def step(self, joint_action):
        self._check_actions(joint_action)
        reward = float(self.PAYOFF[joint_action[0], joint_action[1]])
        self._done = True
        self._t = 1
        return StepResult(
            obs=[_one_hot(i, 2) for i in range(2)],
            state=np.ones(1),
            reward=reward,
            terminated=True,
            step=1,
        )


class SignalMatch(_EnvBase):
    """Private-signal relay: everyone must output agent 0's signal at step 2.

    Observations: [agent id one-hot | own signal one-hot (zeros for all but
    agent 0) | previous joint actions one-hot (zeros at step 0) | step flag].
    The only route from signal to the other agents is agent 0's first action.
    """

    def __init__(self, n_agents=2, n_signals=2):
        if n_agents < 2 or n_agents > 4:
            raise ValueError("signal match supports 2-4 agents")
        obs_dim = n_agents + n_signals + n_agents * n_signals + 1
        state_dim = n_signals + n_agents * n_signals + 1
        self.n_signals = n_signals
        self.spec = DecPomdpSpec(
            n_agents=n_agents,
            n_actions=n_signals,
            obs_dim=obs_dim,
            state_dim=state_dim,
            gamma=1.0,
            episode_limit=2,
        )
        self._done = True

    def _obs(self):
        out = []
        for i in range(self.spec.n_agents):
            signal = _one_hot(self._signal, self.n_signals) if i == 0 else np.zeros(self.n_signals)
            out.append(
                np.concatenate(
                    [_one_hot(i, self.spec.n_agents), signal, self._last_actions, [float(self._t)]]
                )
            )
        return out

    def _state(self):
        return np.concatenate(
            [_one_hot(self._signal, self.n_signals), self._last_actions, [float(self._t)]]
        )

    def reset(self, seed=0):
        rng = np.random.default_rng(seed)
        self._signal = int(rng.integers(self.n_signals))
        self._last_actions = np.zeros(self.spec.n_agents * self.n_signals)
        self._t = 0
        self._done = False
        return StepResult(self._obs(), self._state(), 0.0, False, 0)

    def step(self, joint_action):
        self._check_actions(joint_action)
        self._t += 1
        self._last_actions = np.concatenate(
            [_one_hot(a, self.n_signals) for a in joint_action]
        )
        terminated = self._t >= self.spec.episode_limit
        reward = 0.0
        if terminated and all(a == self._signal for a in joint_action):
            reward = 1.0
        self._done = terminated
        return StepResult(self._obs(), self._state(), reward, terminated, self._t)


class CaptureGrid(_EnvBase):
    """Grid pursuit: all agents must close within one cell of a static prey.

    Actions: stay/up/down/left/right; agents may overlap.  Reward is -0.1 per
    step plus +10 on the capturing step; the episode also ends at the step
    limit.  Each agent sees its own cell one-hot plus prey/peer flags for the
    surrounding 3x3 window.
    """

    SIZE = 4
    MOVES = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]

    def __init__(self, n_agents=2):
        if n_agents < 2 or n_agents > 3:
            raise ValueError("capture grid supports 2-3 agents")
        cells = self.SIZE * self.SIZE
        obs_dim = n_agents + cells + 2 * 9
        state_dim = (n_agents + 1) * cells + 1
        self.spec = DecPomdpSpec(
            n_agents=n_agents,
            n_actions=5,
            obs_dim=obs_dim,
            state_dim=state_dim,
            gamma=0.99,
            episode_limit=20,
        )
        self._done = True

    def _cell(self, pos):
        return pos[0] * self.SIZE + pos[1]

    def _window(self, pos, others):
        prey_flags, peer_flags = np.zeros(9), np.zeros(9)
        for k, (dr, dc) in enumerate(itertools.product((-1, 0, 1), repeat=2)):
            r, c = pos[0] + dr, pos[1] + dc
            if not (0 <= r < self.SIZE and 0 <= c < self.SIZE):
                continue
            if (r, c) == self._prey:
                prey_flags[k] = 1.0
            if (r, c) in others:
                peer_flags[k] = 1.0
        return np.concatenate([prey_flags, peer_flags])

    def _obs(self):
        out = []
        for i, pos in enumerate(self._agents):
            others = [p for j, p in enumerate(self._agents) if j != i]
            out.append(
                np.concatenate(
                    [
                        _one_hot(i, self.spec.n_agents),
                        _one_hot(self._cell(pos), self.SIZE * self.SIZE),
                        self._window(pos, others),
                    ]
                )
            )
        return out

    def _state(self):
        cells = self.SIZE * self.SIZE
        parts = [_one_hot(self._cell(p), cells) for p in self._agents]
        parts.append(_one_hot(self._cell(self._prey), cells))
        parts.append(np.array([self._t / self.spec.episode_limit]))
        return np.concatenate(parts)

    def reset(self, seed=0):
        rng = np.random.default_rng(seed)
        cells = self.SIZE * self.SIZE
        picks = rng.choice(cells, size=self.spec.n_agents + 1, replace=False)
        self._agents = [divmod(int(c), self.SIZE) for c in picks[:-1]]
        self._prey = divmod(int(picks[-1]), self.SIZE)
        self._t = 0
        self._done = False
        return StepResult(self._obs(), self._state(), 0.0, False, 0)

    def _captured(self):
        return all(
            max(abs(p[0] - self._prey[0]), abs(p[1] - self._prey[1])) <= 1
            for p in self._agents
        )

    def step(self, joint_action):
        self._check_actions(joint_action)
        self._t += 1
        moved = []
        for pos, a in zip(self._agents, joint_action):
            dr, dc = self.MOVES[a]
            r = min(max(pos[0] + dr, 0), self.SIZE - 1)
            c = min(max(pos[1] + dc, 0), self.SIZE - 1)
            moved.append((r, c))
        self._agents = moved
        captured = self._captured()
        reward = -0.1 + (10.0 if captured else 0.0)
        terminated = captured or self._t >= self.spec.episode_limit
        self._done = terminated
        return StepResult(self._obs(), self._state(), reward, terminated, self._t)


# ---------------------------------------------------------------------------
# construction and oracles

ENV_KEYS = ("climb", "signal", "capture")


def make_env(key, n_agents=None):
    if key == "climb":
        return ClimbGame()
    if key == "signal":
        return SignalMatch(n_agents=n_agents or 2)
    if key == "capture":
        return CaptureGrid(n_agents=n_agents or 2)
    raise ValueError(f"unknown environment key {key!r}; choose from {ENV_KEYS}")


def _capture_optimal_return(env, seed):
    """Exact finite-horizon value iteration over joint agent positions."""
    env.reset(seed)
    size, gamma, horizon = env.SIZE, env.spec.gamma, env.spec.episode_limit
    cells = size * size
    prey = env._prey
    start = tuple(env._cell(p) for p in env._agents)
    n = env.spec.n_agents

    def near(cell):
        r, c = divmod(cell, size)
        return max(abs(r - prey[0]), abs(c - prey[1])) <= 1

    def move(cell, a):
        r, c = divmod(cell, size)
        dr, dc = env.MOVES[a]
        return min(max(r + dr, 0), size - 1) * size + min(max(c + dc, 0), size - 1)

    states = list(itertools.product(range(cells), repeat=n))
    value = {s: 0.0 for s in states}
    for _ in range(horizon):
        nxt = {}
        for s in states:
            best = -np.inf
            for acts in itertools.product(range(5), repeat=n):
                s2 = tuple(move(c, a) for c, a in zip(s, acts))
                captured = all(near(c) for c in s2)
                r = -0.1 + (10.0 if captured else 0.0)
                v = r if captured else r + gamma * value[s2]
                best = max(best, v)
            nxt[s] = best
        value = nxt
    return value[start]


def oracle_optimal_return(env, seed=0):
    """Exact optimal expected discounted return for an enumerable environment."""
    if isinstance(env, ClimbGame):
        return float(ClimbGame.PAYOFF.max())
    if isinstance(env, SignalMatch):
        # reward 1 is reachable for every signal on the final step
        return env.spec.gamma
    if isinstance(env, CaptureGrid):
        return _capture_optimal_return(env, seed)
    raise ValueError(f"no oracle for environment type {type(env).__name__}")


def export_trajectory_jsonl(path, records):
    """Write one JSON object per step: step, state, obs, actions, reward, done."""
    with open(path, "w") as f:
        for rec in records:
            f.write(
                json.dumps(
                    {
                        "step": rec["step"],
                        "state": list(np.asarray(rec["state"], dtype=float)),
                        "obs": [list(np.asarray(o, dtype=float)) for o in rec["obs"]],
                        "actions": [int(a) for a in rec["actions"]],
                        "reward": float(rec["reward"]),
                        "done": bool(rec["done"]),
                    }
                )
                + "\n"
            )
