import json

import numpy as np
import pytest

from tacit.envs import (
    CaptureGrid, ClimbGame, DecPomdpSpec, EpisodeOver, SignalMatch,
    export_trajectory_jsonl, make_env, oracle_optimal_return,
)
from tacit.trainer import capture_shortest_return


class TestSpec:
    def test_valid(self):
        spec = DecPomdpSpec(2, 3, 4, 1, 0.99, 10)
        assert spec.n_agents == 2

    def test_bad_discount(self):
        for gamma in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError, match="discount"):
                DecPomdpSpec(2, 3, 4, 1, gamma, 10)

    def test_nonpositive_counts(self):
        with pytest.raises(ValueError, match="n_agents"):
            DecPomdpSpec(0, 3, 4, 1, 0.9, 10)
        with pytest.raises(ValueError, match="episode_limit"):
            DecPomdpSpec(2, 3, 4, 1, 0.9, 0)


class TestClimbGame:
    def test_payoff_table(self):
        env = ClimbGame()
        expected = {
            (0, 0): 11.0, (0, 1): -30.0, (0, 2): 0.0,
            (1, 0): -30.0, (1, 1): 7.0, (1, 2): 6.0,
            (2, 0): 0.0, (2, 1): 0.0, (2, 2): 5.0,
        }
        for (a, b), r in expected.items():
            env.reset()
            result = env.step([a, b])
            assert result.reward == r
            assert result.terminated

    def test_observations_are_agent_ids(self):
        result = ClimbGame().reset()
        np.testing.assert_array_equal(result.obs[0], [1.0, 0.0])
        np.testing.assert_array_equal(result.obs[1], [0.0, 1.0])

    def test_one_shot(self):
        env = ClimbGame()
        env.reset()
        env.step([0, 0])
        with pytest.raises(EpisodeOver):
            env.step([0, 0])

    def test_action_validation(self):
        env = ClimbGame()
        env.reset()
        with pytest.raises(ValueError):
            env.step([0])
        with pytest.raises(ValueError):
            env.step([0, 3])

    def test_oracle_is_table_max(self):
        assert oracle_optimal_return(ClimbGame()) == 11.0


class TestSignalMatch:
    def test_signal_seeded_and_varied(self):
        env = SignalMatch()
        signals = set()
        for seed in range(20):
            env.reset(seed)
            first = env._signal
            env.reset(seed)
            assert env._signal == first
            signals.add(first)
        assert signals == {0, 1}

    def test_only_first_agent_sees_signal(self):
        env = SignalMatch()
        result = env.reset(seed=7)
        signal_slice = slice(2, 4)
        assert result.obs[0][signal_slice].sum() == 1.0
        assert int(np.argmax(result.obs[0][signal_slice])) == env._signal
        np.testing.assert_array_equal(result.obs[1][signal_slice], np.zeros(2))

    def test_previous_actions_become_observable(self):
        env = SignalMatch(n_signals=3)
        env.reset(seed=1)
        result = env.step([2, 0])
        action_slice = slice(5, 11)
        for obs in result.obs:
            np.testing.assert_array_equal(
                obs[action_slice], [0, 0, 1, 1, 0, 0]
            )

    def test_reward_only_on_final_matching_step(self):
        env = SignalMatch()
        env.reset(seed=3)
        s = env._signal
        mid = env.step([s, s])
        assert mid.reward == 0.0 and not mid.terminated
        final = env.step([s, s])
        assert final.reward == 1.0 and final.terminated

    def test_mismatch_earns_nothing(self):
        env = SignalMatch()
        env.reset(seed=3)
        s = env._signal
        env.step([s, s])
        final = env.step([s, (s + 1) % env.n_signals])
        assert final.reward == 0.0 and final.terminated

    def test_relay_strategy_achieves_oracle(self):
        # agent 0 acts out its signal, both repeat what step 0 displayed
        for ns in (2, 3):
            env = SignalMatch(n_signals=ns)
            base = env.spec.n_agents + ns
            for seed in range(10):
                first = env.reset(seed)
                s = int(np.argmax(first.obs[0][2:base]))
                mid = env.step([s, 0])
                relayed = int(np.argmax(mid.obs[1][base:base + ns]))
                result = env.step([relayed, relayed])
                assert result.reward == oracle_optimal_return(env) == 1.0

    def test_agent_count_bounds(self):
        with pytest.raises(ValueError):
            SignalMatch(n_agents=1)
        with pytest.raises(ValueError):
            SignalMatch(n_agents=5)


class TestCaptureGrid:
    def test_spawns_distinct_and_seeded(self):
        env = CaptureGrid()
        for seed in range(15):
            env.reset(seed)
            cells = [env._cell(p) for p in env._agents] + [env._cell(env._prey)]
            assert len(set(cells)) == 3
            snapshot = (tuple(env._agents), env._prey)
            env.reset(seed)
            assert (tuple(env._agents), env._prey) == snapshot

    def test_moves_clamped_at_borders(self):
        env = CaptureGrid()
        env.reset(0)
        env._agents = [(0, 0), (3, 3)]
        env._prey = (1, 2)  # keep the step non-capturing
        env._prey = (3, 0)
        env.step([1, 2])  # up from the top row, down from the bottom row
        assert env._agents == [(0, 0), (3, 3)]

    def test_capture_condition_chebyshev(self):
        env = CaptureGrid()
        env.reset(0)
        env._prey = (1, 1)
        env._agents = [(0, 0), (2, 2)]
        assert env._captured()
        env._agents = [(0, 0), (3, 2)]
        assert not env._captured()

    def test_step_rewards(self):
        env = CaptureGrid()
        env.reset(0)
        env._prey = (0, 0)
        env._agents = [(3, 3), (3, 2)]
        result = env.step([0, 0])
        assert result.reward == pytest.approx(-0.1) and not result.terminated
        env._agents = [(1, 1), (0, 2)]
        result = env.step([0, 3])  # second agent steps left into range
        assert result.reward == pytest.approx(9.9) and result.terminated

    def test_times_out_at_episode_limit(self):
        env = CaptureGrid()
        env.reset(2)
        env._prey = (0, 0)
        env._agents = [(3, 3), (3, 3)]
        for t in range(20):
            result = env.step([0, 0])
        assert result.terminated and result.step == 20
        with pytest.raises(EpisodeOver):
            env.step([0, 0])

    def test_replay_is_bit_deterministic(self):
        env = CaptureGrid()
        rng = np.random.default_rng(8)
        actions = [list(rng.integers(5, size=2)) for _ in range(6)]

        def run():
            trace = [env.reset(4)]
            for a in actions:
                trace.append(env.step(a))
                if trace[-1].terminated:
                    break
            return trace

        t1, t2 = run(), run()
        assert len(t1) == len(t2)
        for r1, r2 in zip(t1, t2):
            assert np.array_equal(r1.state, r2.state)
            assert r1.reward == r2.reward

    def test_observation_flags_local_window(self):
        env = CaptureGrid()
        env.reset(0)
        env._agents = [(1, 1), (2, 2)]
        env._prey = (1, 2)
        obs = env._obs()
        cells = 16
        # prey is one cell right of agent 0: window index for (0, +1) is 5
        prey_flags = obs[0][2 + cells : 2 + cells + 9]
        assert prey_flags[5] == 1.0 and prey_flags.sum() == 1.0
        # peer at (2,2) is diagonal (+1,+1): window index 8
        peer_flags = obs[0][2 + cells + 9 :]
        assert peer_flags[8] == 1.0 and peer_flags.sum() == 1.0

    def test_agent_count_bounds(self):
        with pytest.raises(ValueError):
            CaptureGrid(n_agents=1)
        with pytest.raises(ValueError):
            CaptureGrid(n_agents=4)


class TestOracles:
    def test_capture_value_iteration_matches_closed_form(self):
        env = CaptureGrid()
        for seed in (0, 3):
            vi = oracle_optimal_return(env, seed)
            env.reset(seed)
            closed = capture_shortest_return(env)
            assert vi == pytest.approx(closed, abs=1e-9)

    def test_capture_oracle_hand_case(self):
        env = CaptureGrid()
        env.reset(0)
        env._agents = [(0, 1), (2, 2)]
        env._prey = (1, 1)
        # both already adjacent: one step (any non-leaving move) captures
        assert capture_shortest_return(env) == pytest.approx(9.9)

    def test_unknown_env_rejected(self):
        with pytest.raises(ValueError, match="no oracle"):
            oracle_optimal_return(object())


class TestFactoryAndExport:
    def test_make_env_keys(self):
        assert isinstance(make_env("climb"), ClimbGame)
        assert isinstance(make_env("signal", n_agents=3), SignalMatch)
        assert isinstance(make_env("capture"), CaptureGrid)
        with pytest.raises(ValueError, match="unknown environment"):
            make_env("chess")

    def test_jsonl_roundtrip(self, tmp_path):
        env = SignalMatch()
        result = env.reset(seed=5)
        records = []
        actions = [1, 0]
        nxt = env.step(actions)
        records.append(
            {"step": 0, "state": result.state, "obs": result.obs,
             "actions": actions, "reward": nxt.reward, "done": nxt.terminated}
        )
        path = tmp_path / "traj.jsonl"
        export_trajectory_jsonl(path, records)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 1
        rec = json.loads(lines[0])
        assert rec["actions"] == [1, 0]
        assert rec["done"] is False
        np.testing.assert_allclose(rec["state"], result.state)
