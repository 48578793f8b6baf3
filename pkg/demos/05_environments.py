"""The three desk-scale environments and their exact oracles.

Plays a short scripted episode in each environment, prints the oracle
optimal return, and exports one trajectory as JSONL.
"""

import os
import tempfile

import numpy as np

from tacit.envs import (
    CaptureGrid, ClimbGame, SignalMatch, export_trajectory_jsonl,
    oracle_optimal_return,
)


def main():
    print("== ClimbGame ==")
    env = ClimbGame()
    env.reset()
    result = env.step([0, 0])
    print(f"joint action (0,0): reward {result.reward} "
          f"(oracle optimum {oracle_optimal_return(env)})")
    env.reset()
    print(f"joint action (0,1): reward {env.step([0, 1]).reward} "
          "(the cliff beside the peak)\n")

    print("== SignalMatch ==")
    env = SignalMatch()
    base = env.spec.n_agents + env.n_signals
    first = env.reset(seed=4)
    signal = int(np.argmax(first.obs[0][2:base]))
    print(f"agent 0's private signal: {signal}")
    mid = env.step([signal, 0])           # agent 0 acts the signal out
    relayed = int(np.argmax(mid.obs[1][base:base + env.n_signals]))
    print(f"agent 1 reads it from the visible last action: {relayed}")
    result = env.step([relayed, relayed])
    print(f"both repeat it on the final step: reward {result.reward} "
          f"(oracle {oracle_optimal_return(env)})\n")

    print("== CaptureGrid ==")
    env = CaptureGrid()
    env.reset(seed=2)
    print(f"agents at {env._agents}, prey at {env._prey}")
    print(f"oracle optimal return for this spawn: "
          f"{oracle_optimal_return(env, seed=2):.4f}")

    records = []
    result = env.reset(seed=2)
    rng = np.random.default_rng(0)
    for t in range(3):
        actions = list(rng.integers(5, size=2))
        nxt = env.step(actions)
        records.append({"step": t, "state": result.state, "obs": result.obs,
                        "actions": actions, "reward": nxt.reward,
                        "done": nxt.terminated})
        result = nxt
        if nxt.terminated:
            break
    path = os.path.join(tempfile.gettempdir(), "capture_demo.jsonl")
    export_trajectory_jsonl(path, records)
    print(f"exported {len(records)} steps to {path}")


if __name__ == "__main__":
    main()
