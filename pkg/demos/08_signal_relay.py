"""Training a tacit relay convention on SignalMatch.

Agent 0 holds a private binary signal; reward arrives only if both agents
output it on the final step. During training agent 1 can read the signal
through the attention channel, but that channel anneals away, so the pair
must invent a convention that survives decentralization: agent 0 acts its
signal out on the first step and agent 1 reads it back from the visible
joint action. This takes a few minutes to train.
"""

import tempfile

import numpy as np

from tacit.config import load_config
from tacit.trainer import Trainer

CONFIG = "configs/signal.ini"


def main():
    cfg = load_config(CONFIG, ["seed=0", "eval_interval=0"])
    print(f"training {cfg.total_steps} steps on {cfg.env} "
          f"(seed {cfg.seed}, ~3 minutes)...")
    trainer = Trainer(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        trainer.run(tmp, quiet=True)

    mean, std, _ = trainer.evaluate("decentralized", 20)
    print(f"decentralized greedy return: {mean:.2f} +- {std:.2f} "
          "(oracle optimum 1.00)\n")

    print("the learned convention, one greedy episode per signal:")
    env = cfg.build_env()
    shown = set()
    for seed in range(10):
        env.reset(seed)
        signal = env._signal
        if signal in shown:
            continue
        shown.add(signal)
        ep = trainer.rollout_episode(env, 0.0, cfg.total_steps,
                                     "decentralized", seed)
        first, final = (tuple(int(a) for a in st) for st in ep.actions)
        print(f"  signal {signal}: step-1 actions {first} "
              f"(agent 0 acts the signal out), step-2 actions {final} "
              f"-> reward {ep.rewards[-1]:.0f}")
        if len(shown) == env.n_signals:
            break


if __name__ == "__main__":
    main()
