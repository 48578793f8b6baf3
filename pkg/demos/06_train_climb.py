"""End-to-end training on ClimbGame.

Trains the full agent for a couple of thousand steps and shows the
decentralized greedy policy finding the optimistic (11) equilibrium instead
of the safe (5) one.  Runs in well under a minute.
"""

import tempfile

from tacit.config import load_config
from tacit.envs import oracle_optimal_return
from tacit.trainer import Trainer


def main():
    cfg = load_config("configs/climb.ini", ["eval.eval_interval=500"])
    trainer = Trainer(cfg)
    print(f"training {cfg.variant} on {cfg.env} for {cfg.total_steps} steps "
          f"(seed {cfg.seed})")
    with tempfile.TemporaryDirectory() as out:
        trainer.run(out, quiet=False)
    mean, std, seqs = trainer.evaluate("decentralized", 10)
    optimal = oracle_optimal_return(cfg.build_env())
    print(f"\ndecentralized greedy return: {mean:.1f} +- {std:.1f} "
          f"(oracle optimum {optimal:.0f})")
    print(f"greedy joint action: {seqs[0][0]}")


if __name__ == "__main__":
    main()
