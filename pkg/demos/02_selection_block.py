"""Inside the Selection Block: mini-buffer, gating unit, and the selective
state-space recurrence.

Walks one agent's observation stream through the block and shows how the
input-dependent step size turns into the discrete transition factors.
"""

import numpy as np

from tacit.autodiff import DiffValue, ParamSet
from tacit.ssm import (
    MiniBuffer, SelectionBlock, selection_params, gating_unit, zoh_discretize,
    window_width,
)


def main():
    rng = np.random.default_rng(3)
    obs_dim, n_actions, window = 4, 3, 2
    width = window_width(window, obs_dim, n_actions)
    block = SelectionBlock("sel", width, state_dim=6, hidden=16)
    params = ParamSet()
    block.init(params, rng)

    print("discretization on one scalar channel:")
    for delta in (0.1, 1.0, np.log(2)):
        a_bar, b_bar = zoh_discretize(
            DiffValue([-1.0]), DiffValue([1.0]), DiffValue([delta])
        )
        print(f"  a=-1, b=1, delta={delta:.3f} -> "
              f"A_bar={a_bar.data[0]:.4f}, B_bar={b_bar.data[0]:.4f}")
    print("  (delta=ln 2 gives the textbook half-life: A_bar = B_bar = 1/2)\n")

    buf = MiniBuffer(window, obs_dim, n_actions)
    h = DiffValue(np.zeros((1, 6)))
    prev_action = np.zeros(n_actions)
    print("stepping a random episode through the block:")
    for t in range(4):
        obs = rng.standard_normal(obs_dim)
        buf.push(obs, prev_action)
        flat = DiffValue(buf.encode_window()[None, :])
        z = gating_unit(flat, params, "sel", block.mlp_a, block.mlp_b)
        delta, _, _ = selection_params(z, params, "sel")
        h = block.forward(params, flat, h)
        print(f"  t={t}: window fill {len(buf)}/{window}, "
              f"mean step size {delta.data.mean():.3f}, |h| {np.abs(h.data).mean():.3f}")
        a = int(rng.integers(n_actions))
        prev_action = np.eye(n_actions)[a]
    print("\nthe hidden state is the block output; the gate decides how much")
    print("of each window enters the recurrence at that step")


if __name__ == "__main__":
    main()
