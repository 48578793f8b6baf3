"""Selection Block: sliding observation-action window, gating unit and the
selective state-space (S6) recurrence with input-dependent discretization.

The state matrix is diagonal with strictly negative entries, so the zero-order
hold discretization stays elementwise and the per-step transition is a
contraction for any positive step size.  The gating output width equals the
state dimension: each state channel sees one scalar input per step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, NumericsError, ShapeError
from .nn import MLP, GruCell

# below this |delta * a| the exact ZOH factor is replaced by its Taylor series
SERIES_CUTOFF = 1e-6


@dataclass
class ObsActionPair:
    """One (observation, previous one-hot action) record of a single agent."""

    observation: np.ndarray
    prev_action: np.ndarray

    def encode(self):
        return np.concatenate([self.observation, self.prev_action])


class MiniBuffer:
    """Sliding window of the last `capacity` observation-action pairs."""

    def __init__(self, capacity, obs_dim, n_actions):
        if capacity < 1:
            raise ValueError("mini-buffer capacity must be >= 1")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.pair_dim = obs_dim + n_actions
        self.entries = []

    def push(self, observation, prev_action):
        obs = np.asarray(observation, dtype=np.float64)
        act = np.asarray(prev_action, dtype=np.float64)
        if obs.shape != (self.obs_dim,) or act.shape != (self.n_actions,):
            raise ShapeError(
                f"mini-buffer push: got obs {obs.shape} / action {act.shape}, "
                f"expected ({self.obs_dim},) / ({self.n_actions},)"
            )
        self.entries.append(ObsActionPair(obs, act))
        if len(self.entries) > self.capacity:
            self.entries.pop(0)

    def clear(self):
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def encode_window(self):
        """Flatten oldest-first, zero-padded at the front to a fixed width."""
        flat = np.zeros(self.capacity * self.pair_dim)
        pad = self.capacity - len(self.entries)
        for slot, pair in enumerate(self.entries):
            lo = (pad + slot) * self.pair_dim
            flat[lo : lo + self.pair_dim] = pair.encode()
        return flat


def window_width(capacity, obs_dim, n_actions):
    w = capacity * (obs_dim + n_actions)
    # gating splits the window in half, so keep the width even
    return w + (w % 2)


def encode_padded(buffers, total_width):
    """Concatenate several windows and zero-pad up to `total_width`."""
    flat = np.concatenate([b.encode_window() for b in buffers]) if buffers else np.zeros(0)
    if flat.size > total_width:
        raise ShapeError(f"window encoding of {flat.size} exceeds width {total_width}")
    out = np.zeros(total_width)
    out[: flat.size] = flat
    return out


def selection_params(x, params, prefix):
    """Input-dependent step size and projections (delta, B_t, C_t).

    C_t is produced for completeness; only the hidden state is consumed
    downstream, so the output projection never enters the recurrence.
    """
    delta = ad.softplus(ad.affine(x, params[f"{prefix}.sdelta.w"], params[f"{prefix}.sdelta.b"]))
    b_t = ad.affine(x, params[f"{prefix}.sb.w"], params[f"{prefix}.sb.b"])
    c_t = ad.affine(x, params[f"{prefix}.sc.w"], params[f"{prefix}.sc.b"])
    return delta, b_t, c_t


def zoh_discretize(a_diag, b_t, delta):
    """Zero-order hold: A_bar = exp(delta a), B_bar = (e^{delta a}-1)/a * b.

    Elementwise because the state matrix is diagonal.  For |delta*a| below
    SERIES_CUTOFF the ratio (e^x - 1)/x is evaluated by its series, removing
    the 0/0 at a -> 0.
    """
    da = ad.mul(delta, a_diag)
    a_bar = ad.exp(da)

    x = da.data
    small = np.abs(x) < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_exact = np.expm1(x) / x
    ratio_series = 1.0 + x / 2.0 + x * x / 6.0
    ratio = np.where(small, ratio_series, ratio_exact)
    # d(ratio)/dx: exact branch ((x-1)e^x + 1)/x^2, series branch 1/2 + x/3
    with np.errstate(divide="ignore", invalid="ignore"):
        dratio_exact = ((x - 1.0) * np.exp(x) + 1.0) / (x * x)
    dratio = np.where(small, 0.5 + x / 3.0, dratio_exact)

    ratio_node = DiffValue(ratio, (da,))

    def bwd(g):
        da.grad += g * dratio

    ratio_node._backward = bwd

    b_bar = ad.mul(ratio_node, ad.mul(delta, b_t))
    return a_bar, b_bar


def s6_scan(z_seq, h0, a_diag, params, prefix):
    """Run the selective recurrence h_k = A_bar*h_{k-1} + B_bar*z_k.

    Per-step A_bar/B_bar are derived from that step's input.  Returns the list
    of all intermediate hidden states (last entry is the block output).
    """
    if not z_seq:
        raise ValueError("s6_scan needs a nonempty input sequence")
    states = []
    h = h0
    for k, z in enumerate(z_seq):
        delta, b_t, _ = selection_params(z, params, prefix)
        a_bar, b_bar = zoh_discretize(a_diag, b_t, delta)
        h = ad.add(ad.mul(a_bar, h), ad.mul(b_bar, z))
        if not np.isfinite(h.data).all():
            raise NumericsError(f"non-finite hidden state at scan step {k}")
        states.append(h)
    return states


def gating_unit(x, params, prefix, mlp_a, mlp_b):
    """Split the window in half; output = MLP(x1) * sigmoid(MLP(x2))."""
    width = x.data.shape[-1]
    if width % 2 != 0:
        raise ShapeError(f"gating unit needs an even input width, got {width}")
    x1, x2 = ad.split(x, [width // 2, width // 2])
    return ad.mul(mlp_a(params, x1), ad.sigmoid(mlp_b(params, x2)))


class SelectionBlock:
    """Gating unit feeding a single S6 recurrence step per call.

    ``in_width`` is the fixed (even) encoded-window width; ``state_dim`` is
    both the hidden-state length and the gating output width.
    """

    def __init__(self, prefix, in_width, state_dim, hidden=64):
        if in_width % 2 != 0:
            raise ShapeError(f"selection block input width must be even, got {in_width}")
        self.prefix = prefix
        self.in_width = in_width
        self.state_dim = state_dim
        half = in_width // 2
        self.mlp_a = MLP(f"{prefix}.gu_a", [half, hidden, state_dim])
        self.mlp_b = MLP(f"{prefix}.gu_b", [half, hidden, state_dim])

    def init(self, params, rng):
        self.mlp_a.init(params, rng)
        self.mlp_b.init(params, rng)
        n = self.state_dim
        for name, n_out in ((f"{self.prefix}.sdelta", n), (f"{self.prefix}.sb", n),
                            (f"{self.prefix}.sc", n)):
            params.add(f"{name}.w", np.sqrt(1.0 / n) * rng.standard_normal((n, n_out)))
            params.add(f"{name}.b", np.zeros(n_out))
        # B_bar carries a 1/|a| attenuation per channel; compensate in the
        # projection scale so the hidden state starts at a healthy magnitude
        params[f"{self.prefix}.sb.w"].data *= np.arange(1, n + 1, dtype=np.float64)
        # small bias noise keeps the gating value path alive when the front of
        # the window is all padding (otherwise those steps emit exactly zero)
        for layer in ("l0", "l1"):
            params[f"{self.prefix}.gu_a.{layer}.b"].data[...] = (
                0.1 * rng.standard_normal(params[f"{self.prefix}.gu_a.{layer}.b"].data.shape)
            )
        # diagonal state matrix, entry n fixed at -(n+1); log-magnitudes are
        # the learnable quantity so negativity survives every update
        params.add(f"{self.prefix}.a_log", np.log(np.arange(1, n + 1, dtype=np.float64)))

    def a_diag(self, params):
        return ad.neg(ad.exp(params[f"{self.prefix}.a_log"]))

    def forward(self, params, window, h_prev):
        """One step: encoded window -> gating unit -> S6 update from h_prev."""
        if window.data.shape[-1] != self.in_width:
            raise ShapeError(
                f"selection block: window width {window.data.shape[-1]}, "
                f"expected {self.in_width}"
            )
        z = gating_unit(window, params, self.prefix, self.mlp_a, self.mlp_b)
        return s6_scan([z], h_prev, self.a_diag(params), params, self.prefix)[-1]


class GatedRecurrentBlock:
    """Drop-in replacement for SelectionBlock: MLP front end plus a GRU cell.

    Used by the ablation that removes the selective state-space layer; sized
    to roughly match the selection block's parameter count.
    """

    def __init__(self, prefix, in_width, state_dim, hidden=64):
        self.prefix = prefix
        self.in_width = in_width
        self.state_dim = state_dim
        self.front = MLP(f"{prefix}.front", [in_width, hidden, state_dim])
        self.cell = GruCell(f"{prefix}.gru", state_dim, state_dim)

    def init(self, params, rng):
        self.front.init(params, rng)
        self.cell.init(params, rng)

    def forward(self, params, window, h_prev):
        if window.data.shape[-1] != self.in_width:
            raise ShapeError(
                f"recurrent block: window width {window.data.shape[-1]}, "
                f"expected {self.in_width}"
            )
        return self.cell(params, self.front(params, window), h_prev)
