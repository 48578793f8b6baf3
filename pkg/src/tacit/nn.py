"""Small network building blocks on top of the autodiff core.

Blocks are shape descriptions: ``init`` registers parameters into a
:class:`~tacit.autodiff.ParamSet`, ``__call__`` evaluates against whichever
ParamSet it is given (online or target), so one block definition serves both
networks.
"""

import numpy as np

from . import autodiff as ad


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    def __init__(self, prefix, n_in, n_out):
        self.prefix = prefix
        self.n_in = n_in
        self.n_out = n_out

    def init(self, params, rng, bias_init=0.0):
        params.add(f"{self.prefix}.w", glorot(rng, self.n_in, self.n_out))
        params.add(f"{self.prefix}.b", np.full(self.n_out, bias_init))

    def __call__(self, params, x):
        return ad.affine(x, params[f"{self.prefix}.w"], params[f"{self.prefix}.b"])


class MLP:
    """Fully connected stack with relu between layers, linear output."""

    def __init__(self, prefix, sizes):
        self.prefix = prefix
        self.layers = [
            Linear(f"{prefix}.l{i}", n_in, n_out)
            for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def init(self, params, rng, final_bias_init=0.0):
        for i, layer in enumerate(self.layers):
            bias = final_bias_init if i == len(self.layers) - 1 else 0.0
            layer.init(params, rng, bias_init=bias)

    def __call__(self, params, x):
        for i, layer in enumerate(self.layers):
            x = layer(params, x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


class GruCell:
    """Standard gated recurrent cell (update/reset/candidate gates)."""

    def __init__(self, prefix, n_in, n_hidden):
        self.prefix = prefix
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.x_gates = Linear(f"{prefix}.x", n_in, 3 * n_hidden)
        self.h_gates = Linear(f"{prefix}.h", n_hidden, 3 * n_hidden)

    def init(self, params, rng):
        self.x_gates.init(params, rng)
        self.h_gates.init(params, rng)

    def __call__(self, params, x, h):
        n = self.n_hidden
        gx = self.x_gates(params, x)
        gh = self.h_gates(params, h)
        xz, xr, xc = ad.split(gx, [n, n, n])
        hz, hr, hc = ad.split(gh, [n, n, n])
        z = ad.sigmoid(ad.add(xz, hz))
        r = ad.sigmoid(ad.add(xr, hr))
        cand = ad.tanh(ad.add(xc, ad.mul(r, hc)))
        one_minus_z = ad.add_const(ad.neg(z), 1.0)
        return ad.add(ad.mul(one_minus_z, h), ad.mul(z, cand))
