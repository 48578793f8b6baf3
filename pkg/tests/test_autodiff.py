import math

import numpy as np
import pytest

from tacit import autodiff as ad
from tacit.autodiff import (
    DiffValue, NumericsError, ParamSet, ShapeError, backward, load_params,
    save_params, sgd_step,
)
from fd import assert_grads_close, fd_gradients


class TestForwardValues:
    def test_softplus_zero(self):
        assert ad.softplus(DiffValue(0.0)).data == pytest.approx(math.log(2))

    def test_softmax_symmetry(self):
        out = ad.softmax(DiffValue([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3)

    def test_affine_identity(self, rng):
        x = DiffValue(rng.standard_normal((5, 4)))
        out = ad.affine(x, DiffValue(np.eye(4)), DiffValue(np.zeros(4)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_softmax_rows_normalized(self, rng):
        out = ad.softmax(DiffValue(rng.standard_normal((50, 7)) * 10))
        assert (out.data >= 0).all()
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
            ad.add(DiffValue(np.zeros(2)), DiffValue(np.zeros(3))).data
        with pytest.raises(ShapeError):
            ad.mse(DiffValue(np.zeros(2)), DiffValue(np.zeros(3)))

    def test_deterministic_evaluation(self, rng):
        x = rng.standard_normal((6, 6))
        w = rng.standard_normal((6, 3))

        def run():
            return ad.softmax(ad.tanh(ad.matmul(DiffValue(x), DiffValue(w)))).data

        assert np.array_equal(run(), run())


class TestBackward:
    def test_square(self):
        x = DiffValue(3.0)
        backward(ad.square(x))
        assert x.grad == pytest.approx(6.0)

    def test_sigmoid_at_zero(self):
        x = DiffValue(0.0)
        backward(ad.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_accumulation_without_zeroing(self):
        x = DiffValue(3.0)
        backward(ad.square(x))
        backward(ad.square(x))
        assert x.grad == pytest.approx(12.0)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ShapeError, match="scalar"):
            backward(DiffValue(np.zeros(3)))

    def test_three_layer_net_matches_finite_differences(self, rng):
        sizes = [(4, 8), (8, 6), (6, 1)]
        leaves = []
        for n_in, n_out in sizes:
            leaves.append(DiffValue(rng.standard_normal((n_in, n_out))))
            leaves.append(DiffValue(rng.standard_normal(n_out)))
        x = rng.standard_normal((3, 4))

        def loss_fn():
            h = DiffValue(x)
            for i in range(0, 6, 2):
                h = ad.affine(h, leaves[i], leaves[i + 1])
                if i < 4:
                    h = ad.tanh(h)
            return ad.mean_all(ad.square(h))

        loss = loss_fn()
        backward(loss)
        numeric = fd_gradients(lambda: float(loss_fn().data), leaves)
        assert_grads_close([l.grad for l in leaves], numeric, rel=1e-4)


UNARY_OPS = [
    ad.relu, ad.sigmoid, ad.tanh, ad.softplus, ad.exp, ad.elu, ad.absval,
    ad.square, ad.softmax, ad.neg,
]


class TestPerOpGradients:
    @pytest.mark.parametrize("op", UNARY_OPS, ids=lambda f: f.__name__)
    def test_unary(self, op, rng):
        for trial in range(10):
            x = DiffValue(rng.standard_normal((3, 5)) + 0.3)  # keep off kinks
            w = rng.standard_normal((3, 5))

            def loss_fn():
                return ad.sum_all(ad.mul(op(x), DiffValue(w)))

            backward(loss_fn())
            numeric = fd_gradients(lambda: float(loss_fn().data), [x])
            assert_grads_close([x.grad], numeric, rel=1e-4, context=op.__name__)
            x.zero_grad()

    def test_binary_and_shape_ops(self, rng):
        a = DiffValue(rng.standard_normal((2, 3, 4)))
        b = DiffValue(rng.standard_normal((2, 3, 4)))
        c = DiffValue(rng.standard_normal((2, 1, 4)))  # broadcast operand
        m = DiffValue(rng.standard_normal((4, 2)))
        w = rng.standard_normal((2, 3, 2))

        def loss_fn():
            x = ad.add(ad.mul(a, c), ad.sub(a, b))
            parts = ad.split(x, [1, 3])
            x = ad.concat([parts[1], parts[0]])
            x = ad.matmul(x, m)
            x = ad.reshape(ad.sum_axis(ad.mul(x, DiffValue(w)), 1), (2, 2))
            return ad.mean_all(ad.square(x))

        backward(loss_fn())
        numeric = fd_gradients(lambda: float(loss_fn().data), [a, b, c, m])
        assert_grads_close([a.grad, b.grad, c.grad, m.grad], numeric, rel=1e-4)

    def test_bmatmul(self, rng):
        a = DiffValue(rng.standard_normal((2, 3, 4)))
        b = DiffValue(rng.standard_normal((2, 3, 4)))
        w = rng.standard_normal((2, 3, 3))

        def loss_fn():
            return ad.sum_all(ad.mul(ad.bmatmul(a, b, transpose_b=True), DiffValue(w)))

        backward(loss_fn())
        numeric = fd_gradients(lambda: float(loss_fn().data), [a, b])
        assert_grads_close([a.grad, b.grad], numeric, rel=1e-4)

    def test_detach_blocks_gradient(self, rng):
        x = DiffValue(rng.standard_normal(4))
        backward(ad.sum_all(ad.square(ad.detach(x))))
        np.testing.assert_array_equal(x.grad, np.zeros(4))


class TestSgd:
    def _single(self, value, grad):
        ps = ParamSet()
        p = ps.add("p", np.array([value]))
        p.grad[:] = grad
        return ps, p

    def test_basic_update(self):
        ps, p = self._single(1.0, 2.0)
        sgd_step(ps, 0.1)
        assert p.data[0] == pytest.approx(0.8)
        assert p.grad[0] == 0.0
        assert ps.version == 1

    def test_zero_lr_is_identity(self):
        ps, p = self._single(1.0, 2.0)
        sgd_step(ps, 0.0)
        assert p.data[0] == 1.0

    def test_two_steps_on_square(self):
        ps = ParamSet()
        x = ps.add("x", np.array([1.0]))
        for expected in (0.5, 0.25):
            backward(ad.sum_all(ad.square(x)))
            sgd_step(ps, 0.25)
            assert x.data[0] == pytest.approx(expected)

    def test_non_finite_gradient_names_parameter(self):
        ps, p = self._single(1.0, np.nan)
        with pytest.raises(NumericsError, match="'p'"):
            sgd_step(ps, 0.1)

    def test_clip_bounds_update(self):
        ps, p = self._single(0.0, 1000.0)
        norm = sgd_step(ps, 1.0, clip=10.0)
        assert norm == pytest.approx(1000.0)
        assert abs(p.data[0]) == pytest.approx(10.0)


class TestParamSet:
    def test_clone_shares_no_storage(self, rng):
        ps = ParamSet()
        ps.add("w", rng.standard_normal((3, 3)))
        other = ps.clone()
        other["w"].data[0, 0] += 99.0
        assert ps["w"].data[0, 0] != other["w"].data[0, 0]

    def test_duplicate_name_rejected(self):
        ps = ParamSet()
        ps.add("w", np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            ps.add("w", np.zeros(2))

    def test_checkpoint_roundtrip_bit_exact(self, tmp_path, rng):
        ps = ParamSet()
        ps.add("layer.w", rng.standard_normal((4, 7)))
        ps.add("layer.b", rng.standard_normal(7))
        ps.add("scalarish", rng.standard_normal(1))
        path = tmp_path / "ck.bin"
        save_params(path, ps)
        loaded = load_params(path)
        assert loaded.names() == ps.names()
        for name in ps.names():
            assert np.array_equal(loaded[name].data, ps[name].data)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTACKPT" + b"\0" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_params(path)
