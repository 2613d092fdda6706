import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from marktpp import autograd as ag
from marktpp.autograd import ParamStore, ShapeError, Tensor


def gradcheck(fn, *arrays_in, tol=1e-4):
    """Compare backward() of ``sum(fn(*leaves) * proj)`` with central differences."""
    rng = np.random.default_rng(0)
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays_in]
    out = fn(*leaves)
    proj = rng.normal(size=out.shape)

    def value():
        with ag.no_grad():
            return float(np.sum(fn(*[Tensor(l.data) for l in leaves]).data * proj))

    ag.sum_(out * proj).backward()
    for leaf in leaves:
        num = ag.numerical_grad(value, leaf.data)
        got = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        np.testing.assert_allclose(got, num, rtol=tol, atol=1e-7)


class TestForward:
    def test_softmax_zero_vector_uniform(self):
        np.testing.assert_allclose(ag.softmax(np.zeros(5)).data, np.full(5, 0.2))

    def test_exp_log_inverse(self):
        x = np.array([1e-6, 0.5, 3.0, 1e5])
        np.testing.assert_allclose(ag.exp(ag.log(x)).data, x, rtol=1e-12)

    def test_matmul_hand_computed(self):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = np.array([[1.0], [0.0], [-1.0]])
        out = ag.matmul(a, b)
        assert out.shape == (2, 1)
        np.testing.assert_array_equal(out.data, [[-2.0], [-2.0]])

    def test_logsumexp_stable(self):
        x = np.array([1000.0, 1000.0])
        assert ag.logsumexp(x).item() == pytest.approx(1000.0 + math.log(2.0))

    def test_log_softmax_matches_softmax(self, rng):
        x = rng.normal(size=(3, 4))
        np.testing.assert_allclose(np.exp(ag.log_softmax(x).data), ag.softmax(x).data, rtol=1e-12)

    def test_log_softplus_tail(self):
        out = ag.log_softplus(np.array([-100.0, 0.0, 50.0])).data
        np.testing.assert_allclose(out, [-100.0, math.log(math.log(2.0)), math.log(50.0)], rtol=1e-12)

    def test_expm1_div_limits(self):
        w = np.array([0.0, 1e-9, -1e-9, 0.5, -2.0])
        t = np.full(5, 2.0)
        expected = np.where(np.abs(w) > 0, np.expm1(w * t) / np.where(w == 0, 1, w), t)
        np.testing.assert_allclose(ag.expm1_div(w, t).data, expected, rtol=1e-12)

    def test_expm1_div_accurate_at_series_band_edge(self):
        t = 3.0
        w = np.array([1e-3 / t * (1 - 1e-9), 1e-3 / t * (1 + 1e-9), 1e-9, 2e-5])
        out = ag.expm1_div(w, np.full(4, t)).data
        with mpmath.workdps(40):
            ref = [float(mpmath.expm1(mpmath.mpf(wi) * t) / mpmath.mpf(wi)) for wi in w]
        np.testing.assert_allclose(out, ref, rtol=1e-14)

    def test_log_clamp(self):
        x = Tensor(np.array([0.0, 1e-12, 1.0]), requires_grad=True)
        y = ag.log(x)
        np.testing.assert_allclose(y.data, [math.log(ag.EPS), math.log(ag.EPS), 0.0])
        ag.sum_(y).backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_div_clamp(self):
        out = ag.div(np.array([1.0, 1.0, 1.0]), np.array([0.0, -1e-20, 2.0])).data
        np.testing.assert_allclose(out, [1.0 / ag.EPS, -1.0 / ag.EPS, 0.5])
        assert np.all(np.isfinite(out))

    def test_embedding_equals_one_hot_product(self, rng):
        E = rng.normal(size=(4, 3))
        idx = np.array([[0, 3], [2, 2]])
        one_hot = np.eye(4)[idx]
        np.testing.assert_allclose(ag.embedding(E, idx).data, one_hot @ E, rtol=1e-15)

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            ag.embedding(np.zeros((2, 2)), np.array([2]))

    @given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)))
    @settings(max_examples=50, deadline=None)
    def test_softmax_sums_to_one(self, x):
        np.testing.assert_allclose(ag.softmax(x, axis=-1).data.sum(-1), 1.0, rtol=1e-12)
        shifted = ag.softmax(x + 7.5, axis=-1).data
        np.testing.assert_allclose(shifted, ag.softmax(x, axis=-1).data, atol=1e-12)


class TestShapeErrors:
    @pytest.mark.parametrize(
        "op, args",
        [
            ("add", (np.zeros((2, 3)), np.zeros((4,)))),
            ("mul", (np.zeros((2, 3)), np.zeros((2, 2)))),
            ("matmul", (np.zeros((2, 3)), np.zeros((2, 1)))),
        ],
    )
    def test_error_names_op_and_shapes(self, op, args):
        with pytest.raises(ShapeError, match=rf"{op}.*\(2, 3\)"):
            getattr(ag, op)(*args)

    def test_reshape(self):
        with pytest.raises(ShapeError, match="reshape"):
            ag.reshape(np.zeros(6), (4, 2))

    def test_gru_shapes(self):
        with pytest.raises(ShapeError, match="gru_scan"):
            ag.gru_scan(np.zeros((1, 2, 3)), np.zeros(2), np.zeros((3, 5)), np.zeros((2, 6)), np.zeros(6), np.zeros(6))


class TestBackward:
    def test_square_sum(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ag.sum_(w * w).backward()
        np.testing.assert_array_equal(w.grad, [2.0, 4.0])

    def test_non_scalar_loss(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError, match="scalar"):
            (w * 2.0).backward()

    def test_disconnected_parameter_zero(self):
        store = ParamStore()
        a = store.add("a", np.ones(2))
        store.add("b", np.ones(3))
        ag.sum_(ag.exp(a)).backward()
        grads = store.grads()
        np.testing.assert_array_equal(grads["b"], np.zeros(3))
        np.testing.assert_allclose(grads["a"], np.e)

    def test_shared_leaf_accumulates(self):
        w = Tensor(np.array([3.0]), requires_grad=True)
        ag.sum_(w * w + w).backward()
        np.testing.assert_allclose(w.grad, [7.0])

    def test_repeat_after_zero_grad_identical(self, rng):
        store = ParamStore()
        w = store.add("w", rng.normal(size=(3, 2)))
        x = rng.normal(size=(4, 3))

        def run():
            store.zero_grad()
            ag.sum_(ag.tanh(ag.matmul(x, w))).backward()
            return w.grad.copy()

        np.testing.assert_array_equal(run(), run())

    def test_no_grad_records_nothing(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with ag.no_grad():
            y = ag.exp(w)
        assert not y.requires_grad and y._parents == ()

    def test_ndarray_on_the_left(self):
        w = Tensor(np.ones(2), requires_grad=True)
        out = np.array([3.0, 4.0]) - w
        assert isinstance(out, Tensor)
        ag.sum_(out).backward()
        np.testing.assert_array_equal(w.grad, [-1.0, -1.0])


class TestGradients:
    """Central differences (eps=1e-5) against every registered op."""

    @pytest.fixture
    def x(self, rng):
        return rng.normal(size=(3, 4))

    @pytest.mark.parametrize(
        "fn",
        [
            ag.exp,
            ag.tanh,
            ag.sigmoid,
            ag.softplus,
            ag.log_softplus,
            ag.log_ndtr,
            ag.neg,
            ag.square,
            lambda a: ag.log(ag.exp(a) + 0.1),
            lambda a: ag.softmax(a, axis=-1),
            lambda a: ag.log_softmax(a, axis=0),
            lambda a: ag.logsumexp(a, axis=-1),
            lambda a: ag.logsumexp(a, axis=0, keepdims=True),
            lambda a: ag.sum_(a, axis=1),
            lambda a: ag.mean(a, axis=0),
            lambda a: ag.reshape(a, (2, 6)),
            lambda a: ag.broadcast_to(a[:, :1], (3, 4)),
            lambda a: a[1:, ::2],
            lambda a: ag.getitem(a, (np.array([0, 0, 2]), np.array([1, 1, 3]))),
            lambda a: ag.take_along_axis(a, np.array([[0], [3], [1]]), axis=1),
            lambda a: ag.take_along_axis(a, np.array([[0, 0], [3, 2], [1, 1]]), axis=1),
        ],
    )
    def test_unary(self, fn, x):
        gradcheck(fn, x)

    @pytest.mark.parametrize("fn", [ag.add, ag.sub, ag.mul, ag.div])
    def test_binary_with_broadcast(self, fn, rng):
        gradcheck(fn, rng.normal(size=(3, 4)), rng.uniform(0.5, 2.0, size=(4,)))

    def test_matmul(self, rng):
        gradcheck(ag.matmul, rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5)))
        gradcheck(ag.matmul, rng.normal(size=(3, 4)), rng.normal(size=(4,)))

    def test_concat(self, rng):
        gradcheck(lambda a, b: ag.concat([a, b], axis=-1), rng.normal(size=(2, 3)), rng.normal(size=(2, 1)))

    def test_embedding(self, rng):
        idx = np.array([[0, 2, 2], [1, 0, 2]])
        gradcheck(lambda t: ag.embedding(t, idx), rng.normal(size=(3, 4)))

    @pytest.mark.parametrize("w_scale", [1.0, 1e-4, 1e-9])
    def test_expm1_div(self, rng, w_scale):
        gradcheck(ag.expm1_div, rng.normal(size=(5,)) * w_scale, rng.uniform(0.1, 3.0, size=(5,)))

    def test_gru_scan(self, rng):
        B, L, I, H = 2, 4, 3, 5
        args = [
            rng.normal(size=(B, L, I)),
            rng.normal(size=(H,)),
            rng.normal(size=(I, 3 * H)) * 0.5,
            rng.normal(size=(H, 3 * H)) * 0.5,
            rng.normal(size=(3 * H,)),
            rng.normal(size=(3 * H,)),
        ]
        gradcheck(ag.gru_scan, *args)


class TestGruScan:
    def test_matches_stepwise(self, rng):
        B, L, I, H = 3, 5, 2, 4
        x = rng.normal(size=(B, L, I))
        h0 = rng.normal(size=H)
        W, U = rng.normal(size=(I, 3 * H)), rng.normal(size=(H, 3 * H))
        b_x, b_h = rng.normal(size=3 * H), rng.normal(size=3 * H)
        states = ag.gru_scan(x, h0, W, U, b_x, b_h).data
        h = np.broadcast_to(h0, (B, H))
        np.testing.assert_array_equal(states[:, 0], h)
        for t in range(L):
            h = ag.gru_step(x[:, t] @ W + b_x, h, U, b_h)[0]
            np.testing.assert_allclose(states[:, t + 1], h, rtol=1e-12, atol=1e-14)

    def test_empty_sequence(self):
        out = ag.gru_scan(np.zeros((2, 0, 3)), np.ones(4), np.zeros((3, 12)), np.zeros((4, 12)), np.zeros(12), np.zeros(12))
        assert out.shape == (2, 1, 4)


class TestParamStore:
    def test_duplicate_name(self):
        store = ParamStore()
        store.add("a", np.zeros(2))
        with pytest.raises(KeyError):
            store.add("a", np.zeros(2))

    def test_checkpoint_round_trip(self, tmp_path, rng):
        store = ParamStore()
        store.add("w", rng.normal(size=(3, 2)))
        store.add("b", rng.normal(size=2))
        ag.save_checkpoint(tmp_path / "c.json", store, {"kind": "x"})
        meta, state = ag.read_checkpoint(tmp_path / "c.json")
        other = ParamStore()
        other.add("w", np.zeros((3, 2)))
        other.add("b", np.zeros(2))
        other.load_state(state)
        assert meta == {"kind": "x"}
        for name in ("w", "b"):
            np.testing.assert_array_equal(other[name].data, store[name].data)

    def test_load_shape_mismatch(self, rng):
        store = ParamStore()
        store.add("w", np.zeros(3))
        with pytest.raises(ShapeError):
            store.load_state({"w": {"shape": [2], "data": [0.0, 0.0]}})
        with pytest.raises(KeyError):
            store.load_state({"v": {"shape": [3], "data": [0.0] * 3}})
