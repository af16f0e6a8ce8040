import numpy as np
import pytest

import norma.autodiff as ad
from norma.autodiff import NanError, ShapeError, Tensor

rng = np.random.default_rng(0)


def _params(*shapes):
    return [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]


class TestForwardValues:
    def test_matmul_identity(self):
        a = Tensor(rng.normal(size=(3, 3)))
        out = ad.matmul(Tensor(np.eye(3)), a)
        assert np.array_equal(out.data, a.data)

    def test_softmax_position0_self_weight(self):
        s = ad.softmax_causal_masked(Tensor(rng.normal(size=(2, 4, 4))))
        assert np.all(s.data[:, 0, 0] == 1.0)

    def test_softmax_rows_sum_to_one(self):
        s = ad.softmax_causal_masked(Tensor(rng.normal(size=(2, 6, 6))))
        assert np.all(np.abs(s.data.sum(-1) - 1.0) < 1e-12)

    def test_softmax_masked_exactly_zero(self):
        s = ad.softmax_causal_masked(Tensor(rng.normal(size=(5, 5))))
        iu = np.triu_indices(5, 1)
        assert np.all(s.data[iu] == 0.0)

    def test_layer_norm_constant_vector_is_zero(self):
        out = ad.layer_norm(Tensor(np.full((2, 8), 3.7)))
        assert np.allclose(out.data, 0.0)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as exc:
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
        assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)

    def test_matmul_inner_mismatch(self):
        with pytest.raises(ShapeError):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


class TestBackward:
    def test_linear_gradient_is_input(self):
        x = np.array([[1.0, 2.0, 3.0]])
        w = Tensor(np.array([[0.5], [1.5], [-2.0]]), requires_grad=True)
        loss = ad.sum_(ad.matmul(Tensor(x), w))
        ad.backward(loss)
        assert np.allclose(w.grad.ravel(), x.ravel())

    def test_quadratic_gradient(self):
        w = Tensor(np.array([5.0]), requires_grad=True)
        d = ad.add(w, -3.0)
        loss = ad.sum_(ad.mul(d, d))
        ad.backward(loss)
        assert w.grad[0] == pytest.approx(4.0)

    def test_non_scalar_loss_rejected(self):
        w = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ShapeError):
            ad.backward(ad.mul(w, 2.0))

    def test_double_backward_rejected(self):
        w = Tensor(np.array([1.0]), requires_grad=True)
        loss = ad.sum_(ad.mul(w, w))
        ad.backward(loss)
        with pytest.raises(RuntimeError):
            ad.backward(loss)

    def test_backward_visits_each_node_once(self):
        # diamond graph: y = (w + w*w); gradient = 1 + 2w
        w = Tensor(np.array([3.0]), requires_grad=True)
        y = ad.add(w, ad.mul(w, w))
        ad.backward(ad.sum_(y))
        assert w.grad[0] == pytest.approx(7.0)


# Each case pairs the op under test with a fixed random readout constant so
# the scalar objective exercises the whole output.
def _cases():
    local = np.random.default_rng(123)

    def const(*shape):
        return Tensor(local.normal(size=shape))

    c34, c355 = const(3, 4, 4), const(3, 8)
    c_emb, c_cs, c_rt = const(4, 6), const(2, 3), const(3, 2, 4)
    return [
        ("matmul", lambda ps: ad.mean_(ad.matmul(ps[0], ps[1])), [(3, 4), (4, 5)]),
        ("matmul_batched", lambda ps: ad.mean_(ad.matmul(ps[0], ps[1])), [(2, 3, 4), (2, 4, 5)]),
        ("matmul_shared", lambda ps: ad.mean_(ad.matmul(ps[0], ps[1])), [(2, 3, 4), (4, 5)]),
        ("add_bias", lambda ps: ad.mean_(ad.add(ps[0], ps[1])), [(3, 4), (4,)]),
        ("mul_gain", lambda ps: ad.mean_(ad.mul(ps[0], ps[1])), [(3, 4), (4,)]),
        ("layer_norm", lambda ps: ad.mean_(ad.mul(ad.layer_norm(ps[0]), c355)), [(3, 8)]),
        ("softmax", lambda ps: ad.mean_(ad.mul(ad.softmax_causal_masked(ps[0]), c34)), [(3, 4, 4)]),
        ("gelu", lambda ps: ad.mean_(ad.gelu(ps[0])), [(3, 5)]),
        ("softplus", lambda ps: ad.mean_(ad.softplus(ps[0])), [(3, 5)]),
        ("exp", lambda ps: ad.mean_(ad.exp(ps[0])), [(3, 4)]),
        ("sin", lambda ps: ad.mean_(ad.sin(ps[0])), [(3, 4)]),
        ("embedding", lambda ps: ad.mean_(ad.mul(
            ad.embedding_lookup(ps[0], np.array([0, 2, 1, 2])), c_emb)), [(3, 6)]),
        ("concat_slice", lambda ps: ad.mean_(ad.mul(ad.slice_(
            ad.concat([ps[0], ps[1]], axis=1), (slice(None), slice(1, 4))), c_cs)), [(2, 3), (2, 2)]),
        ("reshape_transpose", lambda ps: ad.mean_(ad.mul(ad.transpose(
            ad.reshape(ps[0], (2, 3, 4)), (1, 0, 2)), c_rt)), [(6, 4)]),
    ]


@pytest.mark.parametrize("name,f,shapes", _cases(), ids=[c[0] for c in _cases()])
def test_gradient_check_primitives(name, f, shapes):
    local = np.random.default_rng(abs(hash(name)) % 2**32)
    params = [Tensor(local.normal(size=s), requires_grad=True) for s in shapes]
    err = ad.gradient_check(f, params, eps=1e-5)
    assert err < 1e-6, f"{name}: {err}"


def test_gradient_check_quadratic_tight():
    w = _params((4,))
    err = ad.gradient_check(lambda ps: ad.sum_(ad.mul(ps[0], ps[0])), w, eps=1e-6)
    assert err < 1e-8


def test_mlp_three_layer_finite_difference():
    local = np.random.default_rng(99)
    shapes = [(5, 8), (8,), (8, 8), (8,), (8, 1), (1,)]
    params = [Tensor(local.normal(size=s) * 0.5, requires_grad=True) for s in shapes]
    x = Tensor(local.normal(size=(6, 5)))

    def f(ps):
        h = ad.gelu(ad.linear(x, ps[0], ps[1]))
        h = ad.gelu(ad.linear(h, ps[2], ps[3]))
        return ad.mean_(ad.linear(h, ps[4], ps[5]))

    assert ad.gradient_check(f, params, eps=1e-5) < 1e-4


def test_nan_loss_rejected():
    w = Tensor(np.array([np.inf]), requires_grad=True)
    with pytest.raises(NanError):
        ad.backward(ad.sum_(ad.add(w, 1.0)))


def test_determinism_same_inputs_bit_identical():
    local = np.random.default_rng(7)
    x = local.normal(size=(4, 6))
    w = local.normal(size=(6, 3))

    def run():
        wt = Tensor(w.copy(), requires_grad=True)
        loss = ad.mean_(ad.gelu(ad.matmul(Tensor(x.copy()), wt)))
        ad.backward(loss)
        return loss.data.copy(), wt.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2) and np.array_equal(g1, g2)
