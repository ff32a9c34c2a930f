import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefitlab import autodiff as ad
from hefitlab.errors import GraphStateError, NumericError, ParameterError, ShapeError

from gradcheck import check, weighted_sum

TOL = 1e-6


def leaf(rng, *shape, scale=1.0):
    return ad.Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_matmul_shared_rhs(rng):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5)
    assert check(lambda t: weighted_sum(ad.matmul(*t)), [a, b]) < TOL


def test_matmul_batched(rng):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 2, 4, 2)
    assert check(lambda t: weighted_sum(ad.matmul(*t)), [a, b]) < TOL


def test_add_bias_and_same_shape(rng):
    x, b, y = leaf(rng, 3, 4), leaf(rng, 4), leaf(rng, 3, 4)
    assert check(lambda t: weighted_sum(ad.add(ad.add(t[0], t[1]), t[2])), [x, b, y]) < TOL


def test_mul_scale_tanh(rng):
    x, y = leaf(rng, 3, 4), leaf(rng, 3, 4)
    assert check(lambda t: weighted_sum(ad.tanh(ad.scale(ad.mul(t[0], t[1]), 0.7))), [x, y]) < TOL


def test_reshape_transpose(rng):
    x = leaf(rng, 2, 3, 4)
    build = lambda t: weighted_sum(ad.reshape(ad.transpose(t[0], (2, 0, 1)), (4, 6)))
    assert check(build, [x]) < TOL


def test_gelu(rng):
    x = leaf(rng, 5, 6, scale=2.0)
    assert check(lambda t: weighted_sum(ad.gelu(t[0])), [x]) < TOL


def test_softmax_with_mask(rng):
    x = leaf(rng, 2, 3, 5)
    mask = np.zeros((2, 1, 5))
    mask[0, 0, 3:] = -1e9
    assert check(lambda t: weighted_sum(ad.softmax(t[0], mask)), [x]) < TOL


def test_softmax_rows_sum_to_one(rng):
    x = ad.Tensor(rng.normal(size=(4, 7)) * 30)
    out = ad.softmax(x).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


def test_layer_norm(rng):
    x, g, b = leaf(rng, 3, 4, 6), leaf(rng, 6), leaf(rng, 6)
    assert check(lambda t: weighted_sum(ad.layer_norm(*t)), [x, g, b]) < TOL


def test_embedding_with_repeated_ids(rng):
    table = leaf(rng, 7, 3)
    ids = np.array([[1, 1, 4], [6, 0, 1]])
    assert check(lambda t: weighted_sum(ad.embedding(t[0], ids)), [table]) < TOL


def test_dropout_is_linear_given_mask(rng):
    x = leaf(rng, 4, 5)

    def build(t):
        return weighted_sum(ad.dropout(t[0], 0.3, True, np.random.default_rng(7)))

    assert check(build, [x]) < TOL


def test_mean_pool(rng):
    x = leaf(rng, 2, 4, 3)
    mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
    assert check(lambda t: weighted_sum(ad.mean_pool(t[0], mask)), [x]) < TOL


def test_mse(rng):
    x = leaf(rng, 6)
    target = rng.normal(size=6)
    assert check(lambda t: ad.mse(t[0], target), [x]) < TOL


def test_cross_entropy(rng):
    logits = leaf(rng, 5, 9)
    targets = np.array([0, 3, 8, 3, 1])
    assert check(lambda t: ad.cross_entropy(t[0], targets), [logits]) < TOL


def test_forward_op_dispatch_matches_direct_call(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 3, 2)
    np.testing.assert_array_equal(ad.forward_op("matmul", [a, b]).data, ad.matmul(a, b).data)
    with pytest.raises(ParameterError):
        ad.forward_op("conv2d", [a])


def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        ad.matmul(leaf(rng, 2, 3), leaf(rng, 4, 2))
    with pytest.raises(ShapeError):
        ad.add(leaf(rng, 2, 3), leaf(rng, 2))
    with pytest.raises(ShapeError):
        ad.mean_pool(leaf(rng, 1, 2, 3), np.zeros((1, 2), dtype=bool))


def test_nonfinite_values_are_rejected():
    with pytest.raises(NumericError):
        ad.Tensor([1.0, np.nan])


def test_backward_needs_scalar(rng):
    with pytest.raises(ShapeError):
        ad.backward(ad.tanh(leaf(rng, 3)))


def test_second_backward_raises(rng):
    x = leaf(rng, 3)
    loss = ad.mse(x, np.zeros(3))
    ad.backward(loss)
    with pytest.raises(GraphStateError):
        ad.backward(loss)


def test_leaf_grads_accumulate_across_graphs(rng):
    x = leaf(rng, 3)
    ad.backward(ad.mse(x, np.zeros(3)))
    first = x.grad.copy()
    ad.backward(ad.mse(x, np.zeros(3)))
    np.testing.assert_allclose(x.grad, 2 * first)


def test_shared_subexpression_gets_both_paths(rng):
    x = leaf(rng, 4)
    assert check(lambda t: weighted_sum(ad.mul(ad.tanh(t[0]), ad.tanh(t[0]))), [x]) < TOL


def test_no_grad_builds_no_graph(rng):
    x = leaf(rng, 3)
    with ad.no_grad():
        y = ad.tanh(x)
    assert not y.requires_grad and y.is_leaf


def test_frozen_inputs_get_no_grad(rng):
    x = leaf(rng, 2, 3)
    w = ad.Tensor(rng.normal(size=(3, 2)))
    ad.backward(weighted_sum(ad.matmul(x, w)))
    assert w.grad is None and x.grad is not None


def test_graph_trace_is_topological(rng):
    a, b = leaf(rng, 2, 2), leaf(rng, 2, 2)
    loss = weighted_sum(ad.add(ad.matmul(a, b), a))
    order = ad.ComputationGraph.trace(loss).nodes
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for parent in node._parents:
            if parent.requires_grad:
                assert pos[id(parent)] < pos[id(node)]
    assert {id(t) for t in ad.ComputationGraph.trace(loss).leaves} == {id(a), id(b)}


def test_dropout_contract(rng):
    x = leaf(rng, 100, 100)
    assert ad.dropout(x, 0.5, training=False) is x
    with pytest.raises(ParameterError):
        ad.dropout(x, 1.0, True, rng)
    with pytest.raises(ParameterError):
        ad.dropout(x, 0.2, True, None)
    out = ad.dropout(ad.Tensor(np.ones((200, 200))), 0.25, True, np.random.default_rng(0)).data
    assert abs(out.mean() - 1.0) < 0.02
    assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12))
def test_tanh_gradient_matches_closed_form(values):
    x = ad.Tensor(np.array(values), requires_grad=True)
    ad.backward(weighted_sum(ad.tanh(x), seed=3))
    w = np.random.default_rng(3).normal(size=len(values))
    np.testing.assert_allclose(x.grad, w * (1 - np.tanh(values) ** 2), rtol=1e-12, atol=1e-15)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_matmul_gradient_closed_form(m, k, n, seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng, m, k), leaf(rng, k, n)
    g = rng.normal(size=(m, n))
    out = ad.matmul(a, b)
    ad.backward(weighted_sum(ad.mul(out, ad.Tensor(g)), seed=seed))
    w = np.random.default_rng(seed).normal(size=(m, n)) * g
    np.testing.assert_allclose(a.grad, w @ b.data.T, atol=1e-12)
    np.testing.assert_allclose(b.grad, a.data.T @ w, atol=1e-12)


def test_hand_examples():
    ident = ad.matmul(ad.Tensor([[1.0, 2.0], [3.0, 4.0]]), ad.Tensor([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(ident.data, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(ad.softmax(ad.Tensor([0.0, 0.0])).data, [0.5, 0.5])
    assert ad.mse(ad.Tensor([1.0, 2.0]), np.array([1.0, 4.0])).item() == 2.0


def test_square_derivative():
    x = ad.Tensor(3.0, requires_grad=True)
    ad.backward(ad.mul(x, x))
    assert x.grad == 6.0


def test_chain_rule_by_hand():
    # (w*x - y)^2 with w=1, x=2, y=4: d/dw = 2*(2-4)*2 = -8
    w = ad.Tensor([[1.0]], requires_grad=True)
    x = ad.Tensor([[2.0]])
    ad.backward(ad.mse(ad.matmul(x, w), np.array([[4.0]])))
    assert w.grad[0, 0] == -8.0


def test_inverted_dropout_expectation():
    out = ad.dropout(ad.Tensor(np.ones(10_000)), 0.5, True, np.random.default_rng(0))
    assert abs(out.data.mean() - 1.0) < 0.05
    x = ad.Tensor(np.ones(5))
    assert ad.dropout(x, 0.0, True, np.random.default_rng(0)) is x


def test_forward_is_bit_deterministic(rng):
    x = rng.normal(size=(3, 8))
    a = ad.dropout(ad.gelu(ad.Tensor(x)), 0.3, True, np.random.default_rng(5)).data
    b = ad.dropout(ad.gelu(ad.Tensor(x)), 0.3, True, np.random.default_rng(5)).data
    assert a.tobytes() == b.tobytes()
