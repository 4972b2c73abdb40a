import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctxslu import tensor as T
from ctxslu.errors import ContractError, DimensionError, NumericError
from ctxslu.gradcheck import max_gradient_error, numeric_grad, relative_error
from ctxslu.tensor import Tensor


def leaf(a):
    return Tensor(np.asarray(a, dtype=float), requires_grad=True)


def test_matmul_values():
    eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal((eye @ Tensor([[3.0], [4.0]])).data, [[3.0], [4.0]])
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient(rng):
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    assert max_gradient_error(lambda: (a @ b).sum(), [a, b]) < 1e-6


def test_softmax_rows_examples():
    assert np.allclose(T.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    out = T.softmax_rows(Tensor([[1000.0, 1000.0]])).data
    assert np.all(np.isfinite(out)) and np.allclose(out, [[0.5, 0.5]])


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        T.softmax_rows(Tensor([[0.0, np.nan]]))


def test_softmax_rows_needs_matrix():
    with pytest.raises(DimensionError):
        T.softmax_rows(Tensor([1.0, 2.0]))


def test_softmax_gradient(rng):
    x = leaf(rng.normal(size=(2, 3)))
    w = rng.normal(size=(2, 3))
    assert max_gradient_error(lambda: (T.softmax_rows(x) * w).sum(), [x]) < 1e-6


def test_masked_softmax_zeroes_excluded_and_empty_rows():
    x = Tensor([[1.0, 2.0, 3.0], [1.0, 1.0, 1.0]])
    mask = np.array([[False, True, False], [True, True, True]])
    out = T.softmax(x, axis=-1, mask=mask).data
    assert out[0, 1] == 0.0 and np.isclose(out[0].sum(), 1.0)
    assert np.all(out[1] == 0.0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    out = T.softmax_rows(Tensor(x)).data
    assert np.all(out >= 0) and np.all(out <= 1)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_elementwise_values():
    assert T.elementwise("relu", Tensor([3.0, -1.0])).data.tolist() == [3.0, 0.0]
    assert T.elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    assert T.sigmoid(Tensor([np.inf, -np.inf])).data.tolist() == [1.0, 0.0]


def test_elementwise_errors():
    with pytest.raises(DimensionError):
        T.elementwise("add", Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(NumericError):
        T.elementwise("log", Tensor([1.0, 0.0]))
    with pytest.raises(NumericError):
        T.log(Tensor([-2.0]))


@pytest.mark.parametrize("name", ["relu", "sigmoid", "tanh", "log", "exp"])
def test_unary_gradients(name, rng):
    x = leaf(rng.uniform(0.2, 2.0, size=5) * rng.choice([-1, 1], size=5))
    if name == "log":
        x.data = np.abs(x.data)
    w = rng.normal(size=5)
    assert max_gradient_error(lambda: (T.elementwise(name, x) * w).sum(), [x]) < 1e-6


def test_mul_gradient(rng):
    a, b = leaf(rng.normal(size=4)), leaf(rng.normal(size=4))
    assert max_gradient_error(lambda: T.elementwise("mul", a, b).sum(), [a, b]) < 1e-6


def test_backward_examples():
    x = leaf(np.zeros((2, 3)))
    T.backward(x.sum())
    assert np.array_equal(x.grad, np.ones((2, 3)))
    y = leaf([2.0, 3.0])
    T.backward((y * y).sum())
    assert y.grad.tolist() == [4.0, 6.0]


def test_backward_accumulates_without_reset():
    y = leaf([2.0, 3.0])
    T.backward((y * y).sum())
    T.backward((y * y).sum())
    assert y.grad.tolist() == [8.0, 12.0]


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        T.backward(leaf([1.0, 2.0]) * 2.0)


def test_composite_graph_gradient(rng):
    W = leaf(rng.normal(size=(4, 5)))
    x = rng.normal(size=(3, 4))
    targets = [0, 4, 2]

    def loss():
        p = T.softmax_rows(T.relu(Tensor(x) @ W))
        picked = T.take(T.log(p + 1e-3), (np.arange(3), targets))
        return -picked.sum()

    assert max_gradient_error(loss, [W]) < 1e-5


def test_shared_input_sums_both_paths(rng):
    x = leaf(rng.normal(size=3))
    f = lambda: (T.tanh(x) * T.sigmoid(x) + x * 2.0).sum()
    T.backward(f())
    assert relative_error(x.grad, numeric_grad(f, x)) < 1e-8


def test_broadcast_row_vector_gradient(rng):
    A, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=4))
    assert max_gradient_error(lambda: T.tanh(A + b).sum(), [A, b]) < 1e-6


@pytest.mark.parametrize(
    "fn",
    [
        lambda x: T.log_softmax(x, axis=-1)[:, 1].sum(),
        lambda x: T.cross_entropy(x, [1, 0, 3]),
        lambda x: T.concat([x, x * 2.0], axis=0).mean(),
        lambda x: T.stack([x, T.tanh(x)], axis=0).sum(axis=1)[1, 2],
        lambda x: T.reshape(T.swap_last(x), (-1,))[3] * T.transpose(x)[0, 1],
        lambda x: T.embedding(x, [2, 2, 0]).sum(),
    ],
)
def test_shape_ops_gradients(fn, rng):
    x = leaf(rng.normal(size=(3, 4)))
    assert max_gradient_error(lambda: fn(x), [x]) < 1e-6


def test_cross_entropy_value():
    logits = Tensor([[0.0, 0.0], [np.log(3.0), 0.0]])
    # -(log 0.5 + log 0.75) / 2
    assert np.isclose(T.cross_entropy(logits, [1, 0]).item(), -(np.log(0.5) + np.log(0.75)) / 2)


def test_cross_entropy_errors():
    with pytest.raises(ContractError):
        T.cross_entropy(Tensor(np.zeros((2, 3))), [0])
    with pytest.raises(IndexError):
        T.cross_entropy(Tensor(np.zeros((1, 3))), [3])


def test_embedding_out_of_range():
    with pytest.raises(IndexError):
        T.embedding(Tensor(np.zeros((3, 2))), [3])


def test_no_grad_builds_no_graph():
    x = leaf([1.0, 2.0])
    with T.no_grad():
        y = (x * x).sum()
    assert not y.requires_grad and y.is_leaf


def test_tape_is_topological(rng):
    a = leaf(rng.normal(size=(2, 2)))
    loss = T.tanh(a @ a).sum() + a.sum()
    order = T.tape(loss)
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for p in node._parents:
            assert pos[id(p)] < pos[id(node)]
    assert order[-1] is loss


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a.W": rng.normal(size=(3, 2)), "b": rng.normal(size=5), "s": np.array(2.5)}
    path = tmp_path / "x.ckpt"
    T.save_tensors(path, tensors)
    raw = path.read_bytes()
    assert raw.startswith(b"CTXSLU-CKPT v1\n")
    back = T.load_tensors(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    assert T.checksum(back.values()) == T.checksum(tensors.values())


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_matmul_gradient_property(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = leaf(r.normal(size=(m, k))), leaf(r.normal(size=(k, n)))
    w = r.normal(size=(m, n))
    assert max_gradient_error(lambda: ((a @ b) * w).sum(), [a, b]) < 1e-4
