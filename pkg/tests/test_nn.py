import numpy as np
import pytest

from ctxslu import tensor as T
from ctxslu.gradcheck import max_gradient_error
from ctxslu.nn import LSTM, Adam, BiLSTM, Linear, ParamStore, Schedule, SelfAttentionBlock, merge_heads, split_heads
from ctxslu.tensor import Tensor


def test_param_store_is_seeded():
    a, b = ParamStore(7), ParamStore(7)
    assert np.array_equal(a.fan_in("w", (4, 3)).data, b.fan_in("w", (4, 3)).data)
    assert not np.array_equal(a.fan_in("v", (4, 3)).data, ParamStore(8).fan_in("v", (4, 3)).data)


def test_param_store_rejects_duplicates():
    s = ParamStore()
    s.zeros("x", (2,))
    with pytest.raises(KeyError):
        s.zeros("x", (2,))


def test_set_trainable_by_prefix():
    s = ParamStore()
    s.zeros("asr.a", (1,))
    s.zeros("nlu.b", (1,))
    s.set_trainable(["asr."], False)
    assert [p.name for p in s.trainable()] == ["nlu.b"]


def test_load_state_strict():
    s = ParamStore()
    s.zeros("a", (2,))
    with pytest.raises(KeyError):
        s.load_state({"b": np.zeros(2)})
    with pytest.raises(ValueError):
        s.load_state({"a": np.zeros(3)})
    s.load_state({"a": np.ones(2)})
    assert s["a"].data.tolist() == [1.0, 1.0]


@pytest.mark.parametrize("reverse", [False, True])
def test_lstm_gradient(reverse, rng):
    s = ParamStore(2)
    lstm = LSTM(s, "l", 3, 4, reverse=reverse)
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    w = rng.normal(size=(5, 4))
    params = [x] + [s[n] for n in s.names()]
    assert max_gradient_error(lambda: (lstm(x) * w).sum(), params) < 1e-6


def test_lstm_step_matches_sequence(rng):
    s = ParamStore(3)
    lstm = LSTM(s, "l", 3, 4)
    x = rng.normal(size=(6, 3))
    full = lstm(Tensor(x)).data
    state = None
    for t in range(6):
        h, state = lstm.step(x[t], state)
        assert np.allclose(h, full[t], atol=1e-12)


def test_lstm_reverse_reads_future(rng):
    s = ParamStore(3)
    fwd, bwd = LSTM(s, "f", 2, 3), LSTM(s, "b", 2, 3, reverse=True)
    x = rng.normal(size=(4, 2))
    y = x.copy()
    y[-1] += 1.0
    assert np.allclose(fwd(Tensor(x)).data[0], fwd(Tensor(y)).data[0])
    assert not np.allclose(bwd(Tensor(x)).data[0], bwd(Tensor(y)).data[0])


def test_bilstm_width_and_gradient(rng):
    s = ParamStore(4)
    bi = BiLSTM(s, "bi", 3, 2)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    assert bi(x).shape == (4, 4)
    assert max_gradient_error(lambda: T.tanh(bi(x)).sum(), [x] + [s[n] for n in s.names()]) < 1e-6


def test_split_merge_heads_inverse(rng):
    x = Tensor(rng.normal(size=(5, 8)))
    h = split_heads(x, 4)
    assert h.shape == (4, 5, 2)
    assert np.array_equal(merge_heads(h).data, x.data)


def test_self_attention_block_gradient(rng):
    s = ParamStore(5)
    blk = SelfAttentionBlock(s, "sa", 4, 2, 6)
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    assert max_gradient_error(lambda: (blk(x) * w).sum(), [x] + [s[n] for n in s.names()]) < 1e-6


def test_linear_shapes(rng):
    s = ParamStore()
    lin = Linear(s, "lin", 3, 2)
    assert lin(Tensor(rng.normal(size=(5, 3)))).shape == (5, 2)
    assert lin(Tensor(rng.normal(size=(4, 5, 3)))).shape == (4, 5, 2)


def test_schedule_shape():
    sch = Schedule(peak=1.0, warmup=10, hold=5, final=0.01, total=40)
    assert sch(0) == pytest.approx(0.1)
    assert sch(9) == pytest.approx(1.0)
    assert sch(14) == 1.0
    assert sch(39) == pytest.approx(0.01 ** (24 / 25))
    assert sch(40) == pytest.approx(0.01)
    lrs = [sch(k) for k in range(15, 41)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def test_adam_minimises_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([p], clip=None)
    for _ in range(500):
        p.grad = None
        T.backward((p * p).sum())
        opt.step(0.05)
    assert np.abs(p.data).max() < 1e-2


def test_adam_clips_global_norm():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([p], clip=1.0)
    p.grad = np.array([30.0, 40.0])
    assert opt.grad_norm() == 50.0
    opt.step(0.1)
    # first Adam step moves each coordinate by lr regardless of scale
    assert np.allclose(p.data, [-0.1, -0.1], atol=1e-6)
