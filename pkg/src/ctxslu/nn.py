"""Trainable building blocks on top of :mod:`ctxslu.tensor`.

Parameters live in a :class:`ParamStore` under dotted names
(``asr.enc.0.W_x`` ...), which doubles as the checkpoint layout and makes
stage-wise freezing a prefix match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ParamStore:
    def __init__(self, seed: int = 0):
        self.params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def uniform(self, name: str, shape, scale: float) -> Tensor:
        return self.add(name, self.rng.uniform(-scale, scale, size=shape))

    def fan_in(self, name: str, shape) -> Tensor:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in is the first dim."""
        return self.uniform(name, shape, 1.0 / math.sqrt(shape[0]))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def set_trainable(self, prefixes, trainable: bool):
        for n, p in self.params.items():
            if any(n.startswith(pre) for pre in prefixes):
                p.requires_grad = trainable

    def trainable(self) -> list[Tensor]:
        return [p for p in self.params.values() if p.requires_grad]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if strict and (missing or extra):
            raise KeyError(f"checkpoint mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for n, arr in state.items():
            if n in self.params:
                if self.params[n].shape != arr.shape:
                    raise ValueError(f"{n}: shape {arr.shape} != {self.params[n].shape}")
                self.params[n].data = np.array(arr, dtype=np.float64)


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, bias: bool = True):
        self.W = store.fan_in(f"{name}.W", (n_in, n_out))
        self.b = store.zeros(f"{name}.b", (n_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.W
        return y + self.b if self.b is not None else y


# ----------------------------------------------------------------------------
# LSTM


def _sig(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_recurrence(xw: Tensor, Wh: Tensor, reverse: bool = False) -> Tensor:
    """Run an LSTM over precomputed input projections.

    ``xw`` is [T, 4h] (input @ W_x + b, gate order i, f, g, o), ``Wh`` is
    [h, 4h]; zero initial state.  Returns hidden states [T, h] in input order.
    Fused into one tape node with a hand-written backpropagation-through-time.
    """
    X = xw.data[::-1] if reverse else xw.data
    W = Wh.data
    n, h4 = X.shape
    h = h4 // 4
    hs = np.zeros((n + 1, h))
    cs = np.zeros((n + 1, h))
    gates = np.zeros((n, h4))
    for t in range(n):
        z = X[t] + hs[t] @ W
        a = np.empty(h4)
        a[: 2 * h] = _sig(z[: 2 * h])
        a[2 * h : 3 * h] = np.tanh(z[2 * h : 3 * h])
        a[3 * h :] = _sig(z[3 * h :])
        gates[t] = a
        cs[t + 1] = a[h : 2 * h] * cs[t] + a[:h] * a[2 * h : 3 * h]
        hs[t + 1] = a[3 * h :] * np.tanh(cs[t + 1])
    out = hs[1:][::-1].copy() if reverse else hs[1:].copy()

    def back(g):
        G = g[::-1] if reverse else g
        dX = np.zeros_like(X)
        dW = np.zeros_like(W)
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(n - 1, -1, -1):
            a = gates[t]
            i, f, gg, o = a[:h], a[h : 2 * h], a[2 * h : 3 * h], a[3 * h :]
            tc = np.tanh(cs[t + 1])
            dh = G[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate(
                [dc * gg * i * (1 - i), dc * cs[t] * f * (1 - f), dc * i * (1 - gg * gg), do * o * (1 - o)]
            )
            dX[t] = dz
            dW += np.outer(hs[t], dz)
            dh_next = W @ dz
            dc_next = dc * f
        return (dX[::-1] if reverse else dX), dW

    return Tensor.from_op(out, (xw, Wh), back)


class LSTM:
    """Single-direction LSTM layer."""

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, reverse: bool = False):
        self.hidden = hidden
        self.reverse = reverse
        self.W_x = store.fan_in(f"{name}.W_x", (n_in, 4 * hidden))
        self.W_h = store.uniform(f"{name}.W_h", (hidden, 4 * hidden), 1.0 / math.sqrt(hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.b = store.add(f"{name}.b", b)

    def __call__(self, x: Tensor) -> Tensor:
        return lstm_recurrence(x @ self.W_x + self.b, self.W_h, self.reverse)

    def step(self, x: np.ndarray, state):
        """One inference step in plain numpy; ``state`` is (h, c) or None."""
        h = self.hidden
        hp, cp = state if state is not None else (np.zeros(h), np.zeros(h))
        z = x @ self.W_x.data + self.b.data + hp @ self.W_h.data
        i, f = _sig(z[:h]), _sig(z[h : 2 * h])
        g, o = np.tanh(z[2 * h : 3 * h]), _sig(z[3 * h :])
        c = f * cp + i * g
        hn = o * np.tanh(c)
        return hn, (hn, c)


class BiLSTM:
    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int):
        self.fwd = LSTM(store, f"{name}.fwd", n_in, hidden)
        self.bwd = LSTM(store, f"{name}.bwd", n_in, hidden, reverse=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.concat([self.fwd(x), self.bwd(x)], axis=-1)


# ----------------------------------------------------------------------------
# attention


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def split_heads(x: Tensor, heads: int) -> Tensor:
    """[..., n, d] -> [..., heads, n, d/heads]"""
    *lead, n, d = x.shape
    y = x.reshape(tuple(lead) + (n, heads, d // heads))
    k = len(lead)
    axes = tuple(range(k)) + (k + 1, k, k + 2)
    return T.transpose(y, axes)


def merge_heads(x: Tensor) -> Tensor:
    """[..., heads, n, dh] -> [..., n, heads*dh]"""
    *lead, h, n, dh = x.shape
    k = len(lead)
    axes = tuple(range(k)) + (k + 1, k, k + 2)
    return T.transpose(x, axes).reshape(tuple(lead) + (n, h * dh))


class SelfAttentionBlock:
    """Post-norm-free transformer block: x + MHA(x + pos), then x + FF(x)."""

    def __init__(self, store: ParamStore, name: str, width: int, heads: int, ff: int):
        if width % heads:
            raise ValueError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(store, f"{name}.q", width, width, bias=False)
        self.k = Linear(store, f"{name}.k", width, width, bias=False)
        self.v = Linear(store, f"{name}.v", width, width, bias=False)
        self.o = Linear(store, f"{name}.o", width, width)
        self.ff1 = Linear(store, f"{name}.ff1", width, ff)
        self.ff2 = Linear(store, f"{name}.ff2", ff, width)

    def __call__(self, x: Tensor) -> Tensor:
        n, w = x.shape
        xp = x + sinusoidal_positions(n, w)
        q, k, v = (split_heads(p(xp), self.heads) for p in (self.q, self.k, self.v))
        scores = q @ T.swap_last(k) * (1.0 / math.sqrt(w // self.heads))
        ctx = merge_heads(T.softmax(scores, axis=-1) @ v)
        x = x + self.o(ctx)
        return x + self.ff2(T.relu(self.ff1(x)))


# ----------------------------------------------------------------------------
# optimisation


@dataclass
class Schedule:
    """Linear warmup to ``peak``, constant hold, then exponential decay to
    ``final`` at step ``total``."""

    peak: float = 3e-3
    warmup: int = 100
    hold: int = 400
    final: float = 1e-5
    total: int = 5000

    def __call__(self, step: int) -> float:
        if step < self.warmup:
            return self.peak * (step + 1) / self.warmup
        if step < self.warmup + self.hold or self.total <= self.warmup + self.hold:
            return self.peak
        frac = min(1.0, (step - self.warmup - self.hold) / (self.total - self.warmup - self.hold))
        return self.peak * (self.final / self.peak) ** frac


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, clip: float | None = 5.0):
        self.params = list(params)
        self.beta1, self.beta2, self.eps, self.clip = beta1, beta2, eps, clip
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def grad_norm(self) -> float:
        return math.sqrt(sum(float((p.grad**2).sum()) for p in self.params if p.grad is not None))

    def step(self, lr: float):
        self.t += 1
        scale = 1.0
        if self.clip is not None:
            norm = self.grad_norm()
            if norm > self.clip:
                scale = self.clip / norm
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * scale
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)
