"""Neural transducer ASR.

Lattice convention (0-based): node (t, u) means t frames consumed and u
labels emitted.  A blank moves (t, u) -> (t + 1, u); label u + 1 moves
(t, u) -> (t, u + 1); every path ends with the blank out of (T - 1, U).

The forward variable of row u obeys a first-order recurrence in t, so each
row is one ``logaddexp.accumulate`` over frames instead of a double loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .nn import LSTM, BiLSTM, Linear, ParamStore, SelfAttentionBlock
from .tensor import Tensor, no_grad


@dataclass
class TransducerLattice:
    log_probs: np.ndarray  # [T, U + 1, V + 1]
    alpha: np.ndarray  # [T, U + 1]
    beta: np.ndarray  # [T, U + 1]

    @property
    def log_likelihood_forward(self) -> float:
        T_, U1 = self.alpha.shape
        return float(self.alpha[T_ - 1, U1 - 1] + self._blank[T_ - 1, U1 - 1])

    @property
    def log_likelihood_backward(self) -> float:
        return float(self.beta[0, 0])


def _emissions(lp: np.ndarray, targets, blank: int):
    T_, U1, _ = lp.shape
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) != U1 - 1:
        raise DimensionError(f"lattice has {U1} label positions for {len(targets)} targets")
    if (targets == blank).any():
        raise ContractError("target sequence contains the blank id")
    b = lp[:, :, blank]
    y = lp[:, np.arange(U1 - 1), targets] if U1 > 1 else np.zeros((T_, 0))
    return b, y


def forward_variables(lp: np.ndarray, targets, blank: int) -> np.ndarray:
    b, y = _emissions(lp, targets, blank)
    T_, U1 = b.shape
    alpha = np.empty((T_, U1))
    alpha[0, 0] = 0.0
    alpha[1:, 0] = np.cumsum(b[:-1, 0])
    for u in range(1, U1):
        e = alpha[:, u - 1] + y[:, u - 1]
        B = np.concatenate([[0.0], np.cumsum(b[:-1, u])])
        alpha[:, u] = B + np.logaddexp.accumulate(e - B)
    return alpha


def backward_variables(lp: np.ndarray, targets, blank: int) -> np.ndarray:
    b, y = _emissions(lp, targets, blank)
    T_, U1 = b.shape
    beta = np.empty((T_, U1))
    beta[:, U1 - 1] = np.cumsum(b[::-1, U1 - 1])[::-1]
    for u in range(U1 - 2, -1, -1):
        f = y[:, u] + beta[:, u + 1]
        C = np.concatenate([[0.0], np.cumsum(b[:-1, u])])
        beta[:, u] = -C + np.logaddexp.accumulate((f + C)[::-1])[::-1]
    return beta


def lattice(lp: np.ndarray, targets, blank: int) -> TransducerLattice:
    lat = TransducerLattice(lp, forward_variables(lp, targets, blank), backward_variables(lp, targets, blank))
    lat._blank = lp[:, :, blank]
    return lat


def transducer_loss(log_probs: Tensor, targets, blank: int) -> Tensor:
    """-log P(targets | frames), summed over all monotonic alignments.

    ``log_probs`` [T, U + 1, V + 1] are treated as free log-weights, so the
    gradient is exact even for unnormalised inputs.
    """
    lp = log_probs.data
    T_, U1, _ = lp.shape
    if T_ < 1:
        raise ContractError("transducer loss needs at least one frame")
    b, y = _emissions(lp, targets, blank)
    alpha = forward_variables(lp, targets, blank)
    logp = alpha[T_ - 1, U1 - 1] + b[T_ - 1, U1 - 1]

    def back(g):
        beta = backward_variables(lp, targets, blank)
        grad = np.zeros_like(lp)
        nxt = np.full((T_, U1), -np.inf)
        nxt[:-1] = beta[1:]
        nxt[T_ - 1, U1 - 1] = 0.0
        grad[:, :, blank] = -np.exp(alpha + b + nxt - logp)
        if U1 > 1:
            occ = -np.exp(alpha[:, :-1] + y + beta[:, 1:] - logp)
            grad[:, np.arange(U1 - 1), np.asarray(targets)] = occ
        return (g * grad,)

    return Tensor.from_op(np.array(-logp), (log_probs,), back)


def enumerate_paths_loss(lp: np.ndarray, targets, blank: int) -> float:
    """Brute force: sum the probability of every alignment explicitly."""
    T_, U1, _ = lp.shape
    U = U1 - 1
    total = []
    # the final move is always the blank out of (T-1, U); place U labels among the rest
    n_moves = T_ - 1 + U
    for label_pos in combinations(range(n_moves), U):
        t = u = 0
        s = 0.0
        lab = set(label_pos)
        for i in range(n_moves):
            if i in lab:
                s += lp[t, u, targets[u]]
                u += 1
            else:
                s += lp[t, u, blank]
                t += 1
        s += lp[T_ - 1, U, blank]
        total.append(s)
    return float(-np.logaddexp.reduce(total))


def viterbi_alignment(lp: np.ndarray, targets, blank: int) -> np.ndarray:
    """Frame index at which each target label is emitted on the best path."""
    b, y = _emissions(lp, targets, blank)
    T_, U1 = b.shape
    score = np.full((T_, U1), -np.inf)
    came_from_label = np.zeros((T_, U1), dtype=bool)
    score[0, 0] = 0.0
    for t in range(T_):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            via_blank = score[t - 1, u] + b[t - 1, u] if t > 0 else -np.inf
            via_label = score[t, u - 1] + y[t, u - 1] if u > 0 else -np.inf
            if via_label > via_blank:
                score[t, u] = via_label
                came_from_label[t, u] = True
            else:
                score[t, u] = via_blank
    frames = np.zeros(U1 - 1, dtype=np.int64)
    t, u = T_ - 1, U1 - 1
    while u > 0 or t > 0:
        if came_from_label[t, u]:
            frames[u - 1] = t
            u -= 1
        else:
            t -= 1
    return frames


# ----------------------------------------------------------------------------
# model


@dataclass
class AsrConfig:
    input_width: int = 192
    encoder: str = "lstm"  # "lstm" (RNN-T) or "transformer" (T-T)
    enc_layers: int = 2
    enc_hidden: int = 64
    enc_heads: int = 1
    bidirectional: bool = True  # LSTM encoder only; each direction gets enc_hidden // 2 units
    pred_embed: int = 32
    pred_hidden: int = 64
    joint: int = 128
    max_symbols_per_frame: int = 5
    interface: str = "joint"  # which states form H: "joint" pre-projection or "encoder"


class AsrModel:
    def __init__(self, store: ParamStore, cfg: AsrConfig, vocab_size: int, prefix: str = "asr"):
        self.cfg = cfg
        self.V = vocab_size
        self.blank = vocab_size
        h = cfg.enc_hidden
        if cfg.encoder == "lstm":
            if cfg.bidirectional:
                if h % 2:
                    raise ValueError(f"bidirectional encoder needs an even enc_hidden, got {h}")
                self.enc = [BiLSTM(store, f"{prefix}.enc.{i}", cfg.input_width if i == 0 else h, h // 2)
                            for i in range(cfg.enc_layers)]
            else:
                self.enc = [LSTM(store, f"{prefix}.enc.{i}", cfg.input_width if i == 0 else h, h)
                            for i in range(cfg.enc_layers)]
        elif cfg.encoder == "transformer":
            self.enc_in = Linear(store, f"{prefix}.enc.in", cfg.input_width, h)
            self.enc = [SelfAttentionBlock(store, f"{prefix}.enc.{i}", h, cfg.enc_heads, 2 * h)
                        for i in range(cfg.enc_layers)]
        else:
            raise ValueError(f"unknown encoder {cfg.encoder!r}")
        self.embed = store.uniform(f"{prefix}.pred.embed", (vocab_size + 1, cfg.pred_embed), 0.1)
        self.pred = LSTM(store, f"{prefix}.pred.lstm", cfg.pred_embed, cfg.pred_hidden)
        enc_width = h if cfg.enc_layers else cfg.input_width
        self.j_enc = Linear(store, f"{prefix}.joint.enc", enc_width, cfg.joint)
        self.j_pred = Linear(store, f"{prefix}.joint.pred", cfg.pred_hidden, cfg.joint, bias=False)
        self.j_out = Linear(store, f"{prefix}.joint.out", cfg.joint, vocab_size + 1)

    @property
    def interface_width(self):
        return self.cfg.joint if self.cfg.interface == "joint" else self.cfg.enc_hidden

    def encode_audio(self, frames: Tensor) -> Tensor:
        if frames.ndim != 2 or frames.shape[1] != self.cfg.input_width:
            raise DimensionError(f"frames of shape {frames.shape}, expected [n, {self.cfg.input_width}]")
        x = frames
        if self.cfg.encoder == "transformer":
            x = T.tanh(self.enc_in(x))
        for layer in self.enc:
            x = layer(x)
        return x

    def predict(self, targets) -> Tensor:
        ids = np.concatenate([[self.blank], np.asarray(targets, dtype=np.int64)])
        return self.pred(T.embedding(self.embed, ids))

    def joint_hidden(self, enc: Tensor, pred: Tensor) -> Tensor:
        e = self.j_enc(enc)  # [T, J]
        p = self.j_pred(pred)  # [U+1, J]
        return T.tanh(T.reshape(e, (e.shape[0], 1, -1)) + T.reshape(p, (1, p.shape[0], -1)))

    def log_probs(self, hidden: Tensor) -> Tensor:
        return T.log_softmax(self.j_out(hidden), axis=-1)

    def interface_states(self, enc: Tensor, hidden: Tensor, frames_of_labels) -> Tensor:
        """H for teacher-forced training: states along the gold alignment."""
        u = np.arange(len(frames_of_labels))
        if self.cfg.interface == "joint":
            return hidden[frames_of_labels, u]
        return enc[frames_of_labels]

    # -- inference ----------------------------------------------------------

    def greedy_decode(self, frames: Tensor):
        """Returns (token ids, H [m, width] as numpy)."""
        cfg = self.cfg
        with no_grad():
            enc = self.encode_audio(frames)
            e_proj = self.j_enc(enc).data
            enc_d = enc.data
        Wp = self.j_pred.W.data
        Wo, bo = self.j_out.W.data, self.j_out.b.data
        p_out, state = self.pred.step(self.embed.data[self.blank], None)
        tokens, H = [], []
        for t in range(e_proj.shape[0]):
            for _ in range(cfg.max_symbols_per_frame):
                hid = np.tanh(e_proj[t] + p_out @ Wp)
                k = int(np.argmax(hid @ Wo + bo))
                if k == self.blank:
                    break
                tokens.append(k)
                H.append(hid if cfg.interface == "joint" else enc_d[t])
                p_out, state = self.pred.step(self.embed.data[k], state)
        width = self.interface_width
        return tokens, (np.array(H) if H else np.zeros((0, width)))
