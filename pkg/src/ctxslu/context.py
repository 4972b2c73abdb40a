"""Dialogue-context encoders.

Dialogue acts become ``g_j = ReLU(W_g (M_A[a_j] + M_S[s_j]))``; previous
user transcripts become one vector each from a small self-attention encoder
read out at the ``[CLS]`` position.  Both are padded or truncated to a fixed
number of rows, keeping the most recent entries, with a mask marking pads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, ParamStore, sinusoidal_positions
from .tensor import Tensor
from .tokenizer import Vocab


@dataclass
class ContextBundle:
    G: Tensor  # [l_a, d]
    U: Tensor  # [l_b, d]
    pad_mask_g: np.ndarray  # True = padded row
    pad_mask_u: np.ndarray

    @property
    def l_a(self):
        return self.G.shape[0]

    @property
    def l_b(self):
        return self.U.shape[0]


class DialogueActEmbedder:
    def __init__(self, store: ParamStore, n_actions: int, n_slots: int, d: int, l_a: int, prefix: str = "ctx"):
        self.d, self.l_a = d, l_a
        self.n_actions, self.n_slots = n_actions, n_slots
        self.M_A = store.uniform(f"{prefix}.M_A", (n_actions, d), 0.1)
        self.M_S = store.uniform(f"{prefix}.M_S", (n_slots, d), 0.1)
        self.W_g = store.fan_in(f"{prefix}.W_g", (d, d))

    def encode(self, acts) -> tuple[Tensor, np.ndarray]:
        """``acts`` is a list of (action_id, slot_id) pairs, oldest first."""
        acts = list(acts)[-self.l_a :] if self.l_a else []
        n_real = len(acts)
        ids = acts + [(0, 0)] * (self.l_a - n_real)
        a_ids = np.array([a for a, _ in ids], dtype=np.int64)
        s_ids = np.array([s for _, s in ids], dtype=np.int64)
        if a_ids.size and (a_ids.max() >= self.n_actions or a_ids.min() < 0):
            raise IndexError(f"action id out of range [0, {self.n_actions})")
        if s_ids.size and (s_ids.max() >= self.n_slots or s_ids.min() < 0):
            raise IndexError(f"slot id out of range [0, {self.n_slots})")
        fused = T.embedding(self.M_A, a_ids) + T.embedding(self.M_S, s_ids)
        G = T.relu(fused @ T.transpose(self.W_g))
        mask = np.arange(self.l_a) >= n_real
        return G, mask


def encode_acts(acts, emb: DialogueActEmbedder):
    return emb.encode(acts)


class UtteranceEmbedder:
    """Token table plus one single-head self-attention layer; the output for
    an utterance is the ``[CLS]`` row, ``E[x] + Attn(E[x] + P)``."""

    def __init__(self, store: ParamStore, vocab_size: int, d: int, l_b: int, cls_id: int, sep_id: int,
                 prefix: str = "ctx.utt", zero_attention: bool = False):
        self.d, self.l_b = d, l_b
        self.cls_id, self.sep_id = cls_id, sep_id
        self.vocab_size = vocab_size
        self.E = store.uniform(f"{prefix}.E", (vocab_size, d), 0.1)
        init = (lambda n, s: store.zeros(n, s)) if zero_attention else store.fan_in
        self.Wq = init(f"{prefix}.Wq", (d, d))
        self.Wk = init(f"{prefix}.Wk", (d, d))
        self.Wv = init(f"{prefix}.Wv", (d, d))

    def embed(self, utterances) -> Tensor:
        """[k, d] summary vectors for k token-id sequences."""
        k = len(utterances)
        seqs = [[self.cls_id] + list(u) + [self.sep_id] for u in utterances]
        for s in seqs:
            if min(s) < 0 or max(s) >= self.vocab_size:
                raise IndexError(f"token id out of range [0, {self.vocab_size})")
        L = max(len(s) for s in seqs)
        ids = np.zeros((k, L), dtype=np.int64)
        key_pad = np.ones((k, 1, L), dtype=bool)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = s
            key_pad[i, 0, : len(s)] = False
        X = T.embedding(self.E, ids)  # [k, L, d]
        XP = X + sinusoidal_positions(L, self.d)
        # only the [CLS] query is read out
        q = XP[:, :1, :] @ self.Wq  # [k, 1, d]
        kk = XP @ self.Wk
        v = XP @ self.Wv
        att = T.softmax(q @ T.swap_last(kk) * (1.0 / math.sqrt(self.d)), axis=-1, mask=key_pad)
        out = X[:, :1, :] + att @ v
        return out.reshape((k, self.d))

    def encode(self, prev) -> tuple[Tensor, np.ndarray]:
        prev = list(prev)[-self.l_b :] if self.l_b else []
        n_real = len(prev)
        mask = np.arange(self.l_b) >= n_real
        if n_real == 0:
            return Tensor(np.zeros((self.l_b, self.d))), mask
        rows = self.embed(prev)
        if n_real < self.l_b:
            rows = T.concat([rows, Tensor(np.zeros((self.l_b - n_real, self.d)))], axis=0)
        return rows, mask


class FileUtteranceEmbedder:
    """Precomputed per-utterance vectors keyed by the space-joined transcript
    (JSON object of text -> list of floats).  Unknown text maps to zeros."""

    def __init__(self, path, d: int, l_b: int, vocab: Vocab):
        with open(path, encoding="utf-8") as fh:
            table = json.load(fh)
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        for k, v in self.table.items():
            if v.shape != (d,):
                raise ValueError(f"embedding for {k!r} has shape {v.shape}, expected ({d},)")
        self.d, self.l_b, self.vocab = d, l_b, vocab

    def encode(self, prev):
        prev = list(prev)[-self.l_b :] if self.l_b else []
        rows = np.zeros((self.l_b, self.d))
        for i, u in enumerate(prev):
            key = " ".join(self.vocab.decode_words(u))
            rows[i] = self.table.get(key, 0.0)
        return Tensor(rows), np.arange(self.l_b) >= len(prev)


def encode_prev_utterances(prev, emb) -> tuple[Tensor, np.ndarray]:
    return emb.encode(prev)


def default_embedder(store: ParamStore, vocab: Vocab, d: int, l_b: int = 5, zero_attention: bool = False):
    return UtteranceEmbedder(store, len(vocab), d, l_b, vocab.cls_id, vocab.sep_id, zero_attention=zero_attention)


class ContextEncoder:
    """Acts and previous utterances to a :class:`ContextBundle`.

    ``sources`` restricts the ablation: ``"da"`` keeps only acts,
    ``"utt"`` only utterances; the dropped source is zeroed and fully masked.
    """

    def __init__(self, acts: DialogueActEmbedder, utts, sources: str = "both"):
        if sources not in ("both", "da", "utt"):
            raise ValueError(f"unknown context sources {sources!r}")
        self.acts, self.utts, self.sources = acts, utts, sources

    def __call__(self, act_ids, prev_piece_ids) -> ContextBundle:
        if self.sources == "utt":
            G, mg = Tensor(np.zeros((self.acts.l_a, self.acts.d))), np.ones(self.acts.l_a, dtype=bool)
        else:
            G, mg = self.acts.encode(act_ids)
        if self.sources == "da":
            U, mu = Tensor(np.zeros((self.utts.l_b, self.utts.d))), np.ones(self.utts.l_b, dtype=bool)
        else:
            U, mu = self.utts.encode(prev_piece_ids)
        return ContextBundle(G, U, mg, mu)
