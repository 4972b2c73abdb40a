"""Intent classifier and slot tagger over ASR-NLU interface states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, EmptyHypothesisError
from .nn import BiLSTM, Linear, ParamStore, SelfAttentionBlock
from .tensor import Tensor


@dataclass
class NluConfig:
    tagger: str = "bilstm"  # "bilstm" (RNN-T variant) or "transformer" (T-T variant)
    layers: int = 2
    hidden: int = 32  # per direction for the BiLSTM
    heads: int = 2
    intent_ff: int = 64
    lambdas: tuple[float, float, float] = (1.0, 1.0, 1.0)  # tok, slot, intent


class NluModel:
    def __init__(self, store: ParamStore, cfg: NluConfig, input_width: int, n_intents: int, n_slots: int,
                 prefix: str = "nlu"):
        self.cfg = cfg
        self.input_width = input_width
        if cfg.tagger == "bilstm":
            self.layers = [
                BiLSTM(store, f"{prefix}.tagger.{i}", input_width if i == 0 else 2 * cfg.hidden, cfg.hidden)
                for i in range(cfg.layers)
            ]
            width = 2 * cfg.hidden
        elif cfg.tagger == "transformer":
            width = 2 * cfg.hidden
            self.proj = Linear(store, f"{prefix}.tagger.in", input_width, width)
            self.layers = [SelfAttentionBlock(store, f"{prefix}.tagger.{i}", width, cfg.heads, width)
                           for i in range(cfg.layers)]
        else:
            raise ValueError(f"unknown tagger {cfg.tagger!r}")
        self.int1 = Linear(store, f"{prefix}.intent.0", width, cfg.intent_ff)
        self.int2 = Linear(store, f"{prefix}.intent.1", cfg.intent_ff, cfg.intent_ff)
        self.int_out = Linear(store, f"{prefix}.intent.out", cfg.intent_ff, n_intents)
        self.slot_out = Linear(store, f"{prefix}.slot.out", width, n_slots)

    def __call__(self, H: Tensor) -> tuple[Tensor, Tensor]:
        """(intent logits [n_intents], slot logits [m, n_slots])."""
        if H.shape[0] == 0:
            raise EmptyHypothesisError("no interface states to tag")
        x = H
        if self.cfg.tagger == "transformer":
            x = T.tanh(self.proj(x))
        for layer in self.layers:
            x = layer(x)
        pooled = T.reshape(x.mean(axis=0), (1, -1))
        z = T.relu(self.int2(T.relu(self.int1(pooled))))
        return T.reshape(self.int_out(z), (-1,)), self.slot_out(x)


def nlu_forward(model: NluModel, H: Tensor):
    return model(H)


@dataclass
class SluLosses:
    tok: Tensor
    slot: Tensor
    intent: Tensor
    total: Tensor


def slu_loss(intent_logits: Tensor, slot_logits: Tensor, gold_intent: int, gold_slots, tok_loss,
             lambdas=(1.0, 1.0, 1.0)) -> SluLosses:
    """``L_total = l1 * L_tok + l2 * L_slot + l3 * L_int``; ``tok_loss`` may be a
    Tensor or a float."""
    gold_slots = np.asarray(gold_slots, dtype=np.int64)
    if slot_logits.shape[0] != len(gold_slots):
        raise ContractError(f"{slot_logits.shape[0]} slot rows for {len(gold_slots)} gold slots")
    l_slot = T.cross_entropy(slot_logits, gold_slots)
    l_int = T.cross_entropy(T.reshape(intent_logits, (1, -1)), [gold_intent])
    l_tok = T.as_tensor(tok_loss)
    l1, l2, l3 = lambdas
    total = l_tok * l1 + l_slot * l2 + l_int * l3
    return SluLosses(l_tok, l_slot, l_int, total)
