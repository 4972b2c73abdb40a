"""Context combiners: averaged, attentive and gated attentive carryover.

Each combiner takes a query stream ``X`` [n, w] (acoustic frames or
ASR-NLU interface states) plus a :class:`ContextBundle` and returns the
queries with a context suffix appended row-wise.

Gate reduction.  The gate scores ``Q_c K_c^T`` are [n, l_a + l_b] but the
gate is one scalar per query, so by default the scores are averaged over the
real (unpadded) keys before the sigmoid.  ``per_key_gate`` keeps one gate
per key instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .context import ContextBundle
from .errors import DimensionError
from .nn import ParamStore, merge_heads, split_heads
from .tensor import Tensor

KINDS = ("AvC", "AttC", "GAttC")


@dataclass
class CombinerConfig:
    kind: str = "GAttC"
    heads: int = 4
    d: int = 32
    query_width: int = 192
    context_width: int = 32
    masked_average: bool = False
    per_key_gate: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"combiner kind must be one of {KINDS}, got {self.kind!r}")
        if self.d % self.heads:
            raise ValueError(f"attention size {self.d} not divisible by {self.heads} heads")

    @property
    def out_width(self) -> int:
        ctx = self.context_width if self.kind == "AvC" else self.d
        return self.query_width + 2 * ctx


@dataclass
class CombinerOutput:
    augmented: Tensor
    alpha_g: np.ndarray | None = None  # [heads, n, l_a]
    alpha_u: np.ndarray | None = None
    beta: np.ndarray | None = None  # [n, 1] or [n, l_a + l_b]
    gamma_g: np.ndarray | None = None
    gamma_u: np.ndarray | None = None


class Combiner:
    def __init__(self, store: ParamStore | None, prefix: str, cfg: CombinerConfig):
        self.cfg = cfg
        self.prefix = prefix
        # test hook: added to the gate logit; +inf pins the gate to 1, -inf to 0
        self.gate_bias = 0.0
        if cfg.kind == "AvC":
            return
        w, c, d = cfg.query_width, cfg.context_width, cfg.d
        sources = ("g", "u", "c") if cfg.kind == "GAttC" else ("g", "u")
        self.W = {}
        for src in sources:
            for role in ("q", "k", "v"):
                if src == "c" and role == "v":
                    continue
                n_in = w if role == "q" else c
                self.W[src, role] = store.fan_in(f"{prefix}.{src}.{role}", (n_in, d))

    def __call__(self, X: Tensor, bundle: ContextBundle) -> CombinerOutput:
        if X.ndim != 2 or X.shape[1] != self.cfg.query_width:
            raise DimensionError(f"queries of shape {X.shape}, expected [n, {self.cfg.query_width}]")
        for M in (bundle.G, bundle.U):
            if M.shape[1] != self.cfg.context_width:
                raise DimensionError(f"context width {M.shape[1]} != {self.cfg.context_width}")
        if self.cfg.kind == "AvC":
            return self._avc(X, bundle)
        return self._attentive(X, bundle, gated=self.cfg.kind == "GAttC")

    # -- averaged -----------------------------------------------------------

    def _average(self, M: Tensor, mask: np.ndarray) -> Tensor:
        if self.cfg.masked_average:
            live = (~mask).astype(np.float64)
            n = live.sum()
            if n == 0:
                return Tensor(np.zeros(M.shape[1]))
            return (M * live[:, None]).sum(axis=0) * (1.0 / n)
        return M.sum(axis=0) * (1.0 / M.shape[0])

    def _avc(self, X, b):
        c = T.concat([self._average(b.G, b.pad_mask_g), self._average(b.U, b.pad_mask_u)])
        n = X.shape[0]
        suffix = T.reshape(c, (1, -1)) * np.ones((n, 1))
        return CombinerOutput(T.concat([X, suffix], axis=1))

    # -- attentive ----------------------------------------------------------

    def _attend(self, X, M, mask, src, beta):
        h = self.cfg.heads
        q = split_heads(X @ self.W[src, "q"], h)  # [h, n, dh]
        k = split_heads(M @ self.W[src, "k"], h)  # [h, l, dh]
        v = split_heads(M @ self.W[src, "v"], h)
        scale = 1.0 / math.sqrt(self.cfg.d // h)
        alpha = T.softmax(q @ T.swap_last(k) * scale, axis=-1, mask=mask[None, None, :])
        gamma = alpha if beta is None else alpha * beta
        return merge_heads(gamma @ v), alpha, gamma

    def _gate(self, X, b: ContextBundle) -> Tensor:
        C = T.concat([b.G, b.U], axis=0)
        mask = np.concatenate([b.pad_mask_g, b.pad_mask_u])
        scores = (X @ self.W["c", "q"]) @ T.transpose(C @ self.W["c", "k"])  # [n, l_a + l_b]
        if self.cfg.per_key_gate:
            return T.sigmoid(scores + self.gate_bias)
        live = (~mask).astype(np.float64)
        avg = (scores * live).sum(axis=1, keepdims=True) * (1.0 / max(live.sum(), 1.0))
        return T.sigmoid(avg + self.gate_bias)

    def _attentive(self, X, b: ContextBundle, gated: bool):
        beta = beta_g = beta_u = None
        if gated:
            beta = self._gate(X, b)
            if self.cfg.per_key_gate:
                la = b.l_a
                beta_g, beta_u = beta[:, :la], beta[:, la:]
            else:
                beta_g = beta_u = beta
        Cg, ag, gg = self._attend(X, b.G, b.pad_mask_g, "g", beta_g)
        Cu, au, gu = self._attend(X, b.U, b.pad_mask_u, "u", beta_u)
        out = CombinerOutput(T.concat([X, Cg, Cu], axis=1), alpha_g=ag.data, alpha_u=au.data)
        if gated:
            out.beta = beta.data
            out.gamma_g, out.gamma_u = gg.data, gu.data
        return out


def combine_avc(X, bundle, masked_average=False):
    cfg = CombinerConfig("AvC", heads=1, d=bundle.G.shape[1], query_width=X.shape[1],
                         context_width=bundle.G.shape[1], masked_average=masked_average)
    return Combiner(None, "cmb", cfg)(X, bundle)
