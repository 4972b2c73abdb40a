"""Contextual E2E SLU models, stage-wise training and causal evaluation.

Parameter families, created in this order so that schemes sharing a family
also share its initial values under one seed::

    ctx.*       context encoder (acts and previous utterances)
    cmb.enc.*   combiner on acoustic frames   (SpeechEncoder, SharedContext)
    asr.*       transducer
    cmb.nlu.*   combiner on interface states  (AsrNluInterface, SharedContext)
    nlu.*       intent and slot heads
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .combiner import Combiner, CombinerConfig
from .config import ModelConfig, TrainConfig, from_dict, to_dict
from .context import ContextBundle, ContextEncoder, DialogueActEmbedder, default_embedder
from .data import OTHER_SLOT, LabelSet
from .errors import ConfigError, EmptyHypothesisError, NumericError
from .featurize import FRAME_DIM
from .metrics import Utterance, score
from .nlu import NluModel, slu_loss
from .nn import Adam, ParamStore, Schedule
from .tensor import Tensor, no_grad
from .tokenizer import Vocab, collapse_subword_slots, propagate_slots_to_subwords
from .transducer import AsrModel, transducer_loss, viterbi_alignment

ENCODER_SCHEMES = ("SpeechEncoder", "SharedContext")
INTERFACE_SCHEMES = ("AsrNluInterface", "SharedContext")
LOG_COLUMNS = ["step", "stage", "L_tok", "L_slot", "L_int", "L_total", "lr"]


class SluModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocab, labels: LabelSet):
        cfg.validate()
        self.cfg, self.vocab, self.labels = cfg, vocab, labels
        self.store = store = ParamStore(cfg.seed)
        self.majority_intent = labels.intents[0]
        asr_cfg, nlu_cfg = cfg.asr, cfg.nlu
        if cfg.variant == "tt":
            asr_cfg = dataclasses.replace(asr_cfg, encoder="transformer")
            nlu_cfg = dataclasses.replace(nlu_cfg, tagger="transformer")
        self.ctx = self.cmb_enc = self.cmb_nlu = None
        if cfg.scheme != "NoContext":
            acts = DialogueActEmbedder(store, len(labels.actions), len(labels.slots), cfg.d, cfg.l_a, "ctx")
            utts = default_embedder(store, vocab, cfg.d, cfg.l_b)
            self.ctx = ContextEncoder(acts, utts, cfg.context_sources)

        def combiner(prefix, width):
            ccfg = CombinerConfig(cfg.combiner, cfg.heads, cfg.d, width, cfg.d, cfg.masked_average,
                                  cfg.per_key_gate)
            return Combiner(store, prefix, ccfg)

        width = FRAME_DIM
        if cfg.scheme in ENCODER_SCHEMES:
            self.cmb_enc = combiner("cmb.enc", FRAME_DIM)
            width = self.cmb_enc.cfg.out_width
        self.asr = AsrModel(store, dataclasses.replace(asr_cfg, input_width=width), len(vocab))
        width = self.asr.interface_width
        if cfg.scheme in INTERFACE_SCHEMES:
            self.cmb_nlu = combiner("cmb.nlu", width)
            width = self.cmb_nlu.cfg.out_width
        self.nlu = NluModel(store, nlu_cfg, width, len(labels.intents), len(labels.slots))

    # -- pieces of the forward pass -----------------------------------------

    def act_ids(self, acts):
        try:
            return [(self.labels.action_id[a.action], self.labels.slot_id[a.slot]) for a in acts]
        except KeyError as e:
            raise ConfigError(f"dialogue act label {e} unknown to the model") from None

    def context(self, acts, prev_piece_ids) -> ContextBundle | None:
        if self.ctx is None:
            return None
        return self.ctx(self.act_ids(acts), prev_piece_ids)

    def asr_input(self, frames: Tensor, bundle):
        """Encoder input: scaled frames, augmented with context when a combiner is present."""
        frames = frames * self.cfg.frame_scale
        if self.cmb_enc is None:
            return frames, None
        out = self.cmb_enc(frames, bundle)
        return out.augmented, out

    def nlu_input(self, H: Tensor, bundle):
        if self.cmb_nlu is None:
            return H, None
        out = self.cmb_nlu(H, bundle)
        return out.augmented, out

    # -- persistence ----------------------------------------------------------

    def metadata(self) -> dict:
        return {
            "model": to_dict(self.cfg),
            "vocab": self.vocab.pieces,
            "labels": self.labels.to_dict(),
            "majority_intent": self.majority_intent,
        }

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        T.save_tensors(out / "checkpoint.ckpt", self.store.state())
        (out / "model.json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, run_dir):
        run = Path(run_dir)
        meta = json.loads((run / "model.json").read_text())
        model = cls(from_dict(ModelConfig, meta["model"]), Vocab(meta["vocab"]), LabelSet.from_dict(meta["labels"]))
        model.majority_intent = meta["majority_intent"]
        model.store.load_state(T.load_tensors(run / "checkpoint.ckpt"))
        return model


def build_model(scheme: str, combiner: str | None, config: ModelConfig, vocab: Vocab, labels: LabelSet) -> SluModel:
    return SluModel(dataclasses.replace(config, scheme=scheme, combiner=combiner), vocab, labels)


# ----------------------------------------------------------------------------
# training examples


@dataclass
class Example:
    frames: np.ndarray
    targets: np.ndarray  # piece ids
    piece_slots: np.ndarray
    intent: int
    acts: list  # DialogueAct, oldest first
    prev: list  # gold piece ids of earlier turns


def check_compatible(model: SluModel, dialogues):
    """ConfigError when the data uses words or labels the model cannot represent."""
    lab = model.labels
    for d in dialogues:
        for t in d.turns:
            if model.vocab.has_unknown(t.tokens):
                raise ConfigError(f"{d.dialogue_id}: words {t.tokens} fall outside the model vocabulary")
            if t.intent not in lab.intent_id or any(s not in lab.slot_id for s in t.slots):
                raise ConfigError(f"{d.dialogue_id}: intent or slot labels unknown to the model")
            model.act_ids(t.acts)


def make_examples(model: SluModel, dialogues) -> list[Example]:
    check_compatible(model, dialogues)
    out = []
    for d in dialogues:
        for t in d.turns:
            ids, seg = model.vocab.encode_words(t.tokens)
            slots = propagate_slots_to_subwords([model.labels.slot_id[s] for s in t.slots], seg)
            prev = [model.vocab.encode_words(p)[0] for p in t.prev_transcripts]
            out.append(Example(t.frames, np.array(ids, dtype=np.int64), np.array(slots, dtype=np.int64),
                               model.labels.intent_id[t.intent], list(t.acts), prev))
    return out


def forward_train(model: SluModel, ex: Example, stage: int, lambdas=(1.0, 1.0, 1.0)):
    """Losses of one example; stage 1 uses L_tok, stage 2 L_slot + L_int,
    stage 3 the weighted total.  Returns (objective, dict of floats)."""
    bundle = model.context(ex.acts, ex.prev)
    x, _ = model.asr_input(Tensor(ex.frames), bundle)
    enc = model.asr.encode_audio(x)
    pred = model.asr.predict(ex.targets)
    hidden = model.asr.joint_hidden(enc, pred)
    lp = model.asr.log_probs(hidden)
    l_tok = transducer_loss(lp, ex.targets, model.asr.blank)
    if stage == 1:
        return l_tok, {"L_tok": l_tok.item()}
    frames_of = viterbi_alignment(lp.data, ex.targets, model.asr.blank)
    H = model.asr.interface_states(enc, hidden, frames_of)
    h_in, _ = model.nlu_input(H, bundle)
    intent_logits, slot_logits = model.nlu(h_in)
    losses = slu_loss(intent_logits, slot_logits, ex.intent, ex.piece_slots, l_tok, lambdas)
    logs = {"L_tok": l_tok.item(), "L_slot": losses.slot.item(), "L_int": losses.intent.item()}
    if stage == 2:
        obj = losses.slot + losses.intent
    else:
        obj = losses.total
    logs["L_total"] = losses.total.item()
    return obj, logs


# ----------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    log: list[dict]
    seconds: float
    asr_checksum_stage2: tuple[int, int] | None = None  # asr.* checksum before/after stage 2


def _grad_norms(model: SluModel) -> dict:
    fam: dict[str, float] = {}
    for n, p in model.store.params.items():
        if p.grad is not None:
            key = ".".join(n.split(".")[:2])
            fam[key] = fam.get(key, 0.0) + float(np.sum(p.grad**2))
    return {k: math.sqrt(v) for k, v in fam.items()}


def run_training(plan: TrainConfig, dialogues, model: SluModel, log_path=None, progress=None) -> TrainResult:
    examples = make_examples(model, dialogues)
    if not examples:
        raise ConfigError("no training examples")
    counts = Counter(model.labels.intents[e.intent] for e in examples)
    model.majority_intent = min(counts, key=lambda k: (-counts[k], k))
    rng = np.random.default_rng(plan.seed)
    rows: list[dict] = []
    start = time.perf_counter()
    step = 0
    asr_names = model.store.names("asr.")
    checks = None
    for stage, n_steps in zip((1, 2, 3), plan.stage_steps):
        if n_steps <= 0:
            continue
        frozen = plan.stage2_freeze if stage == 2 else ()
        model.store.set_trainable(frozen, False)
        if stage == 2:
            before = T.checksum(model.store[n].data for n in asr_names)
        opt = Adam(model.store.trainable(), clip=plan.clip)
        peak = plan.stage_lr[stage - 1] if plan.stage_lr else plan.peak_lr
        sched = Schedule(peak, plan.warmup, plan.hold, plan.final_lr, n_steps)
        for k in range(n_steps):
            lr = sched(k)
            batch = rng.integers(len(examples), size=plan.batch)
            model.store.zero_grad()
            agg: dict[str, float] = {}
            try:
                for i in batch:
                    obj, logs = forward_train(model, examples[i], stage, plan.lambdas)
                    T.backward(obj * (1.0 / plan.batch))
                    for key, v in logs.items():
                        agg[key] = agg.get(key, 0.0) + v / plan.batch
                bad = not all(math.isfinite(v) for v in agg.values())
            except NumericError as e:
                bad, agg = True, {"error": str(e)}
            if bad:
                raise NumericError(
                    f"non-finite loss at step {step} (stage {stage}, lr={lr:.3g}); losses={agg}; "
                    f"grad norms={_grad_norms(model)}"
                )
            opt.step(lr)
            row = {"step": step, "stage": stage, "lr": lr}
            row.update({c: agg.get(c, float("nan")) for c in ("L_tok", "L_slot", "L_int", "L_total")})
            rows.append(row)
            if progress and (step % progress == 0):
                print(" ".join(f"{c}={row[c]:.4g}" if isinstance(row[c], float) else f"{c}={row[c]}"
                               for c in LOG_COLUMNS), flush=True)
            step += 1
        model.store.set_trainable(frozen, True)
        if stage == 2:
            checks = (before, T.checksum(model.store[n].data for n in asr_names))
    if log_path is not None:
        write_log(log_path, rows)
    return TrainResult(rows, time.perf_counter() - start, checks)


def write_log(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in LOG_COLUMNS})


# ----------------------------------------------------------------------------
# inference


@dataclass
class Decoded:
    piece_ids: list
    words: list
    slots: list
    intent: str
    beta_enc: float | None = None
    beta_nlu: float | None = None


def decode_turn(model: SluModel, frames: np.ndarray, acts, prev_piece_ids) -> Decoded:
    with no_grad():
        bundle = model.context(acts, prev_piece_ids)
        x, enc_out = model.asr_input(Tensor(frames), bundle)
        ids, H = model.asr.greedy_decode(x)
        beta_enc = float(np.mean(enc_out.beta)) if enc_out is not None and enc_out.beta is not None else None
        if not ids:
            return Decoded([], [], [], model.majority_intent, beta_enc)
        h_in, nlu_out = model.nlu_input(Tensor(H), bundle)
        try:
            intent_logits, slot_logits = model.nlu(h_in)
        except EmptyHypothesisError:
            return Decoded([], [], [], model.majority_intent, beta_enc)
    beta_nlu = float(np.mean(nlu_out.beta)) if nlu_out is not None and nlu_out.beta is not None else None
    piece_slots = [model.labels.slots[k] for k in np.argmax(slot_logits.data, axis=1)]
    words = model.vocab.decode_words(ids)
    seg = model.vocab.word_segmentation(ids)
    kept = [s for i, s in zip(ids, piece_slots) if i < len(model.vocab.pieces) and model.vocab.pieces[i] not in
            ("<pad>", "[CLS]", "[SEP]")]
    slots = collapse_subword_slots(kept, seg) if seg else []
    intent = model.labels.intents[int(np.argmax(intent_logits.data))]
    return Decoded(list(ids), words, slots, intent, beta_enc, beta_nlu)


@dataclass
class EvalResult:
    report: object
    utterances: list
    gates: list = field(default_factory=list)  # per turn {dialogue_id, turn, kind, beta_enc, beta_nlu}


def evaluate(model: SluModel, dialogues, matching: str = "set") -> EvalResult:
    """Greedy decoding turn by turn; the context of turn t uses the model's
    own transcripts of turns < t.  Gold transcripts are read only after the
    whole dialogue has been decoded, for scoring."""
    utterances, gates = [], []
    lab = model.labels
    for d in dialogues:
        decoded, prev = [], []
        for t in d.turns:
            dec = decode_turn(model, t.frames, t.acts, list(prev))
            decoded.append(dec)
            prev.append(dec.piece_ids)
        for k, (t, dec) in enumerate(zip(d.turns, decoded)):
            if t.intent not in lab.intent_id:
                raise ConfigError(f"{d.dialogue_id}: intent {t.intent!r} unknown to the model")
            utterances.append(Utterance(list(t.tokens), list(t.slots), t.intent, dec.words, dec.slots,
                                        dec.intent, k + 1, d.dialogue_id))
            gates.append({"dialogue_id": d.dialogue_id, "turn": k + 1, "kind": t.kind,
                          "beta_enc": dec.beta_enc, "beta_nlu": dec.beta_nlu})
    return EvalResult(score(utterances, matching), utterances, gates)

