"""Dialogue data model and the line-delimited dataset format.

One dialogue per line, UTF-8 JSON::

    {"dialogue_id": "d0007", "noise_sigma": 0.05, "turns": [
        {"tokens": ["order", "five", "apples"], "slots": ["O", "Quantity", "Item"],
         "intent": "ShopItem", "acts": [], "prev_transcripts": [],
         "frame_seed": 1234, "frames_inline": false, "kind": "first"}, ...]}

``acts`` of turn k (0-based) holds the k system acts that followed turns
0..k-1 as ``{"action": ..., "slot": ...}``; ``prev_transcripts`` holds the
k earlier user transcripts.  When ``frames_inline`` is true the turn also
carries ``frames`` (a list of 192-float rows); otherwise frames are
regenerated from ``(tokens, frame_seed, noise_sigma)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .featurize import featurize

PAD_ACTION = "<pad>"
OTHER_SLOT = "O"


@dataclass(frozen=True)
class DialogueAct:
    action: str
    slot: str


@dataclass
class Turn:
    tokens: list[str]
    slots: list[str]
    intent: str
    acts: list[DialogueAct] = field(default_factory=list)
    prev_transcripts: list[list[str]] = field(default_factory=list)
    frame_seed: int = 0
    noise_sigma: float = 0.05
    inline_frames: np.ndarray | None = None
    kind: str | None = None

    @property
    def frames(self) -> np.ndarray:
        if self.inline_frames is not None:
            return self.inline_frames
        return featurize(self.tokens, self.frame_seed, self.noise_sigma)


@dataclass
class Dialogue:
    dialogue_id: str
    turns: list[Turn]


@dataclass
class LabelSet:
    """Name <-> id maps.  Index 0 is reserved: ``O`` for slots (also the
    padding slot of a dialogue act) and ``<pad>`` for actions."""

    intents: list[str]
    slots: list[str]
    actions: list[str]

    def __post_init__(self):
        if not self.slots or self.slots[0] != OTHER_SLOT:
            self.slots = [OTHER_SLOT] + [s for s in self.slots if s != OTHER_SLOT]
        if not self.actions or self.actions[0] != PAD_ACTION:
            self.actions = [PAD_ACTION] + [a for a in self.actions if a != PAD_ACTION]
        self.intent_id = {n: i for i, n in enumerate(self.intents)}
        self.slot_id = {n: i for i, n in enumerate(self.slots)}
        self.action_id = {n: i for i, n in enumerate(self.actions)}

    def to_dict(self):
        return {"intents": self.intents, "slots": self.slots, "actions": self.actions}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["intents"]), list(d["slots"]), list(d["actions"]))

    @classmethod
    def from_dialogues(cls, dialogues):
        intents, slots, actions = set(), set(), set()
        for d in dialogues:
            for t in d.turns:
                intents.add(t.intent)
                slots.update(t.slots)
                for a in t.acts:
                    actions.add(a.action)
                    slots.add(a.slot)
        return cls(sorted(intents), sorted(slots - {OTHER_SLOT}), sorted(actions - {PAD_ACTION}))


# ----------------------------------------------------------------------------
# serialisation


def turn_to_record(t: Turn) -> dict:
    rec = {
        "tokens": list(t.tokens),
        "slots": list(t.slots),
        "intent": t.intent,
        "acts": [{"action": a.action, "slot": a.slot} for a in t.acts],
        "prev_transcripts": [list(p) for p in t.prev_transcripts],
        "frame_seed": int(t.frame_seed),
        "frames_inline": t.inline_frames is not None,
    }
    if t.inline_frames is not None:
        rec["frames"] = np.asarray(t.inline_frames).tolist()
    if t.kind is not None:
        rec["kind"] = t.kind
    return rec


def dialogue_to_record(d: Dialogue) -> dict:
    sigma = d.turns[0].noise_sigma if d.turns else 0.0
    return {"dialogue_id": d.dialogue_id, "noise_sigma": sigma, "turns": [turn_to_record(t) for t in d.turns]}


def dumps_dialogue(d: Dialogue) -> str:
    return json.dumps(dialogue_to_record(d), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def record_to_dialogue(rec: dict) -> Dialogue:
    sigma = float(rec.get("noise_sigma", 0.05))
    turns = []
    for tr in rec["turns"]:
        frames = None
        if tr.get("frames_inline"):
            frames = np.asarray(tr["frames"], dtype=np.float64)
        turns.append(
            Turn(
                tokens=[str(w) for w in tr["tokens"]],
                slots=[str(s) for s in tr["slots"]],
                intent=str(tr["intent"]),
                acts=[DialogueAct(str(a["action"]), str(a["slot"])) for a in tr["acts"]],
                prev_transcripts=[[str(w) for w in p] for p in tr["prev_transcripts"]],
                frame_seed=int(tr["frame_seed"]),
                noise_sigma=sigma,
                inline_frames=frames,
                kind=tr.get("kind"),
            )
        )
    return Dialogue(str(rec["dialogue_id"]), turns)


def validate_dialogue(d: Dialogue):
    for k, t in enumerate(d.turns):
        if len(t.slots) != len(t.tokens):
            raise ValidationError(f"turn {k}: {len(t.tokens)} tokens but {len(t.slots)} slots", d.dialogue_id)
        if len(t.acts) != k or len(t.prev_transcripts) != k:
            raise ValidationError(
                f"turn {k}: expected {k} acts and previous transcripts, "
                f"got {len(t.acts)} and {len(t.prev_transcripts)}",
                d.dialogue_id,
            )
        for j in range(k):
            if t.prev_transcripts[j] != d.turns[j].tokens:
                raise ValidationError(f"turn {k}: previous transcript {j} disagrees with turn {j}", d.dialogue_id)
        if k and t.acts[: k - 1] != d.turns[k - 1].acts:
            raise ValidationError(f"turn {k}: dialogue acts are not an extension of turn {k - 1}", d.dialogue_id)
        if t.inline_frames is not None and (t.inline_frames.ndim != 2 or t.inline_frames.shape[1] != 192):
            raise ValidationError(f"turn {k}: inline frames must be n x 192", d.dialogue_id)


def load_dataset(path) -> list[Dialogue]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                d = record_to_dialogue(rec)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"malformed dialogue record ({e})", lineno) from None
            validate_dialogue(d)
            out.append(d)
    return out


def save_dataset(path, dialogues) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(dumps_dialogue(d) + "\n")


def iter_turns(dialogues):
    for d in dialogues:
        for k, t in enumerate(d.turns):
            yield d, k, t
