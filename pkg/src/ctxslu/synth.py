"""Synthetic multi-turn dialogues where context is causally necessary.

The grammar has three kinds of user utterance:

* full requests (``order five apples``) whose carrier words pin the intent,
* explicit answers to a system ``REQUEST(slot)`` (``five people``, ``fuji``),
* bare numeric answers (``five``) that fit every numeric slot of every intent.

A bare numeric answer is only interpretable through the preceding
``REQUEST(slot)`` act, which is how *ambiguous* turns are built.
*Misleading* turns ignore a ``REQUEST`` and start a new request of another
intent, so trusting the dialogue act would be wrong.  Every generated turn
is checked against :meth:`Grammar.interpretations`, an exhaustive matcher.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .data import OTHER_SLOT, Dialogue, DialogueAct, LabelSet, Turn
from .errors import ConfigError

NUMBERS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]

LEXICON = {
    "Item": ["apples", "bananas", "fuji", "grapes", "lemons", "mangoes"],
    "Brand": ["acme", "zest", "sunny"],
    "Restaurant": ["sakura", "luigis", "bombay", "golden"],
    "Cuisine": ["thai", "italian", "indian", "mexican"],
    "Movie": ["inferno", "titanic", "avatar", "frozen"],
    "Theater": ["regal", "cinemark", "odeon"],
    "Date": ["today", "tomorrow", "monday", "friday"],
    "City": ["boston", "seattle", "austin", "denver"],
}
# numeric slot -> the unit word used by explicit answers
NUMERIC_CUES = {"Quantity": "items", "Time": "oclock", "PartySize": "people", "NumTickets": "tickets"}

OWNERS = {
    "Item": "ShopItem", "Quantity": "ShopItem", "Brand": "ShopItem",
    "Restaurant": "BookTable", "Time": "BookTable", "PartySize": "BookTable", "Cuisine": "BookTable",
    "Movie": "BuyTickets", "Theater": "BuyTickets", "NumTickets": "BuyTickets", "Date": "BuyTickets",
    "City": "BuyTickets",
}

TEMPLATES = {
    "ShopItem": [
        "order {Quantity} {Item}",
        "buy some {Item}",
        "order {Item} from {Brand}",
        "add {Quantity} {Item} to my cart",
    ],
    "BookTable": [
        "book a table at {Restaurant}",
        "reserve a table for {PartySize} people",
        "book {Restaurant} at {Time} oclock",
        "find {Cuisine} food for {PartySize} people",
    ],
    "BuyTickets": [
        "buy tickets for {Movie}",
        "get {NumTickets} tickets for {Movie} {Date}",
        "watch {Movie} at {Theater} in {City}",
    ],
}

REQUEST = "REQUEST"


@dataclass
class GeneratorConfig:
    intents: list[str] = field(default_factory=lambda: ["ShopItem", "BookTable", "BuyTickets"])
    slot_types: list[str] = field(
        default_factory=lambda: [
            "Item", "Quantity", "Brand", "Restaurant", "Time", "PartySize",
            "Cuisine", "Movie", "Theater", "NumTickets", "Date", "City",
        ]
    )
    action_types: list[str] = field(
        default_factory=lambda: [
            "REQUEST", "CONFIRM", "OFFER", "INFORM", "SELECT", "NOTIFY_SUCCESS", "NOTIFY_FAILURE",
            "GOODBYE", "REQ_MORE", "NEGATE", "AFFIRM", "THANK_YOU", "GREETING", "CANT_UNDERSTAND",
            "INFORM_COUNT", "OFFER_INTENT", "REQUEST_ALTS", "CONFIRM_ALT", "REPEAT", "WELCOME", "ACK",
        ]
    )
    ambiguity_rate: float = 0.5
    misleading_rate: float = 0.0
    turns_min: int = 1
    turns_max: int = 4
    noise_sigma: float = 0.05
    seed: int = 0
    n_dialogues: int = 600
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self):
        for key in ("ambiguity_rate", "misleading_rate"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key}={v} outside [0, 1]")
        if self.ambiguity_rate + self.misleading_rate > 1.0 + 1e-12:
            raise ConfigError("ambiguity_rate + misleading_rate exceeds 1")
        if not 1 <= self.turns_min <= self.turns_max:
            raise ConfigError(f"need 1 <= turns_min <= turns_max, got {self.turns_min}, {self.turns_max}")
        if not self.intents or not self.slot_types:
            raise ConfigError("intents and slot_types must be non-empty")
        if REQUEST not in self.action_types:
            raise ConfigError(f"action_types must include {REQUEST}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split must be three fractions summing to 1")

    def to_dict(self):
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown generator keys: {sorted(extra)}")
        d = dict(d)
        if "split" in d:
            d["split"] = tuple(d["split"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})


def _parse_template(text):
    return [("slot", w[1:-1]) if w.startswith("{") else ("word", w) for w in text.split()]


class Grammar:
    """Templates, lexicons and slot ownership derived from a config."""

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        self.intents = list(cfg.intents)
        self.slot_types = list(cfg.slot_types)
        self.owner = {}
        free = [s for s in self.slot_types if OWNERS.get(s) not in self.intents]
        for s in self.slot_types:
            if OWNERS.get(s) in self.intents:
                self.owner[s] = OWNERS[s]
        for i, s in enumerate(free):
            self.owner[s] = self.intents[i % len(self.intents)]
        self.values = {}
        for s in self.slot_types:
            if s in NUMERIC_CUES:
                self.values[s] = NUMBERS
            else:
                self.values[s] = LEXICON.get(s) or [f"{s.lower()}{c}" for c in "abc"]
        self.numeric = [s for s in self.slot_types if s in NUMERIC_CUES]
        self.slots_of = {i: [s for s in self.slot_types if self.owner[s] == i] for i in self.intents}
        self.templates = {}
        for intent in self.intents:
            tpls = []
            for text in TEMPLATES.get(intent, []):
                t = _parse_template(text)
                if all(v in self.slots_of[intent] for k, v in t if k == "slot"):
                    tpls.append(t)
            if not tpls:
                carrier = ("word", intent.lower())
                tpls = [[carrier, ("slot", s)] for s in self.slots_of[intent]] or [[carrier]]
            self.templates[intent] = tpls
        self.answers = []
        for s in self.slot_types:
            self.answers.append((s, [("slot", s)]))
            if s in NUMERIC_CUES:
                self.answers.append((s, [("slot", s), ("word", NUMERIC_CUES[s])]))
        self.actions = [a for a in cfg.action_types]
        self.fillers = [a for a in self.actions if a != REQUEST] or [REQUEST]
        if cfg.ambiguity_rate > 0 and len(self.numeric) < 2:
            raise ConfigError("ambiguous turns need at least two numeric slot types")
        if cfg.misleading_rate > 0 and (len(self.intents) < 2 or not self.numeric):
            raise ConfigError("misleading turns need two intents and a numeric slot type")

    # -- matching -----------------------------------------------------------

    def _match(self, words, tpl):
        if len(words) != len(tpl):
            return None
        slots = []
        for w, (kind, v) in zip(words, tpl):
            if kind == "word":
                if w != v:
                    return None
                slots.append(OTHER_SLOT)
            else:
                if w not in self.values[v]:
                    return None
                slots.append(v)
        return tuple(slots)

    def interpretations(self, words, context: DialogueAct | None = None, use_context: bool = False):
        """All (intent, slots) labelings the grammar licenses for ``words``.

        With ``use_context``, answer forms survive only when the last
        dialogue act is ``REQUEST`` of the answered slot.
        """
        out = set()
        for intent, tpls in self.templates.items():
            for t in tpls:
                m = self._match(words, t)
                if m is not None:
                    out.add((intent, m))
        for s, tpl in self.answers:
            m = self._match(words, tpl)
            if m is None:
                continue
            if use_context and not (context is not None and context.action == REQUEST and context.slot == s):
                continue
            out.add((self.owner[s], m))
        return out

    # -- sampling -----------------------------------------------------------

    def fill(self, tpl, rng):
        words, slots = [], []
        for kind, v in tpl:
            if kind == "word":
                words.append(v)
                slots.append(OTHER_SLOT)
            else:
                words.append(self.values[v][rng.integers(len(self.values[v]))])
                slots.append(v)
        return words, slots

    def labels(self) -> LabelSet:
        return LabelSet(list(self.intents), list(self.slot_types), list(self.actions))


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _follow_up(grammar: Grammar, kind: str, intent: str, rng):
    """Returns (system act preceding the turn, words, slots, gold intent)."""
    g = grammar
    if kind == "ambiguous":
        own = [s for s in g.numeric if g.owner[s] == intent]
        s = _pick(rng, own or g.numeric)
        act = DialogueAct(REQUEST, s)
        w = _pick(rng, g.values[s])
        return act, [w], [s], g.owner[s]
    if kind == "misleading":
        own = [s for s in g.numeric if g.owner[s] == intent]
        s = _pick(rng, own or g.numeric)
        act = DialogueAct(REQUEST, s)
        others = [i for i in g.intents if i != g.owner[s]]
        new = _pick(rng, others)
        tpls = g.templates[new]
        numeric_tpls = [t for t in tpls if any(k == "slot" and v in NUMERIC_CUES for k, v in t)]
        words, slots = g.fill(_pick(rng, numeric_tpls or tpls), rng)
        return act, words, slots, new
    # normal: explicit answer to a request, or a fresh self-contained request
    if g.slots_of[intent] and rng.random() < 0.5:
        s = _pick(rng, g.slots_of[intent])
        act = DialogueAct(REQUEST, s)
        forms = [tpl for slot, tpl in g.answers if slot == s]
        words, slots = g.fill(forms[-1], rng)
        return act, words, slots, intent
    slot = _pick(rng, g.slots_of[intent] or g.slot_types)
    act = DialogueAct(_pick(rng, g.fillers), slot)
    new = _pick(rng, g.intents)
    words, slots = g.fill(_pick(rng, g.templates[new]), rng)
    return act, words, slots, new


def generate_synthetic_corpus(cfg: GeneratorConfig, seed: int | None = None) -> list[Dialogue]:
    """Dialogues of ``turns_min``..``turns_max`` turns, sorted by id.

    Follow-up turns (index >= 2) are assigned corpus-wide by a seeded
    permutation so the ambiguous and misleading fractions are exact up to
    rounding.
    """
    cfg.validate()
    g = Grammar(cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lengths = rng.integers(cfg.turns_min, cfg.turns_max + 1, size=cfg.n_dialogues)
    n_follow = int(sum(lengths) - len(lengths))
    n_amb = int(round(cfg.ambiguity_rate * n_follow))
    n_mis = min(int(round(cfg.misleading_rate * n_follow)), n_follow - n_amb)
    kinds = ["ambiguous"] * n_amb + ["misleading"] * n_mis + ["normal"] * (n_follow - n_amb - n_mis)
    kinds = [kinds[i] for i in rng.permutation(n_follow)]
    cursor = 0
    dialogues = []
    for di, n_turns in enumerate(lengths):
        intent = _pick(rng, g.intents)
        words, slots = g.fill(_pick(rng, g.templates[intent]), rng)
        raw = [(words, slots, intent, "first")]
        acts: list[DialogueAct] = []
        for _ in range(int(n_turns) - 1):
            kind = kinds[cursor]
            cursor += 1
            act, words, slots, intent = _follow_up(g, kind, intent, rng)
            acts.append(act)
            raw.append((words, slots, intent, kind))
        turns = []
        for k, (words, slots, gold, kind) in enumerate(raw):
            _check_turn(g, words, slots, gold, kind, acts[k - 1] if k else None)
            turns.append(
                Turn(
                    tokens=words,
                    slots=slots,
                    intent=gold,
                    acts=list(acts[:k]),
                    prev_transcripts=[list(r[0]) for r in raw[:k]],
                    frame_seed=int(rng.integers(2**31 - 1)),
                    noise_sigma=cfg.noise_sigma,
                    kind=kind,
                )
            )
        dialogues.append(Dialogue(f"d{di:05d}", turns))
    return sorted(dialogues, key=lambda d: d.dialogue_id)


def _check_turn(g: Grammar, words, slots, gold, kind, last_act):
    alone = g.interpretations(words)
    with_ctx = g.interpretations(words, last_act, use_context=True)
    target = (gold, tuple(slots))
    if kind == "ambiguous":
        ok = len(alone) >= 2 and with_ctx == {target}
    else:
        ok = alone == {target}
    if not ok:
        raise AssertionError(f"grammar defect on {kind} turn {words}: alone={alone} ctx={with_ctx}")


def split_corpus(dialogues, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded split by dialogue; each part keeps id order."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dialogues))
    n = len(dialogues)
    n_train = int(round(fractions[0] * n))
    n_dev = int(round(fractions[1] * n))
    parts = (order[:n_train], order[n_train : n_train + n_dev], order[n_train + n_dev :])
    return tuple(sorted((dialogues[i] for i in p), key=lambda d: d.dialogue_id) for p in parts)


def corpus_stats(dialogues) -> dict:
    kinds = {}
    n_turns = 0
    for d in dialogues:
        for t in d.turns:
            n_turns += 1
            kinds[t.kind or "unknown"] = kinds.get(t.kind or "unknown", 0) + 1
    follow = n_turns - len(dialogues)
    return {
        "dialogues": len(dialogues),
        "turns": n_turns,
        "follow_up_turns": follow,
        "kinds": dict(sorted(kinds.items())),
        "ambiguous_fraction": kinds.get("ambiguous", 0) / follow if follow else 0.0,
        "misleading_fraction": kinds.get("misleading", 0) / follow if follow else 0.0,
    }
