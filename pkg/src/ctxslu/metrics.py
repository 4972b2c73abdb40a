"""WER, ICER, SemER and relative error reductions.

Slot errors (default ``set`` matching), per utterance::

    misses        = reference (word, slot) pairs absent from the hypothesis
    false alarms  = hypothesis slot-bearing words absent from the reference's
                    slot-bearing words

both as multisets, so tagging the right word with the wrong slot is one
error.  ``positional`` matching compares position by position instead.
Words tagged ``O`` carry no slot.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field

from .data import OTHER_SLOT
from .errors import ContractError


class UndefinedRateError(ZeroDivisionError):
    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = counts


def edit_counts(ref, hyp) -> tuple[int, int, int]:
    """(substitutions, insertions, deletions) of a minimum unit-cost alignment.

    Among optimal alignments the backtrace prefers substitution, then
    insertion, then deletion.
    """
    n, m = len(ref), len(hyp)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        D[i][0] = i
    for j in range(m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            D[i][j] = min(sub, D[i][j - 1] + 1, D[i - 1][j] + 1)
    S = I = Dl = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            S += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and D[i][j] == D[i][j - 1] + 1:
            I += 1
            j -= 1
        else:
            Dl += 1
            i -= 1
    return S, I, Dl


def wer(ref_words, hyp_words):
    """(rate, S, I, D); raises :class:`UndefinedRateError` for an empty reference."""
    S, I, D = edit_counts(list(ref_words), list(hyp_words))
    if not ref_words:
        raise UndefinedRateError("WER undefined for an empty reference", (S, I, D))
    return (S + I + D) / len(ref_words), S, I, D


def icer(ref_intents, hyp_intents) -> float:
    if len(ref_intents) != len(hyp_intents):
        raise ContractError(f"{len(ref_intents)} reference intents vs {len(hyp_intents)} hypotheses")
    if not ref_intents:
        raise UndefinedRateError("ICER undefined without utterances")
    return sum(r != h for r, h in zip(ref_intents, hyp_intents)) / len(ref_intents)


def slot_errors(ref_words, ref_slots, hyp_words, hyp_slots, matching: str = "set") -> int:
    if matching == "set":
        R = Counter((w, s) for w, s in zip(ref_words, ref_slots) if s != OTHER_SLOT)
        H = Counter((w, s) for w, s in zip(hyp_words, hyp_slots) if s != OTHER_SLOT)
        Rw = Counter(w for w, _ in R.elements())
        Hw = Counter(w for w, _ in H.elements())
        return sum((R - H).values()) + sum((Hw - Rw).values())
    if matching == "positional":
        err = 0
        for i in range(max(len(ref_words), len(hyp_words))):
            r = (ref_words[i], ref_slots[i]) if i < len(ref_words) else None
            h = (hyp_words[i], hyp_slots[i]) if i < len(hyp_words) else None
            if r is not None and r[1] != OTHER_SLOT and r != h:
                err += 1
            if h is not None and h[1] != OTHER_SLOT and (r is None or r[1] == OTHER_SLOT or r[0] != h[0]):
                err += 1
        return err
    raise ValueError(f"unknown slot matching {matching!r}")


@dataclass
class Utterance:
    """One scored turn; ``turn`` is the 1-based position in its dialogue."""

    ref_words: list
    ref_slots: list
    ref_intent: str
    hyp_words: list
    hyp_slots: list
    hyp_intent: str | None
    turn: int = 1
    dialogue_id: str = ""


def semer(utterances, matching: str = "set") -> float:
    errs = ref = 0
    for u in utterances:
        errs += slot_errors(u.ref_words, u.ref_slots, u.hyp_words, u.hyp_slots, matching)
        errs += u.ref_intent != u.hyp_intent
        ref += sum(s != OTHER_SLOT for s in u.ref_slots) + 1
    if ref == 0:
        raise UndefinedRateError("SemER undefined without references")
    return errs / ref


def relative_reduction(baseline_rate: float, new_rate: float) -> float:
    """(baseline - new) / baseline."""
    if baseline_rate <= 0:
        raise UndefinedRateError("relative reduction undefined for a zero baseline")
    return 1.0 - new_rate / baseline_rate


@dataclass
class MetricsReport:
    utterances: int = 0
    ref_words: int = 0
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    intent_errors: int = 0
    slot_errors: int = 0
    ref_slots: int = 0
    slot_matching: str = "set"
    slices: dict = field(default_factory=dict)
    baseline: str | None = None
    reductions: dict = field(default_factory=dict)

    @property
    def wer(self) -> float:
        return (self.substitutions + self.insertions + self.deletions) / self.ref_words if self.ref_words else 0.0

    @property
    def icer(self) -> float:
        return self.intent_errors / self.utterances if self.utterances else 0.0

    @property
    def semer(self) -> float:
        denom = self.ref_slots + self.utterances
        return (self.slot_errors + self.intent_errors) / denom if denom else 0.0

    def rates(self) -> dict:
        return {"wer": self.wer, "icer": self.icer, "semer": self.semer}

    def add(self, u: Utterance):
        S, I, D = edit_counts(list(u.ref_words), list(u.hyp_words))
        self.utterances += 1
        self.ref_words += len(u.ref_words)
        self.substitutions += S
        self.insertions += I
        self.deletions += D
        self.intent_errors += u.ref_intent != u.hyp_intent
        self.slot_errors += slot_errors(u.ref_words, u.ref_slots, u.hyp_words, u.hyp_slots, self.slot_matching)
        self.ref_slots += sum(s != OTHER_SLOT for s in u.ref_slots)

    def compare_to(self, baseline: "MetricsReport", name: str = "baseline"):
        self.baseline = name
        self.reductions = {}
        for key, mine in self.rates().items():
            theirs = baseline.rates()[key]
            self.reductions[key + "r"] = relative_reduction(theirs, mine) if theirs > 0 else None
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slices"] = {k: v.to_dict() if isinstance(v, MetricsReport) else v for k, v in self.slices.items()}
        d.update(self.rates())
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        keys = {f for f in cls.__dataclass_fields__}
        r = cls(**{k: v for k, v in d.items() if k in keys and k != "slices"})
        r.slices = {k: cls.from_dict(v) for k, v in d.get("slices", {}).items()}
        return r


def slice_name(turn: int) -> str:
    return "1-turn" if turn == 1 else "2-turn" if turn == 2 else "3-turn" if turn == 3 else "4+-turn"


def score(utterances, matching: str = "set") -> MetricsReport:
    """Corpus report plus slices by turn position (1, 2, 3, 4+)."""
    report = MetricsReport(slot_matching=matching)
    slices: dict[str, MetricsReport] = {}
    for u in utterances:
        report.add(u)
        slices.setdefault(slice_name(u.turn), MetricsReport(slot_matching=matching)).add(u)
    report.slices = dict(sorted(slices.items()))
    return report


# ----------------------------------------------------------------------------
# hypotheses dump


def utterance_to_record(u: Utterance) -> dict:
    return {
        "dialogue_id": u.dialogue_id,
        "turn": u.turn,
        "hyp_tokens": list(u.hyp_words),
        "hyp_intent": u.hyp_intent,
        "hyp_slots": list(u.hyp_slots),
        "ref_tokens": list(u.ref_words),
        "ref_intent": u.ref_intent,
        "ref_slots": list(u.ref_slots),
    }


def write_hypotheses(path, utterances):
    with open(path, "w", encoding="utf-8") as fh:
        for u in utterances:
            fh.write(json.dumps(utterance_to_record(u), sort_keys=True) + "\n")


def read_hypotheses(path) -> list[Utterance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            out.append(
                Utterance(r["ref_tokens"], r["ref_slots"], r["ref_intent"], r["hyp_tokens"], r["hyp_slots"],
                          r["hyp_intent"], int(r["turn"]), r["dialogue_id"])
            )
    return out


TABLE_COLUMNS = ["config", "WER", "ICER", "SemER", "WERR", "ICERR", "SemERR"]


def write_table(path, rows, extra_columns=()):
    """CSV with one row per configuration; ``rows`` are dicts."""
    cols = TABLE_COLUMNS + [c for c in extra_columns if c not in TABLE_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
