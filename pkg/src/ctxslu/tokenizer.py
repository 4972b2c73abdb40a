"""Wordpiece vocabulary and subword slot bookkeeping.

The vocabulary is grown by greedy pair-frequency merges (BPE style) over a
word-frequency table; segmentation is greedy longest-match with ``##``
continuation pieces.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from .errors import ContractError

PAD, UNK, CLS, SEP = "<pad>", "<unk>", "[CLS]", "[SEP]"
SPECIALS = [PAD, UNK, CLS, SEP]


@dataclass
class Vocab:
    pieces: list[str]

    def __post_init__(self):
        if self.pieces[: len(SPECIALS)] != SPECIALS:
            raise ContractError(f"vocab must start with {SPECIALS}")
        self.index = {p: i for i, p in enumerate(self.pieces)}
        if len(self.index) != len(self.pieces):
            raise ContractError("duplicate pieces in vocab")
        self.max_len = max(len(p) for p in self.pieces)

    def __len__(self):
        return len(self.pieces)

    @property
    def pad_id(self):
        return 0

    @property
    def unk_id(self):
        return 1

    @property
    def cls_id(self):
        return 2

    @property
    def sep_id(self):
        return 3

    @property
    def blank_id(self):
        """Transducer blank sits just past the last real piece."""
        return len(self.pieces)

    def to_json(self) -> str:
        return json.dumps(self.pieces)

    @classmethod
    def from_json(cls, s: str) -> "Vocab":
        return cls(json.loads(s))

    # segmentation

    def segment_word(self, word: str) -> list[int]:
        ids = []
        start = 0
        while start < len(word):
            end = min(len(word), start + self.max_len)
            found = None
            while end > start:
                piece = word[start:end] if start == 0 else "##" + word[start:end]
                if piece in self.index:
                    found = self.index[piece]
                    break
                end -= 1
            if found is None:
                ids.append(self.unk_id)
                start += 1
            else:
                ids.append(found)
                start = end
        return ids

    def encode_words(self, words) -> tuple[list[int], list[int]]:
        """Piece ids plus the number of pieces per word."""
        ids, counts = [], []
        for w in words:
            seg = self.segment_word(w)
            ids.extend(seg)
            counts.append(len(seg))
        return ids, counts

    def decode_words(self, ids) -> list[str]:
        """Join ``##`` continuations; blank and specials other than unk are dropped."""
        words: list[str] = []
        for i in ids:
            if i >= len(self.pieces) or self.pieces[i] in (PAD, CLS, SEP):
                continue
            p = self.pieces[i]
            if p.startswith("##") and words:
                words[-1] += p[2:]
            else:
                words.append(p[2:] if p.startswith("##") else p)
        return words

    def word_segmentation(self, ids) -> list[int]:
        """Pieces per decoded word, aligned with :meth:`decode_words`."""
        counts: list[int] = []
        for i in ids:
            if i >= len(self.pieces) or self.pieces[i] in (PAD, CLS, SEP):
                continue
            if self.pieces[i].startswith("##") and counts:
                counts[-1] += 1
            else:
                counts.append(1)
        return counts

    def has_unknown(self, words) -> bool:
        return any(self.unk_id in self.segment_word(w) for w in words)


def normalize(text: str) -> str:
    return " ".join(text.split())


def tokenize(text: str, vocab: Vocab) -> list[int]:
    return vocab.encode_words(text.split())[0]


def detokenize(ids, vocab: Vocab) -> str:
    return " ".join(vocab.decode_words(ids))


def build_vocab(word_counts, size: int = 150) -> Vocab:
    """Greedy pair merges until ``size`` pieces (specials included) or no pairs."""
    counts = Counter(word_counts) if not isinstance(word_counts, Counter) else word_counts
    words = {w: [w[0]] + ["##" + c for c in w[1:]] for w in counts}
    pieces = list(SPECIALS)
    seen = set(pieces)
    for syms in words.values():
        for s in syms:
            if s not in seen:
                seen.add(s)
                pieces.append(s)
    pieces[len(SPECIALS):] = sorted(pieces[len(SPECIALS):])
    while len(pieces) < size:
        pairs = Counter()
        for w, syms in words.items():
            for a, b in zip(syms, syms[1:]):
                pairs[a, b] += counts[w]
        if not pairs:
            break
        (a, b), _ = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        merged = a + b[2:]
        for w, syms in words.items():
            out, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = out
        if merged not in seen:
            seen.add(merged)
            pieces.append(merged)
    return Vocab(pieces)


# ----------------------------------------------------------------------------
# slot propagation


def propagate_slots_to_subwords(word_slots, segmentation) -> list:
    """Every piece of a word inherits that word's slot."""
    if len(word_slots) != len(segmentation):
        raise ContractError(f"{len(word_slots)} word slots for {len(segmentation)} segmented words")
    out = []
    for slot, n in zip(word_slots, segmentation):
        if n < 1:
            raise ContractError("a word must have at least one piece")
        out.extend([slot] * n)
    return out


def collapse_subword_slots(piece_slots, segmentation) -> list:
    """A word's slot is the slot of its last piece."""
    if sum(segmentation) != len(piece_slots):
        raise ContractError(f"segmentation covers {sum(segmentation)} pieces, got {len(piece_slots)}")
    out, pos = [], 0
    for n in segmentation:
        if n < 1:
            raise ContractError("empty word segmentation")
        pos += n
        out.append(piece_slots[pos - 1])
    return out
