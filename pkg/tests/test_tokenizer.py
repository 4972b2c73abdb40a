from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxslu.errors import ContractError
from ctxslu.tokenizer import (
    Vocab,
    build_vocab,
    collapse_subword_slots,
    detokenize,
    normalize,
    propagate_slots_to_subwords,
    tokenize,
)


@pytest.fixture(scope="module")
def small_vocab():
    return build_vocab(Counter({"order": 5, "apples": 3, "fuji": 1}), size=40)


def test_specials_and_blank(small_vocab):
    assert small_vocab.pieces[:4] == ["<pad>", "<unk>", "[CLS]", "[SEP]"]
    assert small_vocab.blank_id == len(small_vocab)
    assert len(set(small_vocab.pieces)) == len(small_vocab)


def test_empty_string(small_vocab):
    assert tokenize("", small_vocab) == []


def test_repeated_word(small_vocab):
    ids = tokenize("order order", small_vocab)
    assert ids == [small_vocab.index["order"]] * 2


def test_unknown_character_maps_to_unk(small_vocab):
    ids = tokenize("zq", small_vocab)
    assert small_vocab.unk_id in ids


def test_greedy_longest_match():
    v = Vocab(["<pad>", "<unk>", "[CLS]", "[SEP]", "f", "fu", "##j", "##ji", "##i", "##u"])
    assert [v.pieces[i] for i in v.segment_word("fuji")] == ["fu", "##ji"]


def test_build_vocab_is_deterministic():
    c = Counter({"apples": 2, "bananas": 2, "order": 1})
    assert build_vocab(c, 30).pieces == build_vocab(Counter(dict(reversed(list(c.items())))), 30).pieces


def test_json_round_trip(small_vocab):
    assert Vocab.from_json(small_vocab.to_json()).pieces == small_vocab.pieces


def test_corpus_round_trip(corpus):
    words = Counter(w for d in corpus for t in d.turns for w in t.tokens)
    for size in (60, 120, 256):
        v = build_vocab(words, size)
        for d in corpus:
            for t in d.turns:
                s = "  ".join(t.tokens) + " "
                assert detokenize(tokenize(s, v), v) == normalize(s)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(alphabet="abcdefgh", min_size=1, max_size=9), min_size=1, max_size=6))
def test_round_trip_any_words(words):
    v = build_vocab(Counter(words), 30)
    text = " ".join(words)
    assert detokenize(tokenize(text, v), v) == normalize(text)


def test_propagate_examples():
    assert propagate_slots_to_subwords(["Item"], [2]) == ["Item", "Item"]
    assert propagate_slots_to_subwords(["O"], [1]) == ["O"]
    out = propagate_slots_to_subwords(["O", "Quantity", "Item"], [1, 1, 3])
    assert len(out) == 5


def test_propagate_length_mismatch():
    with pytest.raises(ContractError):
        propagate_slots_to_subwords(["O", "Item"], [1])


def test_collapse_takes_last_piece():
    assert collapse_subword_slots(["O", "Item"], [2]) == ["Item"]
    assert collapse_subword_slots(["Item"], [1]) == ["Item"]


def test_collapse_rejects_empty_word():
    with pytest.raises(ContractError):
        collapse_subword_slots(["O"], [1, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["O", "Item", "Time"]), st.integers(1, 4)), max_size=8))
def test_collapse_inverts_propagate(pairs):
    slots = [s for s, _ in pairs]
    seg = [n for _, n in pairs]
    pieces = propagate_slots_to_subwords(slots, seg)
    assert len(pieces) == sum(seg)
    assert collapse_subword_slots(pieces, seg) == slots
