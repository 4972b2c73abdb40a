import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxslu.data import (
    Dialogue,
    DialogueAct,
    LabelSet,
    Turn,
    dumps_dialogue,
    load_dataset,
    save_dataset,
    validate_dialogue,
)
from ctxslu.errors import ContractError, ParseError, ValidationError
from ctxslu.featurize import FRAME_DIM, featurize, signature


def one_turn(tokens=("order", "five", "apples"), slots=("O", "Quantity", "Item")):
    return Turn(list(tokens), list(slots), "ShopItem", frame_seed=11)


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))


def test_empty_file_is_empty_dataset(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert load_dataset(p) == []


def test_single_turn_dialogue_parses(tmp_path):
    p = tmp_path / "one.jsonl"
    save_dataset(p, [Dialogue("d0", [one_turn()])])
    (d,) = load_dataset(p)
    assert len(d.turns[0].slots) == 3 and d.turns[0].tokens == ["order", "five", "apples"]


def test_missing_previous_transcript_is_rejected(tmp_path):
    t1 = one_turn()
    t2 = Turn(["five"], ["Quantity"], "ShopItem", acts=[DialogueAct("REQUEST", "Quantity")], prev_transcripts=[])
    p = tmp_path / "bad.jsonl"
    write_lines(p, [dumps_dialogue(Dialogue("d7", [t1, t2]))])
    with pytest.raises(ValidationError, match="d7"):
        load_dataset(p)


def test_wrong_previous_transcript_is_rejected():
    t2 = Turn(["five"], ["Quantity"], "ShopItem", acts=[DialogueAct("REQUEST", "Quantity")],
              prev_transcripts=[["order", "apples"]])
    with pytest.raises(ValidationError):
        validate_dialogue(Dialogue("d1", [one_turn(), t2]))


def test_slot_count_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        validate_dialogue(Dialogue("d1", [one_turn(slots=("O", "Item"))]))


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "m.jsonl"
    write_lines(p, [dumps_dialogue(Dialogue("d0", [one_turn()])), "{not json"])
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(p)


def test_missing_field_is_parse_error(tmp_path):
    p = tmp_path / "m.jsonl"
    rec = json.loads(dumps_dialogue(Dialogue("d0", [one_turn()])))
    del rec["turns"][0]["intent"]
    write_lines(p, [json.dumps(rec)])
    with pytest.raises(ParseError, match="line 1"):
        load_dataset(p)


def test_round_trip_is_byte_identical(tmp_path, corpus):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(a, corpus)
    save_dataset(b, load_dataset(a))
    assert a.read_bytes() == b.read_bytes()


def test_inline_frames_round_trip(tmp_path):
    t = one_turn()
    t.inline_frames = featurize(t.tokens, 5)
    p = tmp_path / "f.jsonl"
    save_dataset(p, [Dialogue("d0", [t])])
    back = load_dataset(p)[0].turns[0]
    assert np.array_equal(back.frames, t.inline_frames)


def test_frames_regenerate_from_seed():
    t = one_turn()
    assert np.array_equal(t.frames, featurize(t.tokens, t.frame_seed, t.noise_sigma))


def test_label_set_reserves_index_zero():
    lab = LabelSet(["B", "A"], ["Item", "O"], ["REQUEST"])
    assert lab.slots[0] == "O" and lab.actions[0] == "<pad>"
    assert lab.slot_id["Item"] == 1 and lab.intent_id["A"] == 1
    assert LabelSet.from_dict(lab.to_dict()).slots == lab.slots


# -- featurizer -----------------------------------------------------------------


def test_featurize_noiseless_single_token():
    f = featurize(["apples"], 0, sigma=0.0, expansion=2)
    assert f.shape == (2, FRAME_DIM)
    assert np.array_equal(f[0], signature("apples")) and np.array_equal(f[1], signature("apples"))
    assert np.isclose(np.linalg.norm(signature("apples")), 1.0)


def test_featurize_deterministic():
    assert np.array_equal(featurize(["a", "b"], 9), featurize(["a", "b"], 9))
    assert not np.array_equal(featurize(["a", "b"], 9), featurize(["a", "b"], 10))


def test_featurize_empty():
    with pytest.raises(ContractError):
        featurize([], 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["one", "two", "apples", "for"]), min_size=1, max_size=8), st.integers(0, 10**6))
def test_frames_grow_with_tokens(tokens, seed):
    n = featurize(tokens, seed).shape[0]
    assert 2 * len(tokens) <= n <= 4 * len(tokens)
    assert featurize(tokens + ["one"], seed).shape[0] >= 2 * (len(tokens) + 1)


def test_frame_count_monotone_over_random_utterances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        toks = [str(w) for w in rng.choice(["a", "b", "c"], size=k)]
        n = featurize(toks, int(rng.integers(10**6))).shape[0]
        assert 2 * k <= n <= 4 * k
