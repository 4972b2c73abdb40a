import numpy as np
import pytest

from ctxslu.data import dumps_dialogue, validate_dialogue
from ctxslu.errors import ConfigError
from ctxslu.synth import (
    NUMERIC_CUES,
    REQUEST,
    GeneratorConfig,
    Grammar,
    corpus_stats,
    generate_synthetic_corpus,
    split_corpus,
)


def test_default_template_scale():
    cfg = GeneratorConfig()
    assert len(cfg.intents) == 3 and len(cfg.slot_types) == 12 and len(cfg.action_types) == 21


@pytest.mark.parametrize("rate", [-0.1, 1.5])
def test_invalid_ambiguity_rate(rate):
    with pytest.raises(ConfigError):
        generate_synthetic_corpus(GeneratorConfig(ambiguity_rate=rate, n_dialogues=3))


def test_invalid_configs():
    for kw in ({"ambiguity_rate": 0.7, "misleading_rate": 0.5}, {"turns_min": 3, "turns_max": 2},
               {"action_types": ["INFORM"]}, {"split": (0.5, 0.5, 0.5)}, {"noise_sigma": -1.0}):
        with pytest.raises(ConfigError):
            GeneratorConfig(**kw).validate()
    with pytest.raises(ConfigError):
        GeneratorConfig.from_dict({"bogus": 1})


def test_seeded_corpus_is_byte_identical():
    a = generate_synthetic_corpus(GeneratorConfig(n_dialogues=30, seed=5))
    b = generate_synthetic_corpus(GeneratorConfig(n_dialogues=30, seed=5))
    c = generate_synthetic_corpus(GeneratorConfig(n_dialogues=30, seed=6))
    assert [dumps_dialogue(d) for d in a] == [dumps_dialogue(d) for d in b]
    assert [dumps_dialogue(d) for d in a] != [dumps_dialogue(d) for d in c]


def test_dialogues_are_valid_and_sorted():
    ds = generate_synthetic_corpus(GeneratorConfig(n_dialogues=50, seed=2, misleading_rate=0.2))
    assert [d.dialogue_id for d in ds] == sorted(d.dialogue_id for d in ds)
    for d in ds:
        assert 1 <= len(d.turns) <= 4
        validate_dialogue(d)


def test_ambiguity_zero_is_self_contained():
    cfg = GeneratorConfig(n_dialogues=200, ambiguity_rate=0.0)
    g = Grammar(cfg)
    for d in generate_synthetic_corpus(cfg):
        for t in d.turns:
            assert g.interpretations(t.tokens) == {(t.intent, tuple(t.slots))}


def test_ambiguous_fraction_counting():
    cfg = GeneratorConfig(n_dialogues=700, ambiguity_rate=0.5, seed=11)
    ds = generate_synthetic_corpus(cfg)
    stats = corpus_stats(ds)
    assert stats["follow_up_turns"] >= 1000
    recount = sum(t.kind == "ambiguous" for d in ds for t in d.turns[1:])
    assert recount == round(0.5 * stats["follow_up_turns"])
    assert abs(stats["ambiguous_fraction"] - 0.5) <= 0.03


def test_ambiguous_turns_need_context():
    cfg = GeneratorConfig(n_dialogues=150, ambiguity_rate=0.6, seed=4)
    g = Grammar(cfg)
    seen = 0
    for d in generate_synthetic_corpus(cfg):
        for k, t in enumerate(d.turns):
            if t.kind != "ambiguous":
                continue
            seen += 1
            last = t.acts[-1]
            assert last.action == REQUEST and last.slot in NUMERIC_CUES
            alone = g.interpretations(t.tokens)
            assert len(alone) >= 2
            assert g.interpretations(t.tokens, last, use_context=True) == {(t.intent, tuple(t.slots))}
    assert seen > 50


def test_misleading_turns_contradict_previous_act():
    cfg = GeneratorConfig(n_dialogues=150, ambiguity_rate=0.2, misleading_rate=0.3, seed=8)
    g = Grammar(cfg)
    seen = 0
    for d in generate_synthetic_corpus(cfg):
        for t in d.turns:
            if t.kind == "misleading":
                seen += 1
                last = t.acts[-1]
                assert last.action == REQUEST and g.owner[last.slot] != t.intent
                assert g.interpretations(t.tokens) == {(t.intent, tuple(t.slots))}
    assert seen > 30


def test_custom_intent_and_slots_fall_back():
    cfg = GeneratorConfig(intents=["PlayMusic", "ShopItem"], slot_types=["Artist", "Item", "Quantity", "Time"],
                          n_dialogues=40)
    ds = generate_synthetic_corpus(cfg)
    assert {t.intent for d in ds for t in d.turns} <= {"PlayMusic", "ShopItem"}


def test_split_is_80_10_10_within_one_dialogue():
    ds = generate_synthetic_corpus(GeneratorConfig(n_dialogues=123, seed=1))
    tr, dv, te = split_corpus(ds, (0.8, 0.1, 0.1), seed=1)
    assert len(tr) + len(dv) + len(te) == 123
    for part, frac in ((tr, 0.8), (dv, 0.1), (te, 0.1)):
        assert abs(len(part) - frac * 123) <= 1
    ids = [d.dialogue_id for p in (tr, dv, te) for d in p]
    assert len(set(ids)) == 123


def test_config_yaml_round_trip(tmp_path):
    import yaml

    cfg = GeneratorConfig(ambiguity_rate=0.25, seed=9)
    p = tmp_path / "g.yaml"
    p.write_text(yaml.safe_dump(cfg.to_dict()))
    assert GeneratorConfig.load(p) == cfg


def test_noise_sigma_propagates():
    ds = generate_synthetic_corpus(GeneratorConfig(n_dialogues=3, noise_sigma=0.0))
    t = ds[0].turns[0]
    f = t.frames
    assert np.allclose(np.linalg.norm(f, axis=1), 1.0)
