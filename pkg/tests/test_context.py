import json

import numpy as np
import pytest

from ctxslu import tensor as T
from ctxslu.context import (
    ContextEncoder,
    DialogueActEmbedder,
    FileUtteranceEmbedder,
    UtteranceEmbedder,
    default_embedder,
    encode_acts,
    encode_prev_utterances,
)
from ctxslu.nn import ParamStore
from ctxslu.tensor import Tensor


def act_embedder(n_actions=6, n_slots=5, d=4, l_a=5, seed=0):
    return DialogueActEmbedder(ParamStore(seed), n_actions, n_slots, d, l_a)


def test_fusion_example():
    emb = DialogueActEmbedder(ParamStore(), 3, 3, 2, 1)
    emb.W_g.data = np.eye(2)
    emb.M_A.data[1] = [1.0, -2.0]
    emb.M_S.data[2] = [2.0, 1.0]
    G, mask = encode_acts([(1, 2)], emb)
    assert G.data.tolist() == [[3.0, 0.0]]
    assert mask.tolist() == [False]


def test_empty_acts_are_default_pairs():
    emb = act_embedder()
    G, mask = emb.encode([])
    assert G.shape == (5, 4) and mask.all()
    default = np.maximum((emb.M_A.data[0] + emb.M_S.data[0]) @ emb.W_g.data.T, 0)
    assert np.allclose(G.data, np.tile(default, (5, 1)))


def test_truncation_keeps_most_recent():
    emb = act_embedder(n_actions=8, n_slots=8)
    acts = [(k, k) for k in range(1, 8)]
    G, mask = emb.encode(acts)
    G_ref = np.stack([emb.encode([a])[0].data[0] for a in acts[2:]])
    assert np.allclose(G.data, G_ref) and not mask.any()


def test_act_ids_out_of_range():
    emb = act_embedder()
    with pytest.raises(IndexError):
        emb.encode([(6, 0)])
    with pytest.raises(IndexError):
        emb.encode([(0, 5)])


def test_acts_are_nonnegative_and_permute(rng):
    emb = act_embedder(seed=3)
    G, _ = emb.encode([(1, 2), (3, 4), (2, 1)])
    assert (G.data >= 0).all()
    Gp, _ = emb.encode([(3, 4), (1, 2), (2, 1)])
    assert np.array_equal(Gp.data[[1, 0, 2, 3, 4]], G.data)


def utt_embedder(vocab_size=12, d=4, l_b=5, seed=0, zero=False):
    return UtteranceEmbedder(ParamStore(seed), vocab_size, d, l_b, cls_id=2, sep_id=3, zero_attention=zero)


def test_empty_previous_utterances():
    U, mask = encode_prev_utterances([], utt_embedder())
    assert U.shape == (5, 4) and np.all(U.data == 0) and mask.all()


def test_repeated_utterance_gives_identical_rows():
    U, mask = utt_embedder().encode([[5, 6, 7], [5, 6, 7]])
    assert np.array_equal(U.data[0], U.data[1])
    assert mask.tolist() == [False, False, True, True, True]
    assert np.all(U.data[2:] == 0)


def test_keeps_latest_utterances():
    emb = utt_embedder(l_b=2)
    prev = [[4], [5, 6], [7, 8, 9], [10]]
    U, _ = emb.encode(prev)
    assert np.allclose(U.data, emb.embed(prev[2:]).data)


def test_one_vector_per_utterance_independent_of_batch():
    emb = utt_embedder(seed=4)
    both = emb.embed([[4, 5], [6, 7, 8, 9]]).data
    assert np.allclose(both[0], emb.embed([[4, 5]]).data[0], atol=1e-12)
    assert emb.embed([[4]]).shape == (1, 4)


def test_zero_attention_reads_out_cls_embedding():
    emb = utt_embedder(zero=True)
    out = emb.embed([[4, 5, 6]]).data[0]
    assert np.array_equal(out, emb.E.data[2])


def test_invalid_token_id():
    with pytest.raises(IndexError):
        utt_embedder().encode([[12]])


def test_gradient_reaches_token_table(rng):
    store = ParamStore(1)
    emb = UtteranceEmbedder(store, 10, 4, 3, 2, 3)
    U, _ = emb.encode([[4, 5], [6]])
    T.backward((U * Tensor(rng.normal(size=U.shape))).sum())
    assert np.abs(emb.E.grad).sum() > 0
    assert np.abs(emb.Wq.grad).sum() > 0


def test_default_embedder_uses_vocab_specials(vocab):
    emb = default_embedder(ParamStore(), vocab, 8)
    assert emb.cls_id == vocab.cls_id and emb.sep_id == vocab.sep_id and emb.E.shape == (len(vocab), 8)


def test_file_embedder(tmp_path, vocab):
    ids = vocab.encode_words(["order", "apples"])[0]
    p = tmp_path / "emb.json"
    p.write_text(json.dumps({"order apples": [1.0, 2.0, 3.0]}))
    emb = FileUtteranceEmbedder(p, 3, 2, vocab)
    U, mask = emb.encode([ids, vocab.encode_words(["one"])[0]])
    assert U.data.tolist() == [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]
    assert not mask.any()


@pytest.mark.parametrize("sources", ["da", "utt"])
def test_dropped_source_is_zero_and_masked(sources):
    enc = ContextEncoder(act_embedder(), utt_embedder(), sources)
    b = enc([(1, 1), (2, 3)], [[4, 5]])
    dropped, mask = (b.U, b.pad_mask_u) if sources == "da" else (b.G, b.pad_mask_g)
    kept_mask = b.pad_mask_g if sources == "da" else b.pad_mask_u
    assert np.all(dropped.data == 0) and mask.all() and not kept_mask.all()
