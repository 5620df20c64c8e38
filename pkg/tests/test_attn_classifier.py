import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from maskinfill.attn_classifier import (
    AttentionClassifier, AttentionScorer, NoMaskError, attention_mask_positions, attention_pool, mask_by_attention,
    train_classifier,
)
from maskinfill.corpus import MASK, POSITIVE, LabeledSentence, TokenVocab
from maskinfill.markers import ConfigurationError
from maskinfill.nn import DTYPE, InvalidInput


def test_pool_hand_softmax():
    w, c = attention_pool(torch.tensor([[math.log(3), 0.0]], dtype=DTYPE),
                          torch.tensor([[[4.0], [8.0]]], dtype=DTYPE))
    assert w[0].tolist() == pytest.approx([0.75, 0.25], abs=1e-15)
    assert c.item() == pytest.approx(5.0, abs=1e-12)


def test_pool_single_token():
    w, _ = attention_pool(torch.tensor([[0.3]], dtype=DTYPE), torch.ones(1, 1, 2, dtype=DTYPE))
    assert w.tolist() == [[1.0]]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16), st.lists(st.integers(1, 8), min_size=1, max_size=4))
def test_profiles_are_distributions(seed, lengths):
    torch.manual_seed(seed)
    model = AttentionClassifier(12, d_emb=4, d_hidden=3, d_attn=4)
    with torch.no_grad():
        for p in model.parameters():
            p.mul_(5)
    vocab = TokenVocab([(f"w{i}", 1) for i in range(9)])
    rng = np.random.default_rng(seed)
    sents = [[f"w{rng.integers(9)}" for _ in range(n)] for n in lengths]
    for prof, sent in zip(AttentionScorer(model, vocab, trained=False).profiles(sents), sents):
        assert len(prof.weights) == len(sent)
        assert (prof.weights >= 0).all() and abs(prof.weights.sum() - 1) < 1e-6
        assert abs(prof.probs.sum() - 1) < 1e-6
        assert prof.context.shape == (6,)


def test_empty_sentence_rejected():
    model = AttentionClassifier(5, d_emb=2, d_hidden=2, d_attn=2)
    with pytest.raises(InvalidInput):
        model(torch.zeros(1, 3, dtype=torch.long), torch.tensor([0]))


def test_mask_positions_above_mean():
    assert attention_mask_positions([0.4, 0.1, 0.3, 0.2]) == [0, 2]


def test_mask_positions_uniform_takes_first_argmax():
    assert attention_mask_positions([0.25] * 4) == [0]


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20).filter(lambda w: sum(w) > 0))
def test_mask_positions_never_all_never_none(w):
    w = np.asarray(w) / np.sum(w)
    pos = attention_mask_positions(w)
    assert 1 <= len(pos) < len(w)
    assert pos == sorted(set(pos))


class FixedWeights(AttentionScorer):
    def __init__(self, weights, trained=True):
        self.weights = np.asarray(weights, dtype=float)
        self.trained = trained

    def classify(self, tokens):
        from maskinfill.attn_classifier import AttentionProfile
        return AttentionProfile(self.weights, np.zeros(2), np.array([0.5, 0.5]))


def test_mask_by_attention_example():
    s = LabeledSentence(("a", "b", "c", "d"), POSITIVE)
    m = mask_by_attention(s, FixedWeights([0.4, 0.1, 0.3, 0.2]))
    assert m.tokens == (MASK, "b", MASK, "d")
    assert m.method == "attention"


def test_mask_by_attention_single_token():
    with pytest.raises(NoMaskError):
        mask_by_attention(LabeledSentence(("ok",), POSITIVE), FixedWeights([1.0]))


def test_mask_by_attention_untrained():
    with pytest.raises(ConfigurationError):
        mask_by_attention(LabeledSentence(("a", "b"), POSITIVE), FixedWeights([0.6, 0.4], trained=False))


def test_trained_mask_content_nonempty(splits, scorer):
    for s in splits["test"][:100]:
        m = mask_by_attention(s, scorer)
        assert 1 <= len(m.mask_positions) < len(s)


def test_single_attribute_rejected(splits, vocab):
    pos = [s for s in splits["train"] if s.attribute == POSITIVE]
    with pytest.raises(ConfigurationError):
        train_classifier(pos, vocab, epochs=1)


def test_training_accuracy_and_determinism(splits, vocab):
    a, acc = train_classifier(splits["train"], vocab, splits["dev"], epochs=10, seed=4,
                              d_emb=16, d_hidden=8, d_attn=16, dropout=0.3)
    b, _ = train_classifier(splits["train"], vocab, splits["dev"], epochs=10, seed=4,
                            d_emb=16, d_hidden=8, d_attn=16, dropout=0.3)
    assert acc >= 0.95
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_internal_holdout(splits, vocab):
    _, acc = train_classifier(splits["train"][:200], vocab, epochs=1, seed=0, d_emb=8, d_hidden=4, d_attn=4)
    assert 0.0 <= acc <= 1.0
