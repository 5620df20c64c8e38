"""Bidirectional LSTM classifier with additive self-attention.

The attention weights double as a masker: tokens weighted above the
sentence mean are treated as attribute markers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import ATTRIBUTES, LabeledSentence, TokenVocab
from .markers import ATTENTION, ConfigurationError, MaskedSentence, apply_mask
from .nn import DTYPE, InvalidInput, batches, pad_batch, seeded

log = logging.getLogger(__name__)


class NoMaskError(ValueError):
    """Attention masking cannot mask anything without emptying the content."""


def attention_pool(scores: torch.Tensor, hidden: torch.Tensor, pad_mask: torch.Tensor | None = None):
    """Softmax ``scores (B, L)`` into weights and pool ``hidden (B, L, D)`` into a context vector."""
    if pad_mask is not None:
        scores = scores.masked_fill(pad_mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights, torch.bmm(weights.unsqueeze(1), hidden).squeeze(1)


class AttentionClassifier(nn.Module):
    def __init__(self, vocab_size: int, d_emb: int = 64, d_hidden: int = 64, d_attn: int = 64, n_attributes: int = 2,
                 dropout: float = 0.0):
        super().__init__()
        self.hyper = dict(vocab_size=vocab_size, d_emb=d_emb, d_hidden=d_hidden, d_attn=d_attn,
                          n_attributes=n_attributes, dropout=dropout)
        self.drop = nn.Dropout(dropout)
        self.emb = nn.Embedding(vocab_size, d_emb, dtype=DTYPE)
        nn.init.normal_(self.emb.weight, std=0.1)
        self.lstm = nn.LSTM(d_emb, d_hidden, batch_first=True, bidirectional=True, dtype=DTYPE)
        self.W = nn.Linear(2 * d_hidden, d_attn, bias=False, dtype=DTYPE)
        self.w = nn.Linear(d_attn, 1, bias=False, dtype=DTYPE)
        self.W_out = nn.Linear(2 * d_hidden, n_attributes, bias=False, dtype=DTYPE)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor):
        """Return ``(logits, weights, context)`` for padded ids."""
        if (lengths < 1).any():
            raise InvalidInput("empty sentence")
        L = ids.shape[1]
        packed = pack_padded_sequence(self.drop(self.emb(ids)), lengths, batch_first=True, enforce_sorted=False)
        H, _ = pad_packed_sequence(self.lstm(packed)[0], batch_first=True, total_length=L)
        H = self.drop(H)
        scores = self.w(torch.tanh(self.W(H))).squeeze(-1)
        pad_mask = torch.arange(L)[None, :] >= lengths[:, None]
        weights, context = attention_pool(scores, H, pad_mask)
        return self.W_out(context), weights, context


@dataclass(frozen=True)
class AttentionProfile:
    weights: np.ndarray
    context: np.ndarray
    probs: np.ndarray


class AttentionScorer:
    """A trained classifier bound to its vocabulary."""

    def __init__(self, model: AttentionClassifier, vocab: TokenVocab, trained: bool = True):
        self.model = model
        self.vocab = vocab
        self.trained = trained

    def _run(self, sentences: Sequence[Sequence[str]], batch_size: int = 256):
        self.model.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(sentences), batch_size):
                chunk = [self.vocab.encode(s) for s in sentences[i:i + batch_size]]
                if any(len(c) == 0 for c in chunk):
                    raise InvalidInput("empty sentence")
                ids, lengths, _ = pad_batch(chunk)
                logits, weights, context = self.model(ids, lengths)
                probs = torch.softmax(logits, dim=-1)
                for j, n in enumerate(lengths.tolist()):
                    out.append(AttentionProfile(weights[j, :n].numpy(), context[j].numpy(), probs[j].numpy()))
        return out

    def profiles(self, sentences: Sequence[Sequence[str]]) -> list[AttentionProfile]:
        return self._run(sentences)

    def classify(self, tokens: Sequence[str]) -> AttentionProfile:
        return self._run([tokens])[0]

    def attribute_probs(self, sentences: Sequence[Sequence[str]]) -> np.ndarray:
        if not self.trained:
            raise ConfigurationError("classifier is not trained")
        return np.stack([p.probs for p in self._run(sentences)])

    def accuracy(self, sentences: Sequence[LabeledSentence]) -> float:
        probs = self.attribute_probs([s.tokens for s in sentences])
        gold = np.array([s.attribute for s in sentences])
        return float((probs.argmax(axis=1) == gold).mean())


def train_classifier(train: Sequence[LabeledSentence], vocab: TokenVocab, dev: Sequence[LabeledSentence] | None = None,
                     epochs: int = 10, lr: float = 1e-3, batch_size: int = 32, seed: int = 0,
                     **sizes) -> tuple[AttentionScorer, float]:
    """Cross-entropy training with Adam; returns the scorer and its held-out accuracy.

    Without ``dev`` a deterministic tenth of ``train`` is held out.
    """
    if len({s.attribute for s in train}) < 2:
        raise ConfigurationError("classifier training needs at least two attributes")
    gen = seeded(seed)
    train = list(train)
    if dev is None:
        order = torch.randperm(len(train), generator=gen).tolist()
        n_dev = max(1, len(train) // 10)
        dev = [train[i] for i in order[:n_dev]]
        train = [train[i] for i in order[n_dev:]]
    model = AttentionClassifier(len(vocab), n_attributes=len(ATTRIBUTES), **sizes)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    encoded = [vocab.encode(s.tokens) for s in train]
    labels = torch.tensor([s.attribute for s in train])
    for epoch in range(epochs):
        model.train()
        total = 0.0
        for idx in batches(len(train), batch_size, gen):
            ids, lengths, _ = pad_batch([encoded[i] for i in idx])
            logits, _, _ = model(ids, lengths)
            loss = F.cross_entropy(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        log.info("attention classifier epoch %d loss %.4f", epoch + 1, total / len(train))
    scorer = AttentionScorer(model, vocab)
    acc = scorer.accuracy(dev)
    log.info("attention classifier held-out accuracy %.4f", acc)
    return scorer, acc


def attention_mask_positions(weights: Sequence[float]) -> list[int]:
    """Positions weighted strictly above the mean; the argmax (lowest index on ties) if none are."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise InvalidInput("empty sentence")
    above = np.flatnonzero(w > w.mean()).tolist()
    # every weight above the mean only happens when rounding pushes the mean of equal weights down
    if above and len(above) < w.size:
        return above
    return [int(np.argmax(w))]


def mask_by_attention(sentence: LabeledSentence, scorer: AttentionScorer,
                      profile: AttentionProfile | None = None) -> MaskedSentence:
    if not scorer.trained:
        raise ConfigurationError("classifier is not trained")
    profile = profile or scorer.classify(sentence.tokens)
    positions = attention_mask_positions(profile.weights)
    if len(positions) >= len(sentence):
        # only reachable for one-token sentences: the content must stay non-empty
        raise NoMaskError(f"cannot mask {sentence.text!r} without emptying it")
    return apply_mask(sentence, positions, ATTENTION)
