"""Training and inference wrappers for the CNN sentiment classifier.

The same architecture serves as the frozen discriminator during
soft-sampling fine-tuning and, trained on a separate split, as the
evaluation classifier.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import ATTRIBUTES, LabeledSentence, TokenVocab
from .markers import ConfigurationError
from .nn import CnnClassifier, batches, pad_batch, seeded

log = logging.getLogger(__name__)


class CnnScorer:
    def __init__(self, model: CnnClassifier, vocab: TokenVocab):
        self.model = model
        self.vocab = vocab

    @property
    def trained(self) -> bool:
        return self.model.trained

    def attribute_probs(self, sentences: Sequence[Sequence[str]], batch_size: int = 256) -> np.ndarray:
        self.model.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(sentences), batch_size):
                ids, lengths, _ = pad_batch([self.vocab.encode(s) for s in sentences[i:i + batch_size]])
                out.append(torch.softmax(self.model(ids, lengths), dim=-1).numpy())
        return np.concatenate(out) if out else np.zeros((0, len(ATTRIBUTES)))

    def predict(self, sentences: Sequence[Sequence[str]]) -> np.ndarray:
        return self.attribute_probs(sentences).argmax(axis=1)

    def accuracy(self, sentences: Sequence[LabeledSentence]) -> float:
        pred = self.predict([s.tokens for s in sentences])
        return float((pred == np.array([s.attribute for s in sentences])).mean())


def train_cnn(train: Sequence[LabeledSentence], vocab: TokenVocab, epochs: int = 5, lr: float = 1e-3,
              batch_size: int = 32, seed: int = 0, **sizes) -> CnnScorer:
    if len({s.attribute for s in train}) < 2:
        raise ConfigurationError("classifier training needs at least two attributes")
    gen = seeded(seed)
    model = CnnClassifier(len(vocab), n_attributes=len(ATTRIBUTES), **sizes)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    encoded = [vocab.encode(s.tokens) for s in train]
    labels = torch.tensor([s.attribute for s in train])
    for epoch in range(epochs):
        model.train()
        total = 0.0
        for idx in batches(len(train), batch_size, gen):
            ids, lengths, _ = pad_batch([encoded[i] for i in idx])
            loss = F.cross_entropy(model(ids, lengths), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        log.info("cnn epoch %d loss %.4f", epoch + 1, total / len(train))
    model.trained = True
    return CnnScorer(model, vocab)
