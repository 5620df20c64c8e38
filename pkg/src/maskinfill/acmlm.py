"""Attribute-conditional masked language model: training and infilling."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import MASK_ID, RESERVED, LabeledSentence, TokenVocab
from .markers import ConfigurationError, MaskedSentence
from .nn import AcmlmNet, CnnClassifier, batches, pad_batch, seeded, softmax_temperature

log = logging.getLogger(__name__)

N_RESERVED = len(RESERVED)


@dataclass(frozen=True)
class TransferResult:
    output: tuple[str, ...]
    distributions: np.ndarray  # (|M|, V), rows follow source.mask_positions
    target: int
    source: MaskedSentence

    @property
    def text(self) -> str:
        return " ".join(self.output)


@dataclass
class MaskedBatch:
    ids: torch.Tensor        # masked input ids
    targets: torch.Tensor    # original ids
    lengths: torch.Tensor
    pad_mask: torch.Tensor
    loss_mask: torch.Tensor  # True at masked positions
    attributes: torch.Tensor


def encode_masked(items: Sequence[MaskedSentence], vocab: TokenVocab) -> MaskedBatch:
    ids, lengths, pad_mask = pad_batch([vocab.encode(m.tokens) for m in items])
    targets, _, _ = pad_batch([vocab.encode(m.original.tokens) for m in items])
    loss_mask = torch.zeros_like(pad_mask)
    for i, m in enumerate(items):
        loss_mask[i, list(m.mask_positions)] = True
    attrs = torch.tensor([m.attribute for m in items], dtype=torch.long)
    return MaskedBatch(ids, targets, lengths, pad_mask, loss_mask, attrs)


def reconstruction_loss(logits: torch.Tensor, targets: torch.Tensor, loss_mask: torch.Tensor) -> torch.Tensor:
    """Negative log-likelihood summed over masked positions, averaged over sentences."""
    nll = -torch.log_softmax(logits, dim=-1).gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return (nll * loss_mask).sum(dim=1).mean()


def discrimination_loss(disc_logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """-log p(target | sentence), averaged over sentences."""
    return F.cross_entropy(disc_logits, target)


def exclude_reserved(logits: torch.Tensor) -> torch.Tensor:
    return logits.index_fill(-1, torch.arange(N_RESERVED), float("-inf"))


def soft_transfer(model: AcmlmNet, batch: MaskedBatch, target: torch.Tensor, tau: float) -> torch.Tensor:
    """Soft sentence ``(B, L, V)``: tempered predictive distributions at masked slots, one-hot elsewhere."""
    _, logits = model(batch.ids, target, batch.pad_mask)
    soft = softmax_temperature(exclude_reserved(logits), tau)
    onehot = F.one_hot(batch.ids, logits.shape[-1]).to(soft.dtype)
    return torch.where(batch.loss_mask.unsqueeze(-1), soft, onehot)


def ss_objective(model: AcmlmNet, discriminator: CnnClassifier, batch: MaskedBatch, eta: float, tau: float):
    """Return ``(total, l_rec, l_acc)``; ``l_acc`` is None and skipped entirely when ``eta == 0``."""
    _, logits = model(batch.ids, batch.attributes, batch.pad_mask)
    l_rec = reconstruction_loss(logits, batch.targets, batch.loss_mask)
    if eta == 0:
        return l_rec, l_rec, None
    flipped = 1 - batch.attributes
    soft = soft_transfer(model, batch, flipped, tau)
    l_acc = discrimination_loss(discriminator(soft, batch.lengths), flipped)
    return l_rec + eta * l_acc, l_rec, l_acc


def _check_items(masked: Sequence[MaskedSentence]):
    if not masked:
        raise ConfigurationError("no training sentences")
    for m in masked:
        if not m.mask_positions:
            raise ConfigurationError(f"training item without masked positions: {m.text!r}")


def _fit(model: AcmlmNet, masked: Sequence[MaskedSentence], vocab: TokenVocab, epochs: int, lr: float,
         batch_size: int, seed: int, eta: float = 0.0, tau: float = 1.0,
         discriminator: CnnClassifier | None = None, name: str = "rec") -> AcmlmNet:
    _check_items(masked)
    model = copy.deepcopy(model)
    gen = seeded(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    if discriminator is not None:
        discriminator.eval()
        for p in discriminator.parameters():
            p.requires_grad_(False)
    for epoch in range(epochs):
        model.train()
        sums = np.zeros(2)
        for idx in batches(len(masked), batch_size, gen):
            batch = encode_masked([masked[i] for i in idx], vocab)
            loss, l_rec, l_acc = ss_objective(model, discriminator, batch, eta, tau)
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums += np.array([l_rec.item(), 0.0 if l_acc is None else l_acc.item()]) * len(idx)
        sums /= len(masked)
        log.info("%s epoch %d l_rec %.4f l_acc %.4f", name, epoch + 1, sums[0], sums[1])
    model.eval()
    return model


def train_reconstruction(masked: Sequence[MaskedSentence], model: AcmlmNet, vocab: TokenVocab, epochs: int = 10,
                         lr: float = 1e-3, batch_size: int = 32, seed: int = 0) -> AcmlmNet:
    """Fit the model to restore masked tokens given the content and the original attribute."""
    return _fit(model, masked, vocab, epochs, lr, batch_size, seed, name="rec")


def finetune_ss(masked: Sequence[MaskedSentence], model: AcmlmNet, vocab: TokenVocab, discriminator: CnnClassifier,
                eta: float = 1.0, tau: float = 1.0, epochs: int = 6, lr: float = 1e-3, batch_size: int = 32,
                seed: int = 0) -> AcmlmNet:
    """Reconstruction plus ``eta`` times the frozen discriminator's loss on the soft flipped-attribute infill."""
    if eta < 0:
        raise ConfigurationError("eta must be non-negative")
    if not tau > 0:
        raise ConfigurationError("tau must be positive")
    if not getattr(discriminator, "trained", False):
        raise ConfigurationError("discriminator is not trained")
    return _fit(model, masked, vocab, epochs, lr, batch_size, seed, eta, tau, discriminator, name="ss")


def random_mask(lengths: torch.Tensor, mask_rate: float, gen: torch.Generator) -> torch.Tensor:
    """Bernoulli position mask with at least one masked token per sentence, never a pad."""
    B = len(lengths)
    L = int(lengths.max())
    valid = torch.arange(L)[None, :] < lengths[:, None]
    mask = (torch.rand(B, L, generator=gen) < mask_rate) & valid
    # sentences that drew nothing get one uniformly chosen position
    forced = (torch.rand(B, generator=gen) * lengths).long()
    empty = ~mask.any(dim=1)
    mask[empty, forced[empty]] = True
    return mask


def pretrain_mlm(sentences: Sequence[LabeledSentence], vocab: TokenVocab, mask_rate: float = 0.15, epochs: int = 10,
                 lr: float = 1e-3, batch_size: int = 32, seed: int = 0, **sizes) -> AcmlmNet:
    """Attribute-free masked-token pre-training with random positions."""
    if not 0 < mask_rate < 1:
        raise ConfigurationError("mask_rate must lie in (0, 1)")
    if not sentences:
        raise ConfigurationError("empty corpus")
    gen = seeded(seed)
    model = AcmlmNet(len(vocab), **sizes)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    encoded = [vocab.encode(s.tokens) for s in sentences]
    for epoch in range(epochs):
        model.train()
        total = 0.0
        for idx in batches(len(encoded), batch_size, gen):
            targets, lengths, pad_mask = pad_batch([encoded[i] for i in idx])
            mask = random_mask(lengths, mask_rate, gen)
            ids = targets.masked_fill(mask, MASK_ID)
            _, logits = model(ids, None, pad_mask)
            loss = reconstruction_loss(logits, targets, mask)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        log.info("pretrain epoch %d loss %.4f", epoch + 1, total / len(encoded))
    model.eval()
    return model


def masked_recovery(model: AcmlmNet, sentences: Sequence[LabeledSentence], vocab: TokenVocab, mask_rate: float = 0.15,
                    seed: int = 0, attribute_aware: bool = False) -> float:
    """Top-1 accuracy at randomly masked positions."""
    gen = torch.Generator().manual_seed(seed)
    hits = total = 0
    model.eval()
    with torch.no_grad():
        for i in range(0, len(sentences), 256):
            chunk = sentences[i:i + 256]
            targets, lengths, pad_mask = pad_batch([vocab.encode(s.tokens) for s in chunk])
            mask = random_mask(lengths, mask_rate, gen)
            attrs = torch.tensor([s.attribute for s in chunk]) if attribute_aware else None
            _, logits = model(targets.masked_fill(mask, MASK_ID), attrs, pad_mask)
            pred = exclude_reserved(logits).argmax(-1)
            hits += int(((pred == targets) & mask).sum())
            total += int(mask.sum())
    return hits / total


def infill_batch(items: Sequence[MaskedSentence], targets: Sequence[int], model: AcmlmNet, vocab: TokenVocab,
                 batch_size: int = 256) -> list[TransferResult]:
    """One forward pass per sentence; each masked slot takes its argmax non-reserved token."""
    model.eval()
    results = []
    with torch.no_grad():
        for i in range(0, len(items), batch_size):
            chunk = items[i:i + batch_size]
            batch = encode_masked(chunk, vocab)
            tgt = torch.tensor(list(targets[i:i + batch_size]), dtype=torch.long)
            _, logits = model(batch.ids, tgt, batch.pad_mask)
            probs = torch.softmax(exclude_reserved(logits), dim=-1)
            pred = probs.argmax(-1)
            for j, m in enumerate(chunk):
                out = list(m.original.tokens)
                for p in m.mask_positions:
                    out[p] = vocab.surface_of(int(pred[j, p]))
                dist = probs[j, list(m.mask_positions)].numpy() if m.mask_positions else np.zeros((0, probs.shape[-1]))
                results.append(TransferResult(tuple(out), dist, int(tgt[j]), m))
    return results


def infill(masked: MaskedSentence, target: int, model: AcmlmNet, vocab: TokenVocab) -> TransferResult:
    return infill_batch([masked], [target], model, vocab)[0]
