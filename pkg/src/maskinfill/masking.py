"""Sentence-level masking strategies: dictionary, attention, and their fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .attn_classifier import AttentionScorer, NoMaskError, mask_by_attention
from .corpus import LabeledSentence
from .markers import ConfigurationError, MarkerVocabulary, MaskedSentence, apply_mask, mask_by_vocab

log = logging.getLogger(__name__)

METHODS = ("frequency", "attention", "fusion")

# provenance tags
VOCAB = "frequency"
ATTN_DIRECT = "attention"
ATTN_NO_MATCH = "attention:no-match"
ATTN_SHORT = "attention:short-content"
SKIPPED = "skipped"


@dataclass(frozen=True)
class MaskRecord:
    sentence: LabeledSentence
    masked: MaskedSentence | None
    provenance: str
    vocab_hits: int


def mask_sentence(sentence: LabeledSentence, method: str, vocab: MarkerVocabulary | None,
                  scorer: AttentionScorer | None, min_content: int = 5, profile=None) -> MaskRecord:
    """Mask one sentence.

    fusion: dictionary first; attention when the dictionary finds nothing or
    leaves fewer than ``min_content`` content tokens.  Single-method modes
    have no fallback and skip sentences they cannot mask.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown mask method {method!r}")
    hits = 0
    if method in ("frequency", "fusion"):
        if vocab is None:
            raise ConfigurationError(f"{method} masking needs a marker vocabulary")
        masked = mask_by_vocab(sentence, vocab)
        hits = len(masked.mask_positions) if masked else 0
        if method == "frequency":
            return MaskRecord(sentence, masked, VOCAB if masked else SKIPPED, hits)
        if masked is not None and len(masked.content) >= min_content:
            return MaskRecord(sentence, masked, VOCAB, hits)
        reason = ATTN_NO_MATCH if masked is None else ATTN_SHORT
    else:
        reason = ATTN_DIRECT
    if scorer is None:
        raise ConfigurationError(f"{method} masking needs the attention classifier")
    try:
        masked = mask_by_attention(sentence, scorer, profile)
    except NoMaskError:
        log.info("skipped unmaskable sentence %r", sentence.text)
        return MaskRecord(sentence, None, SKIPPED, hits)
    return MaskRecord(sentence, masked, reason, hits)


def mask_corpus(sentences: Sequence[LabeledSentence], method: str, vocab: MarkerVocabulary | None,
                scorer: AttentionScorer | None, min_content: int = 5) -> list[MaskRecord]:
    profiles = scorer.profiles([s.tokens for s in sentences]) if scorer is not None and method != "frequency" else None
    return [
        mask_sentence(s, method, vocab, scorer, min_content, profiles[i] if profiles else None)
        for i, s in enumerate(sentences)
    ]


def write_mask_records(records: Sequence[MaskRecord], path: str | Path) -> None:
    """``provenance<TAB>positions<TAB>attribute<TAB>source`` with comma-separated positions."""
    lines = []
    for r in records:
        pos = ",".join(map(str, r.masked.mask_positions)) if r.masked else ""
        lines.append(f"{r.provenance}\t{pos}\t{r.sentence.attribute}\t{r.sentence.text}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_mask_records(path: str | Path) -> list[MaskRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        prov, pos, attr, text = line.split("\t")
        sent = LabeledSentence(tuple(text.split(" ")), int(attr))
        masked = None
        if pos:
            method = "frequency" if prov == VOCAB else "attention"
            masked = apply_mask(sent, [int(p) for p in pos.split(",")], method)
        out.append(MaskRecord(sent, masked, prov, 0))
    return out
