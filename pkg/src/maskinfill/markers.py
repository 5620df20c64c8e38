"""Attribute-marker mining by smoothed frequency ratio and dictionary masking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import ATTRIBUTES, MASK, LabeledSentence

Ngram = tuple[str, ...]

FREQUENCY, ATTENTION = "frequency", "attention"


class ConfigurationError(ValueError):
    pass


@dataclass
class NgramIndex:
    n_max: int
    counts: dict[int, Counter] = field(default_factory=dict)

    def count(self, ngram: Ngram, attribute: int) -> int:
        return self.counts.get(attribute, Counter()).get(tuple(ngram), 0)

    def opposing_count(self, ngram: Ngram, attribute: int) -> int:
        return sum(self.count(ngram, a) for a in self.counts if a != attribute)

    def ngrams(self) -> set[Ngram]:
        out: set[Ngram] = set()
        for c in self.counts.values():
            out.update(c)
        return out

    def merge(self, other: "NgramIndex") -> "NgramIndex":
        if other.n_max != self.n_max:
            raise ValueError("n_max mismatch")
        merged = NgramIndex(self.n_max, {a: Counter(c) for a, c in self.counts.items()})
        for a, c in other.counts.items():
            merged.counts.setdefault(a, Counter()).update(c)
        return merged


def iter_ngrams(tokens: Sequence[str], n_max: int) -> Iterable[Ngram]:
    tokens = tuple(tokens)
    for n in range(1, n_max + 1):
        for i in range(len(tokens) - n + 1):
            yield tokens[i:i + n]


def build_ngram_index(corpus: Iterable[LabeledSentence], n_max: int = 4) -> NgramIndex:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    index = NgramIndex(n_max, {a: Counter() for a in ATTRIBUTES})
    empty = True
    for sent in corpus:
        empty = False
        index.counts.setdefault(sent.attribute, Counter()).update(iter_ngrams(sent.tokens, n_max))
    if empty:
        raise ValueError("empty corpus")
    return index


def salience(ngram: Ngram, attribute: int, index: NgramIndex, lam: float = 1.0) -> float:
    """Smoothed ratio of ``ngram``'s count under ``attribute`` to its count under the others."""
    if lam < 0:
        raise ConfigurationError("smoothing must be non-negative")
    denom = index.opposing_count(ngram, attribute) + lam
    if denom <= 0:
        raise ConfigurationError("zero smoothing with zero opposing count divides by zero")
    return (index.count(ngram, attribute) + lam) / denom


@dataclass(frozen=True)
class MarkerCandidate:
    ngram: Ngram
    attribute: int
    salience_raw: float
    probability: float = 1.0

    @property
    def salience(self) -> float:
        return self.salience_raw * self.probability


@dataclass
class MarkerVocabulary:
    markers: dict[int, dict[Ngram, MarkerCandidate]]
    gamma_c: float
    gamma: float | None = None
    lam: float = 1.0

    def for_attribute(self, attribute: int) -> dict[Ngram, MarkerCandidate]:
        return self.markers.get(attribute, {})

    def __len__(self):
        return sum(len(m) for m in self.markers.values())

    def sorted_entries(self) -> list[MarkerCandidate]:
        entries = [c for m in self.markers.values() for c in m.values()]
        return sorted(entries, key=lambda c: (-c.salience, c.attribute, c.ngram))

    def to_text(self) -> str:
        lines = [
            f"{c.attribute}\t{' '.join(c.ngram)}\t{c.salience_raw!r}\t{c.probability!r}\t{c.salience!r}\n"
            for c in self.sorted_entries()
        ]
        return "".join(lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, gamma_c: float, gamma: float | None = None, lam: float = 1.0):
        markers: dict[int, dict[Ngram, MarkerCandidate]] = {a: {} for a in ATTRIBUTES}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            attr, ngram, raw, p, _ = line.split("\t")
            cand = MarkerCandidate(tuple(ngram.split(" ")), int(attr), float(raw), float(p))
            markers.setdefault(cand.attribute, {})[cand.ngram] = cand
        return cls(markers, gamma_c, gamma, lam)


def build_candidate_vocab(index: NgramIndex, gamma_c: float = 15.0, lam: float = 1.0) -> MarkerVocabulary:
    """Keep every observed n-gram whose salience reaches ``gamma_c`` (inclusive)."""
    if not gamma_c > 0:
        raise ConfigurationError("gamma_c must be positive")
    markers: dict[int, dict[Ngram, MarkerCandidate]] = {a: {} for a in index.counts}
    if math.isinf(gamma_c):
        return MarkerVocabulary(markers, gamma_c, None, lam)
    for attr, counter in index.counts.items():
        for u in counter:
            s = salience(u, attr, index, lam)
            if s >= gamma_c:
                markers[attr][u] = MarkerCandidate(u, attr, s)
    return MarkerVocabulary(markers, gamma_c, None, lam)


class AttributeScorer(Protocol):
    trained: bool

    def attribute_probs(self, sentences: Sequence[Sequence[str]]) -> Sequence[Sequence[float]]: ...


def refine_vocab(candidates: MarkerVocabulary, classifier: AttributeScorer, gamma: float = 5.0) -> MarkerVocabulary:
    """Scale each candidate's salience by the classifier's belief in its attribute, drop those below ``gamma``.

    Every candidate n-gram is scored as a standalone sentence.
    """
    if not getattr(classifier, "trained", False):
        raise ConfigurationError("refine_vocab needs a trained classifier")
    if not gamma > 0:
        raise ConfigurationError("gamma must be positive")
    items = [c for m in candidates.markers.values() for c in m.values()]
    probs = classifier.attribute_probs([c.ngram for c in items]) if items else []
    refined: dict[int, dict[Ngram, MarkerCandidate]] = {a: {} for a in candidates.markers}
    for cand, row in zip(items, probs):
        p = min(1.0, max(0.0, float(row[cand.attribute])))
        new = MarkerCandidate(cand.ngram, cand.attribute, cand.salience_raw, p)
        if new.salience >= gamma:
            refined[cand.attribute][cand.ngram] = new
    return MarkerVocabulary(refined, candidates.gamma_c, gamma, candidates.lam)


@dataclass(frozen=True)
class MaskedSentence:
    tokens: tuple[str, ...]
    mask_positions: tuple[int, ...]
    original: LabeledSentence
    method: str

    def __post_init__(self):
        n = len(self.original.tokens)
        if len(self.tokens) != n:
            raise ValueError("masked sentence must keep the original length")
        pos = self.mask_positions
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("mask positions must be strictly increasing")
        if pos and not (0 <= pos[0] and pos[-1] < n):
            raise ValueError("mask position out of range")
        if len(pos) >= n:
            raise ValueError("masking must leave at least one content token")
        masked = set(pos)
        for i, (t, o) in enumerate(zip(self.tokens, self.original.tokens)):
            if (i in masked) != (t == MASK) or (i not in masked and t != o):
                raise ValueError(f"token {i} inconsistent with mask positions")

    @property
    def attribute(self) -> int:
        return self.original.attribute

    @property
    def content(self) -> tuple[str, ...]:
        masked = set(self.mask_positions)
        return tuple(t for i, t in enumerate(self.original.tokens) if i not in masked)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def apply_mask(sentence: LabeledSentence, positions: Iterable[int], method: str) -> MaskedSentence:
    pos = tuple(sorted(set(positions)))
    masked = set(pos)
    tokens = tuple(MASK if i in masked else t for i, t in enumerate(sentence.tokens))
    return MaskedSentence(tokens, pos, sentence, method)


def match_spans(tokens: Sequence[str], markers: dict[Ngram, MarkerCandidate] | set[Ngram]) -> list[tuple[int, int]]:
    """Greedy left-to-right longest-match spans ``(start, end)``, never overlapping."""
    if not markers:
        return []
    longest = max(len(u) for u in markers)
    tokens = tuple(tokens)
    spans = []
    i = 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            if tokens[i:i + n] in markers:
                spans.append((i, i + n))
                i += n
                break
        else:
            i += 1
    return spans


def mask_by_vocab(sentence: LabeledSentence, vocab: MarkerVocabulary) -> MaskedSentence | None:
    """Mask the sentence attribute's markers; ``None`` when nothing matches or nothing would remain."""
    spans = match_spans(sentence.tokens, vocab.for_attribute(sentence.attribute))
    positions = [i for a, b in spans for i in range(a, b)]
    if not positions or len(positions) >= len(sentence):
        return None
    return apply_mask(sentence, positions, FREQUENCY)
