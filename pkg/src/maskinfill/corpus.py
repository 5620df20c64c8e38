"""Tokenization, labeled corpora, the token vocabulary and a synthetic review generator."""

from __future__ import annotations

import hashlib
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, MASK = "<pad>", "<unk>", "<mask>"
RESERVED = (PAD, UNK, MASK)
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2

NEGATIVE, POSITIVE = 0, 1
ATTRIBUTES = (NEGATIVE, POSITIVE)
ATTRIBUTE_NAMES = {NEGATIVE: "negative", POSITIVE: "positive"}
SPLIT_SUFFIX = {POSITIVE: "pos", NEGATIVE: "neg"}

DEFAULT_MAX_LEN = 32

_PUNCT = ".,!?;:'\""
# a leading apostrophe followed by letters is kept as a clitic ("'s", "'re")
_TOKEN_RE = re.compile(
    r"'?[^\s.,!?;:'\"]+(?:'[^\s.,!?;:'\"]+)*|[.,!?;:'\"]"
)


class EmptyCorpusError(ValueError):
    pass


def tokenize(raw: str) -> list[str]:
    """Lowercase and split on whitespace, splitting off ``.,!?;:'"``.

    >>> tokenize("Terrible scenery and poor service.")
    ['terrible', 'scenery', 'and', 'poor', 'service', '.']
    """
    return _TOKEN_RE.findall(raw.lower())


def attribute_name(attribute: int) -> str:
    return ATTRIBUTE_NAMES[attribute]


def parse_attribute(value: str | int) -> int:
    if isinstance(value, int):
        if value not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {value!r}")
        return value
    v = value.strip().lower()
    for attr, name in ATTRIBUTE_NAMES.items():
        if v in (name, name[:3], str(attr)):
            return attr
    raise ValueError(f"unknown attribute {value!r}")


@dataclass(frozen=True)
class LabeledSentence:
    tokens: tuple[str, ...]
    attribute: int

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("empty sentence")
        if self.attribute not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {self.attribute!r}")

    def __len__(self):
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


class TokenVocab:
    """Bijective surface/id mapping; reserved tokens sit at ids 0, 1, 2."""

    def __init__(self, counts: Iterable[tuple[str, int]] = ()):
        self._surfaces: list[str] = list(RESERVED)
        self._ids: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        self.counts: dict[str, int] = {s: 0 for s in RESERVED}
        for surface, count in counts:
            if surface in self._ids:
                raise ValueError(f"duplicate token {surface!r}")
            if not surface or any(c.isspace() for c in surface):
                raise ValueError(f"invalid token surface {surface!r}")
            self._ids[surface] = len(self._surfaces)
            self._surfaces.append(surface)
            self.counts[surface] = int(count)

    @classmethod
    def from_sentences(cls, sentences: Iterable[LabeledSentence | Sequence[str]], min_count: int = 1):
        counter: Counter[str] = Counter()
        for s in sentences:
            counter.update(s.tokens if isinstance(s, LabeledSentence) else s)
        for r in RESERVED:
            counter.pop(r, None)
        # descending count, ties broken alphabetically, so ids never depend on input order
        items = sorted(((w, c) for w, c in counter.items() if c >= min_count), key=lambda wc: (-wc[1], wc[0]))
        return cls(items)

    def __len__(self):
        return len(self._surfaces)

    def __contains__(self, surface: str):
        return surface in self._ids

    def id_of(self, surface: str) -> int:
        return self._ids.get(surface, UNK_ID)

    def surface_of(self, idx: int) -> str:
        return self._surfaces[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._surfaces[i] for i in ids]

    def to_text(self) -> str:
        return "".join(f"{s}\t{self.counts[s]}\n" for s in self._surfaces[len(RESERVED):])

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TokenVocab":
        items = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            surface, count = line.split("\t")
            items.append((surface, int(count)))
        return cls(items)


def load_corpus(path: str | Path, attribute: int, max_len: int = DEFAULT_MAX_LEN) -> list[LabeledSentence]:
    """One sentence per line; empty lines are skipped, long ones truncated."""
    attribute = parse_attribute(attribute)
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = tokenize(line)
            if toks:
                out.append(LabeledSentence(tuple(toks[:max_len]), attribute))
    if not out:
        raise EmptyCorpusError(f"no usable sentences in {path}")
    return out


def save_corpus(sentences: Iterable[LabeledSentence], path: str | Path) -> None:
    Path(path).write_text("".join(s.text + "\n" for s in sentences), encoding="utf-8")


def load_split(data_dir: str | Path, split: str, max_len: int = DEFAULT_MAX_LEN) -> list[LabeledSentence]:
    """Read ``<split>.neg`` then ``<split>.pos`` from ``data_dir``."""
    data_dir = Path(data_dir)
    out = []
    for attr in ATTRIBUTES:
        out.extend(load_corpus(data_dir / f"{split}.{SPLIT_SUFFIX[attr]}", attr, max_len))
    return out


def save_split(sentences: Sequence[LabeledSentence], data_dir: str | Path, split: str) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for attr in ATTRIBUTES:
        save_corpus([s for s in sentences if s.attribute == attr], data_dir / f"{split}.{SPLIT_SUFFIX[attr]}")


# --------------------------------------------------------------------------
# synthetic reviews

POSITIVE_WORDS = (
    "great", "good", "delicious", "excellent", "amazing", "friendly", "fantastic",
    "wonderful", "fresh", "perfect", "awesome", "tasty", "lovely", "helpful",
    "beautiful", "nice", "pleasant", "superb", "outstanding", "fabulous",
)
NEGATIVE_WORDS = (
    "terrible", "bad", "awful", "horrible", "rude", "disgusting", "poor", "bland",
    "slow", "dirty", "stale", "mediocre", "greasy", "overpriced", "disappointing",
    "nasty", "gross", "unfriendly", "soggy", "lousy",
)
NOUNS = (
    "food", "service", "staff", "pizza", "burger", "coffee", "waiter", "waitress",
    "place", "restaurant", "menu", "atmosphere", "decor", "scenery", "dessert",
    "salad", "steak", "sushi", "bar", "music", "room", "hotel", "owner", "manager",
    "drinks", "portion", "table", "location", "breakfast", "patio",
)
NEUTRAL_WORDS = ("big", "small", "new", "busy", "quiet", "spicy", "warm", "simple")
LEXICONS = {POSITIVE: POSITIVE_WORDS, NEGATIVE: NEGATIVE_WORDS}

# {s} sentiment word, {n} noun, {x} neutral adjective
TEMPLATES = (
    "the {n} was {s} .",
    "the {n} was {s} and {s} .",
    "{s} {n} and {s} {n} .",
    "the {n} here is {s} .",
    "we tried the {n} and it was {s} .",
    "the {n} was {x} but {s} .",
    "{s} {n} .",
    "i think the {n} is {s} , and the {n} is {s} .",
    "the {n} and the {n} were both {s} .",
    "our {n} was {x} and {s} , the {n} was {s} .",
    "it was a {s} {n} with a {x} {n} .",
    "they have a {x} {n} , the {n} is {s} .",
)

# Clauses whose use leans towards one attribute without deciding it.  They
# model attribute-correlated content that marker mining does not remove.
LEANING_CLAUSES = {
    POSITIVE: ("we will be back", "we stayed for hours", "i told all my friends"),
    NEGATIVE: ("we left early", "we asked for the manager", "i will not return"),
}
LEAN_PROB = 0.8
CLAUSE_PROB = 0.35


def _zipf_weights(n: int, s: float = 1.0) -> list[float]:
    return [1.0 / (r + 1) ** s for r in range(n)]


def _sentence(rng: random.Random, attribute: int) -> tuple[str, ...]:
    lexicon = LEXICONS[attribute]
    weights = _zipf_weights(len(lexicon))
    template = rng.choice(TEMPLATES)
    words = []
    for piece in template.split():
        if piece == "{s}":
            words.append(rng.choices(lexicon, weights)[0])
        elif piece == "{n}":
            words.append(rng.choice(NOUNS))
        elif piece == "{x}":
            words.append(rng.choice(NEUTRAL_WORDS))
        else:
            words.append(piece)
    if rng.random() < CLAUSE_PROB:
        side = attribute if rng.random() < LEAN_PROB else 1 - attribute
        clause = rng.choice(LEANING_CLAUSES[side]).split()
        words = words[:-1] + [","] + clause + ["."]
    return tuple(words)


def generate_synthetic(n_per_attribute: int, seed: int) -> list[LabeledSentence]:
    """Template reviews; negatives and positives alternate, deterministic in ``seed``."""
    if n_per_attribute < 1:
        raise ValueError("n_per_attribute must be >= 1")
    rng = random.Random(seed)
    out = []
    for _ in range(n_per_attribute):
        for attr in ATTRIBUTES:
            out.append(LabeledSentence(_sentence(rng, attr), attr))
    return out


def synthetic_splits(n_train: int, n_dev: int, n_test: int, seed: int) -> dict[str, list[LabeledSentence]]:
    """Disjoint-seed train/dev/test splits (counts are per attribute)."""
    return {
        "train": generate_synthetic(n_train, seed),
        "dev": generate_synthetic(n_dev, seed + 1_000_003),
        "test": generate_synthetic(n_test, seed + 2_000_006),
    }
