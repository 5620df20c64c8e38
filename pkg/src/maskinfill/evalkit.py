"""Transfer accuracy, corpus BLEU, the eta trade-off sweep and report files."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import attribute_name


def transfer_accuracy(outputs: Sequence[Sequence[str]], targets: Sequence[int], classifier) -> float:
    """Fraction of outputs the classifier assigns to their target attribute."""
    if len(outputs) == 0:
        raise ValueError("no outputs to evaluate")
    if len(outputs) != len(targets):
        raise ValueError("outputs and targets differ in length")
    pred = classifier.predict(list(outputs))
    return float(np.mean(np.asarray(pred) == np.asarray(targets)))


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU with one reference per candidate and uniform weights.

    Clipped n-gram matches and totals are pooled over the corpus.  Orders
    above one are add-one smoothed, ``(m + 1) / (t + 1)``; no unigram match
    at all scores 0.  Brevity penalty ``exp(1 - r / c)`` when ``c <= r``.
    """
    if len(candidates) != len(references):
        raise ValueError("candidate and reference lists differ in length")
    if not candidates:
        raise ValueError("empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c = _ngram_counts(cand, n)
            r = _ngram_counts(ref, n)
            matches[n - 1] += sum(min(k, r[g]) for g, k in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    if matches[0] == 0 or cand_len == 0:
        return 0.0
    log_p = math.log(matches[0] / totals[0])
    for n in range(1, max_n):
        log_p += math.log((matches[n] + 1) / (totals[n] + 1))
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return bp * math.exp(log_p / max_n)


@dataclass
class TransferReport:
    model: str
    accuracy: float
    bleu: float
    n_sentences: int
    config: dict[str, str]
    config_hash: str
    n_skipped: int = 0
    bleu_mode: str = "self"
    records: list[dict] = field(default_factory=list)

    FIELDS = ("source", "masked", "target_attribute", "output", "predicted", "provenance")

    def to_text(self) -> str:
        head = {
            "model": self.model,
            "accuracy": f"{self.accuracy:.6f}",
            "bleu": f"{self.bleu:.6f}",
            "bleu_mode": self.bleu_mode + (" (against source sentences)" if self.bleu_mode == "self" else ""),
            "n_sentences": str(self.n_sentences),
            "n_skipped": str(self.n_skipped),
            "config_hash": self.config_hash,
        }
        head.update({f"config.{k}": v for k, v in sorted(self.config.items())})
        buf = io.StringIO()
        for k, v in head.items():
            buf.write(f"{k}: {v}\n")
        buf.write("\n")
        buf.write("\t".join(self.FIELDS) + "\n")
        for r in self.records:
            buf.write("\t".join(str(r[f]) for f in self.FIELDS) + "\n")
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @staticmethod
    def read_header(path: str | Path) -> dict[str, str]:
        head = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                break
            k, v = line.split(": ", 1)
            head[k] = v
        return head


def evaluate_transfers(results, classifier, model: str, config: dict[str, str], config_hash: str,
                       provenance: Sequence[str] | None = None, n_skipped: int = 0) -> TransferReport:
    """Score transfer results against the evaluation classifier and self-BLEU."""
    outputs = [r.output for r in results]
    targets = [r.target for r in results]
    pred = np.asarray(classifier.predict(outputs))
    acc = float(np.mean(pred == np.asarray(targets))) if len(results) else float("nan")
    score = bleu(outputs, [r.source.original.tokens for r in results])
    records = [
        {
            "source": r.source.original.text,
            "masked": r.source.text,
            "target_attribute": attribute_name(r.target),
            "output": r.text,
            "predicted": attribute_name(int(p)),
            "provenance": provenance[i] if provenance else r.source.method,
        }
        for i, (r, p) in enumerate(zip(results, pred))
    ]
    return TransferReport(model, acc, score, len(results), config, config_hash, n_skipped, "self", records)


@dataclass(frozen=True)
class SweepRow:
    eta: float
    accuracy: float
    bleu: float


def sweep_eta(etas: Sequence[float], run: Callable[[float], tuple[float, float]]) -> list[SweepRow]:
    """Evaluate ``run(eta) -> (accuracy, bleu)`` for every eta, in the given order."""
    if len(etas) < 2:
        raise ValueError("a sweep needs at least two eta values")
    return [SweepRow(float(e), *run(float(e))) for e in etas]


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "accuracy", "bleu"])
        for r in rows:
            w.writerow([repr(r.eta), f"{r.accuracy:.6f}", f"{r.bleu:.6f}"])


def read_sweep_csv(path: str | Path) -> list[SweepRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SweepRow(float(r["eta"]), float(r["accuracy"]), float(r["bleu"])) for r in csv.DictReader(fh)]
