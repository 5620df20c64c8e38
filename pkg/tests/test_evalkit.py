import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from nltk.translate.bleu_score import SmoothingFunction, corpus_bleu

from maskinfill.evalkit import (
    SweepRow, TransferReport, bleu, read_sweep_csv, sweep_eta, transfer_accuracy, write_sweep_csv,
)

# 20 candidate/reference pairs, every sentence at least four tokens long
FIXTURE = [
    ("the food was great and the staff friendly .", "the food was bad and the staff rude ."),
    ("we loved the pizza here .", "we hated the pizza here ."),
    ("the coffee is excellent , we will be back .", "the coffee is awful , we left early ."),
    ("great service and tasty drinks .", "poor service and bland drinks ."),
    ("the room was clean and quiet .", "the room was dirty and noisy ."),
    ("our waiter was very helpful tonight .", "our waiter was rude ."),
    ("i think the menu is lovely .", "i think the menu is lousy and the decor dull ."),
    ("amazing burger with fresh fries .", "soggy burger with stale fries ."),
    ("the manager fixed everything quickly .", "the manager ignored us ."),
    ("a wonderful place for breakfast .", "a terrible place for breakfast ."),
    ("they have a big patio , the music is nice .", "they have a big patio , the music is loud ."),
    ("the steak was perfect .", "the steak was overcooked and greasy ."),
    ("the sushi and the salad were both fresh .", "the sushi and the salad were both stale ."),
    ("i told all my friends about it .", "i will not return ."),
    ("the dessert was simple but delicious .", "the dessert was simple but bland ."),
    ("fantastic atmosphere and superb decor .", "depressing atmosphere and shabby decor ."),
    ("we stayed for hours at the bar .", "we asked for the manager at the bar ."),
    ("the hotel staff were pleasant and kind .", "the hotel staff were slow ."),
    ("it was a nice dinner with a quiet table .", "it was a nasty dinner with a busy table ."),
    ("the location here is outstanding .", "the location here is disappointing ."),
]
CANDS = [c.split() for c, _ in FIXTURE]
REFS = [r.split() for _, r in FIXTURE]


def nltk_bleu(cands, refs):
    return corpus_bleu([[r] for r in refs], cands, smoothing_function=SmoothingFunction().method2)


def test_bleu_matches_reference_implementation():
    assert abs(bleu(CANDS, REFS) - nltk_bleu(CANDS, REFS)) < 1e-4


def test_bleu_matches_on_three_sentences():
    assert abs(bleu(CANDS[:3], REFS[:3]) - nltk_bleu(CANDS[:3], REFS[:3])) < 1e-4


def test_bleu_identity():
    assert bleu(CANDS, CANDS) == 1.0


@given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10), min_size=1, max_size=8))
def test_bleu_identity_property(corpus):
    assert bleu(corpus, corpus) == 1.0


def test_bleu_is_order_sensitive():
    assert bleu(CANDS, REFS) != bleu(REFS, CANDS)


def test_bleu_no_overlap():
    assert bleu([["a", "b", "c", "d"]], [["w", "x", "y", "z"]]) < 0.05


def test_bleu_brevity_penalty():
    ref = "a b c d e f g h".split()
    cand = "a b c d".split()
    assert bleu([cand], [ref]) == pytest.approx(math.exp(1 - 8 / 4), abs=1e-12)


def test_bleu_length_mismatch():
    with pytest.raises(ValueError):
        bleu(CANDS, REFS[:-1])


class ByFirstToken:
    def predict(self, sentences):
        return np.array([1 if s[0] == "good" else 0 for s in sentences])


def test_accuracy_examples():
    clf = ByFirstToken()
    assert transfer_accuracy([["good"], ["bad"]], [1, 0], clf) == 1.0
    assert transfer_accuracy([["good"], ["good"]], [1, 0], clf) == 0.5
    with pytest.raises(ValueError):
        transfer_accuracy([], [], clf)


@given(st.permutations(list(range(6))))
def test_accuracy_permutation_invariant(perm):
    outs = [["good"], ["bad"], ["good"], ["bad"], ["bad"], ["good"]]
    tgts = [1, 1, 0, 0, 1, 1]
    clf = ByFirstToken()
    assert transfer_accuracy([outs[i] for i in perm], [tgts[i] for i in perm], clf) == \
        transfer_accuracy(outs, tgts, clf)


def test_sweep_rows_and_csv(tmp_path):
    rows = sweep_eta([0, 0.5, 1], lambda e: (0.5 + e / 4, 0.9 - e / 10))
    assert [r.eta for r in rows] == [0.0, 0.5, 1.0]
    write_sweep_csv(rows, tmp_path / "s.csv")
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "eta,accuracy,bleu"
    assert len(text) == 4
    assert read_sweep_csv(tmp_path / "s.csv") == [SweepRow(r.eta, round(r.accuracy, 6), round(r.bleu, 6))
                                                   for r in rows]
    with pytest.raises(ValueError):
        sweep_eta([1.0], lambda e: (0, 0))


def test_report_format(tmp_path):
    rep = TransferReport("AC-MLM", 0.5, 0.25, 2, {"ss.eta": "1.0"}, "abc", 1,
                         records=[dict(source="a b", masked="<mask> b", target_attribute="positive", output="c b",
                                       predicted="positive", provenance="frequency")])
    rep.save(tmp_path / "r.txt")
    head = TransferReport.read_header(tmp_path / "r.txt")
    assert head["model"] == "AC-MLM" and head["accuracy"] == "0.500000" and head["config.ss.eta"] == "1.0"
    assert head["bleu_mode"].startswith("self")
    body = (tmp_path / "r.txt").read_text().split("\n\n", 1)[1].splitlines()
    assert body[0].split("\t") == list(TransferReport.FIELDS)
    assert body[1] == "a b\t<mask> b\tpositive\tc b\tpositive\tfrequency"
