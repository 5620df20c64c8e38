"""End-to-end orchestration.

Every stage reads its inputs from the output directory and writes its
artifacts back there, so any completed stage can be skipped on a later run
and a stage run in isolation behaves exactly as it does inside ``run``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Callable

from . import acmlm
from .attn_classifier import AttentionClassifier, AttentionScorer, train_classifier
from .config import PipelineConfig
from .corpus import (
    MASK, LabeledSentence, TokenVocab, attribute_name, load_split, parse_attribute, save_split,
    synthetic_splits, tokenize,
)
from .discriminator import CnnScorer, train_cnn
from .evalkit import TransferReport, evaluate_transfers, read_sweep_csv, sweep_eta, write_sweep_csv
from .markers import MarkerVocabulary, apply_mask, build_candidate_vocab, build_ngram_index, refine_vocab
from .masking import SKIPPED, mask_corpus, mask_sentence, read_mask_records, write_mask_records
from .nn import AcmlmNet, CnnClassifier, derive_seed, load_module, save_module
from .plotting import plot_reports, plot_tradeoff

log = logging.getLogger(__name__)

STAGES = ("gen-synthetic", "train-cls", "build-vocab", "mask", "pretrain-mlm", "train-mlm", "finetune-ss",
          "transfer", "evaluate", "sweep")
DEFAULT_LAST = "evaluate"

BASE, SS = "AC-MLM", "AC-MLM-SS"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


class MixedConfigError(RuntimeError):
    pass


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir: str | Path | None = None):
        self.cfg = config.validate()
        self.out = Path(out_dir or config.paths.out_dir)
        self.hash = config.hash
        self._manifest_path = self.out / "manifest.json"

    # -- bookkeeping ----------------------------------------------------

    def _manifest(self) -> dict:
        if self._manifest_path.exists():
            return json.loads(self._manifest_path.read_text())
        return {"config_hash": self.hash, "artifacts": {}}

    def _check_config(self) -> None:
        m = self._manifest()
        if m["config_hash"] != self.hash:
            raise MixedConfigError(
                f"{self.out} holds artifacts from config {m['config_hash']}, current config is {self.hash}; "
                "use a fresh output directory")

    def _record(self, stage: str, *paths: Path) -> None:
        m = self._manifest()
        for p in paths:
            m["artifacts"][p.name] = {"stage": stage, "sha256": _sha(p)}
        m["stages"] = sorted(set(m.get("stages", [])) | {stage}, key=STAGES.index)
        tmp = self._manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(m, indent=1, sort_keys=True))
        os.replace(tmp, self._manifest_path)

    def done(self, stage: str) -> bool:
        """Completed earlier and every artifact it recorded is still on disk."""
        m = self._manifest()
        if stage not in m.get("stages", []):
            return False
        return all(self.path(name).exists() for name, a in m["artifacts"].items() if a["stage"] == stage)

    def path(self, name: str) -> Path:
        return self.out / name

    def seed(self, stage: str) -> int:
        return derive_seed(self.cfg.run.seed, stage)

    # -- loaders --------------------------------------------------------

    @property
    def data_dir(self) -> Path:
        return Path(self.cfg.paths.data_dir) if self.cfg.paths.data_dir else self.out / "data"

    def split(self, name: str) -> list[LabeledSentence]:
        return load_split(self.data_dir, name, self.cfg.data.max_len)

    def vocab(self) -> TokenVocab:
        return TokenVocab.load(self.path("vocab.tsv"))

    def scorer(self) -> AttentionScorer:
        vocab = self.vocab()
        model, _ = load_module(self.path("attn_classifier.ckpt"), AttentionClassifier, "attn-classifier",
                               vocab.hash, self.hash)
        return AttentionScorer(model, vocab)

    def markers(self) -> MarkerVocabulary:
        m = self.cfg.mask
        return MarkerVocabulary.load(self.path("markers.tsv"), m.gamma_c, m.gamma, m.lam)

    def mlm(self, name: str) -> AcmlmNet:
        model, _ = load_module(self.path(name), AcmlmNet, "acmlm", self.vocab().hash, self.hash)
        model.eval()
        return model

    def cnn(self, name: str) -> CnnScorer:
        vocab = self.vocab()
        model, _ = load_module(self.path(name), CnnClassifier, "cnn", vocab.hash, self.hash)
        model.trained = True
        return CnnScorer(model, vocab)

    def _save_mlm(self, model, name, stage):
        save_module(self.path(name), model, "acmlm", self.vocab().hash, config_hash=self.hash, stage=stage)
        return self.path(name)

    # -- stages ---------------------------------------------------------

    def gen_synthetic(self) -> None:
        d = self.cfg.data
        if self.cfg.paths.data_dir:
            log.info("data_dir is set; no synthetic corpus generated")
            self._record("gen-synthetic")
            return
        splits = synthetic_splits(d.synthetic_train, d.synthetic_dev, d.synthetic_test, self.cfg.run.seed)
        files = []
        for name, sents in splits.items():
            save_split(sents, self.data_dir, name)
            files += [self.data_dir / f"{name}.{s}" for s in ("neg", "pos")]
        self._record("gen-synthetic", *files)

    def train_cls(self) -> None:
        c = self.cfg.classifier
        train = self.split("train")
        vocab = TokenVocab.from_sentences(train)
        vocab.save(self.path("vocab.tsv"))
        scorer, acc = train_classifier(train, vocab, self.split("dev"), c.epochs, c.lr, c.batch_size,
                                       self.seed("train-cls"), d_emb=c.d_emb, d_hidden=c.d_hidden, d_attn=c.d_attn,
                                       dropout=c.dropout)
        save_module(self.path("attn_classifier.ckpt"), scorer.model, "attn-classifier", vocab.hash,
                    config_hash=self.hash, heldout_accuracy=acc)
        self._record("train-cls", self.path("vocab.tsv"), self.path("attn_classifier.ckpt"))

    def build_vocab(self) -> None:
        m = self.cfg.mask
        index = build_ngram_index(self.split("train"), m.n_max)
        candidates = build_candidate_vocab(index, m.gamma_c, m.lam)
        candidates.save(self.path("markers_candidates.tsv"))
        refined = refine_vocab(candidates, self.scorer(), m.gamma)
        refined.save(self.path("markers.tsv"))
        log.info("marker vocabulary: %d candidates, %d kept", len(candidates), len(refined))
        self._record("build-vocab", self.path("markers_candidates.tsv"), self.path("markers.tsv"))

    def _marker_source(self):
        method = self.cfg.mask.method
        vocab = self.markers() if method != "attention" else None
        scorer = self.scorer() if method != "frequency" else None
        return vocab, scorer

    def mask(self) -> None:
        m = self.cfg.mask
        vocab, scorer = self._marker_source()
        paths = []
        for split in ("train", "test"):
            records = mask_corpus(self.split(split), m.method, vocab, scorer, m.min_content)
            n_skip = sum(r.provenance == SKIPPED for r in records)
            log.info("masked %s: %d sentences, %d skipped", split, len(records), n_skip)
            write_mask_records(records, self.path(f"masked_{split}.tsv"))
            paths.append(self.path(f"masked_{split}.tsv"))
        self._record("mask", *paths)

    def masked(self, split: str):
        records = read_mask_records(self.path(f"masked_{split}.tsv"))
        return [r.masked for r in records if r.masked is not None], records

    def pretrain_mlm(self) -> None:
        c = self.cfg.mlm
        model = acmlm.pretrain_mlm(self.split("train"), self.vocab(), c.mask_rate, c.pretrain_epochs, c.lr,
                                   c.batch_size, self.seed("pretrain-mlm"), **self._mlm_sizes())
        self._record("pretrain-mlm", self._save_mlm(model, "mlm_pretrain.ckpt", "pretrain"))

    def _mlm_sizes(self) -> dict:
        c = self.cfg.mlm
        return dict(max_len=self.cfg.data.max_len, d_model=c.d_model, n_heads=c.n_heads, d_ff=c.d_ff,
                    n_layers=c.n_layers, dropout=c.dropout, norm_first=c.norm_first)

    def train_mlm(self) -> None:
        c = self.cfg.mlm
        model = self.mlm("mlm_pretrain.ckpt")
        if self.cfg.ss.schedule == "phased":
            masked, _ = self.masked("train")
            model = acmlm.train_reconstruction(masked, model, self.vocab(), c.rec_epochs, c.lr, c.batch_size,
                                               self.seed("train-mlm"))
        self._record("train-mlm", self._save_mlm(model, "acmlm_rec.ckpt", "rec"))

    def _discriminator(self) -> CnnScorer:
        if not self.path("discriminator.ckpt").exists():
            c = self.cfg.cnn
            scorer = train_cnn(self.split("train"), self.vocab(), c.epochs, c.lr, c.batch_size,
                               self.seed("discriminator"), d_emb=c.d_emb, n_filters=c.n_filters)
            save_module(self.path("discriminator.ckpt"), scorer.model, "cnn", self.vocab().hash,
                        config_hash=self.hash, role="discriminator")
            self._record("finetune-ss", self.path("discriminator.ckpt"))
        return self.cnn("discriminator.ckpt")

    def finetune(self, eta: float) -> AcmlmNet:
        """The constrained phase at ``eta``; ``eta == 0`` is the matched-budget AC-MLM baseline."""
        c, s = self.cfg.mlm, self.cfg.ss
        epochs = s.epochs if s.schedule == "phased" else c.rec_epochs + s.epochs
        masked, _ = self.masked("train")
        return acmlm.finetune_ss(masked, self.mlm("acmlm_rec.ckpt"), self.vocab(), self._discriminator().model,
                                 eta, s.tau, epochs, c.lr, c.batch_size, self.seed("finetune-ss"))

    def finetune_ss(self) -> None:
        outputs = [self._save_mlm(self.finetune(0.0), "acmlm_base.ckpt", "rec")]
        if self.cfg.ss.enabled:
            outputs.append(self._save_mlm(self.finetune(self.cfg.ss.eta), "acmlm_ss.ckpt", "ss"))
        self._record("finetune-ss", *outputs)

    def models(self) -> list[tuple[str, str, str]]:
        """``(tag, checkpoint, suffix)`` for each model to transfer with; the last one is final."""
        out = [(BASE, "acmlm_base.ckpt", "_base" if self.cfg.ss.enabled else "")]
        if self.cfg.ss.enabled:
            out.append((SS, "acmlm_ss.ckpt", ""))
        return out

    def _transfer_with(self, model: AcmlmNet):
        masked, records = self.masked("test")
        results = acmlm.infill_batch(masked, [1 - m.attribute for m in masked], model, self.vocab())
        return results, records

    def transfer(self) -> None:
        paths = []
        for tag, ckpt, suffix in self.models():
            results, _ = self._transfer_with(self.mlm(ckpt))
            p = self.path(f"transfer{suffix}.tsv")
            p.write_text("".join(
                f"{r.source.original.text}\t{r.source.text}\t{attribute_name(r.target)}\t{r.text}\n" for r in results
            ), encoding="utf-8")
            paths.append(p)
        self._record("transfer", *paths)

    def eval_classifier(self) -> CnnScorer:
        if not self.path("eval_classifier.ckpt").exists():
            c = self.cfg.cnn
            scorer = train_cnn(self.split("dev"), self.vocab(), c.epochs, c.lr, c.batch_size,
                               self.seed("eval-classifier"), d_emb=c.d_emb, n_filters=c.n_filters)
            save_module(self.path("eval_classifier.ckpt"), scorer.model, "cnn", self.vocab().hash,
                        config_hash=self.hash, role="evaluation")
            self._record("evaluate", self.path("eval_classifier.ckpt"))
        return self.cnn("eval_classifier.ckpt")

    def read_transfers(self, suffix: str):
        """Rebuild transfer results and their mask provenance from ``transfer<suffix>.tsv``."""
        _, records = self.masked("test")
        prov = {(r.sentence.text, r.masked.text): r.provenance for r in records if r.masked is not None}
        results, provenance = [], []
        for line in self.path(f"transfer{suffix}.tsv").read_text(encoding="utf-8").splitlines():
            src, masked_text, target, out = line.split("\t")
            tgt = parse_attribute(target)
            sent = LabeledSentence(tuple(src.split(" ")), 1 - tgt)
            positions = [i for i, t in enumerate(masked_text.split(" ")) if t == MASK]
            tag = prov.get((src, masked_text), "attention")
            masked = apply_mask(sent, positions, tag.split(":")[0])
            results.append(acmlm.TransferResult(tuple(out.split(" ")), None, tgt, masked))
            provenance.append(tag)
        return results, provenance

    def _report(self, tag: str, results, provenance) -> TransferReport:
        _, records = self.masked("test")
        n_skipped = sum(r.provenance == SKIPPED for r in records)
        return evaluate_transfers(results, self.eval_classifier(), tag, self.cfg.flat(), self.hash,
                                  provenance, n_skipped)

    def evaluate(self) -> TransferReport:
        reports = []
        paths = []
        for tag, _, suffix in self.models():
            results, prov = self.read_transfers(suffix)
            rep = self._report(tag, results, prov)
            p = self.path(f"report{suffix}.txt")
            rep.save(p)
            reports.append(rep)
            paths.append(p)
            log.info("%s: accuracy %.4f self-BLEU %.4f", tag, rep.accuracy, rep.bleu)
        plot_reports(reports, self.path("report.png"))
        self._record("evaluate", *paths, self.path("report.png"))
        return reports[-1]

    def sweep(self) -> list:
        def run(eta: float):
            results, records = self._transfer_with(self.finetune(eta))
            prov = [r.provenance for r in records if r.masked is not None]
            rep = self._report(SS if eta else BASE, results, prov)
            log.info("sweep eta=%g accuracy %.4f self-BLEU %.4f", eta, rep.accuracy, rep.bleu)
            return rep.accuracy, rep.bleu

        rows = sweep_eta(self.cfg.ss.etas, run)
        write_sweep_csv(rows, self.path("sweep.csv"))
        plot_tradeoff(rows, self.path("sweep.png"))
        self._record("sweep", self.path("sweep.csv"), self.path("sweep.png"))
        return rows

    # -- driver ---------------------------------------------------------

    def stage_fn(self, stage: str) -> Callable[[], object]:
        return {
            "gen-synthetic": self.gen_synthetic, "train-cls": self.train_cls, "build-vocab": self.build_vocab,
            "mask": self.mask, "pretrain-mlm": self.pretrain_mlm, "train-mlm": self.train_mlm,
            "finetune-ss": self.finetune_ss, "transfer": self.transfer, "evaluate": self.evaluate,
            "sweep": self.sweep,
        }[stage]

    def needed(self, stage: str) -> bool:
        if stage == "build-vocab":
            return self.cfg.mask.method != "attention"
        return True

    def run_stage(self, stage: str, force: bool = False):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        self._check_config()
        if not self.path("config.cfg").exists():
            self.cfg.save(self.path("config.cfg"))
        if not self.needed(stage):
            return None
        try:
            return self.stage_fn(stage)()
        except (MixedConfigError, KeyboardInterrupt):
            raise
        except Exception as exc:
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc

    def run(self, through: str = DEFAULT_LAST):
        """Run every stage up to ``through``, skipping those already completed."""
        if through not in STAGES:
            raise ValueError(f"unknown stage {through!r}")
        for stage in STAGES[:STAGES.index(through) + 1]:
            if self.done(stage):
                continue
            log.info("stage %s", stage)
            self.run_stage(stage)
        return TransferReport.read_header(self.path("report.txt")) if self.path("report.txt").exists() else None

    # -- ad hoc ---------------------------------------------------------

    def transfer_text(self, text: str, target: int | str | None = None) -> tuple[str, str, str]:
        """Transfer one raw sentence; the source attribute is inferred by the attention classifier."""
        m = self.cfg.mask
        vocab, scorer = self._marker_source()
        if scorer is None:
            scorer = self.scorer()
        toks = tuple(tokenize(text))[:self.cfg.data.max_len]
        source_attr = int(scorer.attribute_probs([toks])[0].argmax())
        target = 1 - source_attr if target is None else parse_attribute(target)
        rec = mask_sentence(LabeledSentence(toks, source_attr), m.method, vocab, scorer, m.min_content)
        if rec.masked is None:
            return " ".join(toks), " ".join(toks), " ".join(toks)
        ckpt = self.models()[-1][1]
        res = acmlm.infill(rec.masked, target, self.mlm(ckpt), self.vocab())
        return " ".join(toks), rec.masked.text, res.text


def sweep_rows(out: str | Path):
    return read_sweep_csv(Path(out) / "sweep.csv")

