"""End-to-end orchestration behind the command line: one fold, one step per call."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import readmission as R
from .baselines import BowFeaturizer, select_l2
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cohort import AdmissionRecord, FoldSplit, attach_notes, fold_split, label_readmissions, split_folds
from .config import RunConfig
from .encoder import EncoderConfig, init_params
from .metrics import ScoredLabels, readmission_report, write_scored_labels
from .preprocess import normalize, preprocess_note
from .pretrain import run_pretraining, write_metrics_log
from .records import read_admissions, read_notes
from .tokenizer import Vocabulary, build_vocab, encode_ids

log = logging.getLogger(__name__)


@dataclass
class Cohort:
    admissions: dict[str, AdmissionRecord]
    labels: dict[str, int]
    split: FoldSplit

    def records(self, ids) -> list[AdmissionRecord]:
        return [self.admissions[a] for a in ids]


def load_cohort(cfg: RunConfig) -> Cohort:
    admissions = read_admissions(cfg.paths.admissions)
    attach_notes(admissions, read_notes(cfg.paths.notes))
    labels = {la.admission_id: la.readmit for la in label_readmissions(admissions)}
    if not labels:
        raise ValueError("no labelable admissions in the cohort")
    split = fold_split(split_folds(list(labels), cfg.num_folds, cfg.seed), cfg.fold, cfg.seed)
    return Cohort({a.admission_id: a for a in admissions}, labels, split)


def summary_sentences(admissions, rules=None) -> list[str]:
    """Cleaned sentences of each admission's discharge summaries, in admission then chart order."""
    out = []
    for adm in admissions:
        for note in R.select_notes(adm, "discharge"):
            out.extend(preprocess_note(note, *([rules] if rules else [])).sentences)
    return out


def build_fold_vocab(cfg: RunConfig, cohort: Cohort | None = None) -> Vocabulary:
    """Vocabulary learned from training-fold discharge summaries only."""
    cohort = cohort or load_cohort(cfg)
    vocab = build_vocab(summary_sentences(cohort.records(cohort.split.train)), cfg.vocab_size)
    vocab.save(cfg.paths.vocab)
    return vocab


def _encoder_config(cfg: RunConfig, vocab: Vocabulary) -> EncoderConfig:
    return EncoderConfig.from_dict({**cfg.encoder.to_dict(), "vocab_size": len(vocab)})


def load_vocab_for(ckpt_digest: str, path) -> Vocabulary:
    vocab = Vocabulary.load(path)
    if ckpt_digest and vocab.digest() != ckpt_digest:
        raise CheckpointError(f"vocabulary {path} does not match the checkpoint's vocabulary digest")
    return vocab


def pretrain(cfg: RunConfig) -> dict:
    cohort = load_cohort(cfg)
    vocab = Vocabulary.load(cfg.paths.vocab)
    enc = _encoder_config(cfg, vocab)
    sentences = [encode_ids(s, vocab) for s in summary_sentences(cohort.records(cohort.split.train))]
    result = run_pretraining(sentences, vocab, enc, cfg.pretrain.schedule(cfg.seed))
    save_checkpoint(cfg.paths.pretrained, enc, result.params, vocab.digest(), {"stage": "pretrain"})
    write_metrics_log(result.history, cfg.paths.metrics_log)
    return result.final


def finetune(cfg: RunConfig) -> R.FinetuneResult:
    cohort = load_cohort(cfg)
    ft = cfg.finetune
    vocab = Vocabulary.load(cfg.paths.vocab)
    if Path(cfg.paths.pretrained).exists():
        ckpt = load_checkpoint(cfg.paths.pretrained)
        load_vocab_for(ckpt.vocab_digest, cfg.paths.vocab)
        enc = ckpt.config
        params = {k: v for k, v in ckpt.params.items() if not k.startswith(("mlm.", "nsp."))}
    else:
        log.warning("no pretrained checkpoint at %s; fine-tuning from random initialization", cfg.paths.pretrained)
        enc = _encoder_config(cfg, vocab)
        params = init_params(enc, cfg.seed)
    params.update(R.init_head(enc, ft.head_mode, cfg.seed))
    model = R.ReadmissionModel(enc, vocab, params)
    train = R.build_examples(cohort.records(cohort.split.train), cohort.labels, vocab, enc.max_seq_len, ft.mode)
    val = R.build_examples(cohort.records(cohort.split.validation), cohort.labels, vocab, enc.max_seq_len, ft.mode)
    result = R.finetune(model, train, val, ft.epochs, ft.batch_size, ft.learning_rate, cfg.seed)
    save_checkpoint(cfg.paths.finetuned, enc, model.params, vocab.digest(),
                    {"stage": "finetune", "head_mode": ft.head_mode, "mode": ft.mode, "best_epoch": result.best_epoch})
    return result


def load_model(cfg: RunConfig) -> R.ReadmissionModel:
    ckpt = load_checkpoint(cfg.paths.finetuned)
    vocab = load_vocab_for(ckpt.vocab_digest, cfg.paths.vocab)
    if not any(k.startswith("head.") for k in ckpt.params):
        raise CheckpointError(f"{cfg.paths.finetuned} has no readmission head (is it a pretrained checkpoint?)")
    return R.ReadmissionModel(ckpt.config, vocab, ckpt.params)


def predict(cfg: RunConfig, mode: str | int | None = None, split: str = "test") -> list[R.PatientPrediction]:
    cohort = load_cohort(cfg)
    model = load_model(cfg)
    mode = cfg.finetune.mode if mode is None else mode
    ids = list(cohort.labels) if split == "all" else getattr(cohort.split, split)
    preds = [R.predict_patient(cohort.admissions[a], model, mode, cfg.finetune.c) for a in ids]
    R.write_predictions(preds, cfg.paths.predictions)
    return preds


def join_predictions(risks: dict[str, float | None], labels: dict[str, int]) -> ScoredLabels:
    keys = [a for a in sorted(risks) if risks[a] is not None and a in labels]
    if not keys:
        raise ValueError("no scorable predictions have labels")
    return ScoredLabels(tuple(float(risks[a]) for a in keys), tuple(labels[a] for a in keys))


def _note_text(adm: AdmissionRecord) -> str:
    return " ".join(normalize(n.text) for n in R.select_notes(adm, "discharge"))


def baseline_bow(cfg: RunConfig, max_features: int = 5000) -> dict[str, float]:
    """Bag-of-words logistic regression on the same fold; writes test scores and returns test metrics."""
    cohort = load_cohort(cfg)
    sp = cohort.split
    texts = {a: _note_text(cohort.admissions[a]) for a in sp.train + sp.validation + sp.test}
    bow = BowFeaturizer.fit([texts[a] for a in sp.train], max_features)

    def xy(ids):
        return bow.transform([texts[a] for a in ids]), np.array([cohort.labels[a] for a in ids])

    model = select_l2(*xy(sp.train), *xy(sp.validation))
    X_test, y_test = xy(sp.test)
    data = ScoredLabels(tuple(float(p) for p in model.predict_proba(X_test)), tuple(int(v) for v in y_test))
    write_scored_labels(data, cfg.paths.baseline_predictions)
    return {**readmission_report(data.scores, data.labels), "l2": model.l2}
