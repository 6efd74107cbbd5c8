"""Readmission fine-tuning, subsequence splitting and patient-level risk aggregation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .cohort import AdmissionRecord, cutoff_filter
from .encoder import ACTIVATIONS, EncoderConfig, forward
from .metrics import auroc
from .optim import Adam
from .preprocess import DEFAULT_RULES, PreprocessRules, RawNote, preprocess_note
from .rng import stream
from .tensor import Tensor
from .tokenizer import TokenSequence, Vocabulary, encode_ids, pad_batch

log = logging.getLogger(__name__)

HEAD_MODES = ("linear", "mlp")


def mlp_hidden_dim(model_dim: int) -> int:
    """Hidden width keeping the 768:2048 proportion at any model size."""
    return int(round(model_dim * 8 / 3))


def init_head(config: EncoderConfig, mode: str, seed: int) -> dict[str, Tensor]:
    if mode not in HEAD_MODES:
        raise ValueError(f"head mode must be one of {HEAD_MODES}")
    rng = stream(seed, "readmission-head-init", mode)
    d, std = config.model_dim, config.init_std

    def w(*shape):
        return T.parameter(rng.normal(0.0, std, size=shape))

    if mode == "linear":
        return {"head.w": w(d, 1), "head.b": T.parameter(np.zeros(1))}
    h = mlp_hidden_dim(d)
    return {
        "head.w1": w(d, h), "head.b1": T.parameter(np.zeros(h)),
        "head.w2": w(h, d), "head.b2": T.parameter(np.zeros(d)),
        "head.w3": w(d, 1), "head.b3": T.parameter(np.zeros(1)),
    }


def head_mode(params: dict[str, Tensor]) -> str:
    return "linear" if "head.w" in params else "mlp"


def head_logits(h_cls: Tensor, params: dict[str, Tensor], activation: str = "gelu") -> Tensor:
    """One logit per row of ``h_cls``."""
    if "head.w" in params:
        out = h_cls @ params["head.w"] + params["head.b"]
    else:
        act = ACTIVATIONS[activation]
        x = act(h_cls @ params["head.w1"] + params["head.b1"])
        x = act(x @ params["head.w2"] + params["head.b2"])
        out = x @ params["head.w3"] + params["head.b3"]
    return out.reshape(h_cls.shape[0])


@dataclass
class ReadmissionModel:
    config: EncoderConfig
    vocab: Vocabulary
    params: dict[str, Tensor]
    rules: PreprocessRules = DEFAULT_RULES

    def predict_proba(self, seqs: Sequence[TokenSequence], batch_size: int = 64) -> np.ndarray:
        probs = []
        with T.no_grad():
            for start in range(0, len(seqs), batch_size):
                chunk = seqs[start:start + batch_size]
                ids, seg, valid = pad_batch(chunk, self.vocab.pad_id)
                out = forward(ids, seg, valid, self.params, self.config)
                logits = head_logits(out.h_cls, self.params, self.config.activation)
                probs.append(T._sigmoid(logits.data))
        return np.concatenate(probs) if probs else np.zeros(0)


# -- subsequences --------------------------------------------------------------

def notes_to_tokens(notes: Sequence[RawNote], vocab: Vocabulary, rules: PreprocessRules = DEFAULT_RULES) -> list[int]:
    """Clean, segment and tokenize notes, concatenated in charttime order."""
    ordered = sorted(notes, key=lambda n: (n.charttime if n.charttime is not None else math.inf, n.note_id))
    ids: list[int] = []
    for note in ordered:
        for sent in preprocess_note(note, rules).sentences:
            ids.extend(encode_ids(sent, vocab))
    return ids


def split_subsequences(tokens: Sequence[int], max_len: int, vocab: Vocabulary) -> list[TokenSequence]:
    """Cut a token stream into consecutive ``[CLS] chunk [SEP]`` sequences of at most ``max_len``."""
    if not tokens:
        raise ValueError("no tokens to split (admission has no usable notes)")
    if max_len < 3:
        raise ValueError("max_len must leave room for [CLS], [SEP] and one token")
    width = max_len - 2
    return [TokenSequence([vocab.cls_id, *tokens[i:i + width], vocab.sep_id])
            for i in range(0, len(tokens), width)]


def aggregate(probs: Sequence[float], c: float = 2.0) -> float:
    """Patient-level risk from per-subsequence probabilities.

    ``(p_max + p_mean * n / c) / (1 + n / c)``, so a patient with many
    subsequences leans toward the mean and a single one returns itself.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        raise ValueError("cannot aggregate zero subsequence probabilities")
    if c <= 0:
        raise ValueError("scaling constant c must be positive")
    n = p.size
    w = n / c
    return float((p.max() + p.mean() * w) / (1.0 + w))


# -- note selection per prediction mode ----------------------------------------

def select_notes(admission: AdmissionRecord, mode: str | int, evaluation: bool = True) -> list[RawNote] | None:
    """Notes visible to the model, or ``None`` when the admission is not scorable.

    ``mode`` is ``"discharge"`` (discharge summaries, falling back to all notes)
    or a cutoff in hours. In cutoff mode, stays discharged within the cutoff are
    only excluded at evaluation time; training still uses their early notes.
    """
    if mode == "discharge":
        summaries = [n for n in admission.notes if n.category == "discharge_summary"]
        return summaries or list(admission.notes)
    cutoff = int(mode)
    if evaluation:
        return cutoff_filter(admission, cutoff)
    cutoff_filter(admission, cutoff)  # validates cutoff value and charttimes
    return [n for n in admission.notes if n.charttime <= cutoff]


@dataclass
class PatientPrediction:
    admission_id: str
    probs: list[float] = field(default_factory=list)
    c: float = 2.0
    scorable: bool = True

    @property
    def n(self) -> int:
        return len(self.probs)

    @property
    def p_max(self) -> float | None:
        return max(self.probs) if self.probs else None

    @property
    def p_mean(self) -> float | None:
        return float(np.mean(self.probs)) if self.probs else None

    @property
    def risk(self) -> float | None:
        return aggregate(self.probs, self.c) if self.scorable and self.probs else None


def predict_patient(admission: AdmissionRecord, model: ReadmissionModel, mode: str | int = "discharge",
                    c: float = 2.0) -> PatientPrediction:
    notes = select_notes(admission, mode)
    if notes is None:
        return PatientPrediction(admission.admission_id, [], c, scorable=False)
    tokens = notes_to_tokens(notes, model.vocab, model.rules)
    if not tokens:
        return PatientPrediction(admission.admission_id, [], c, scorable=False)
    seqs = split_subsequences(tokens, model.config.max_seq_len, model.vocab)
    return PatientPrediction(admission.admission_id, [float(p) for p in model.predict_proba(seqs)], c)


def write_predictions(preds: Sequence[PatientPrediction], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["admission_id", "n", "p_max", "p_mean", "risk", "scorable"])
        for p in preds:
            if p.scorable:
                w.writerow([p.admission_id, p.n, f"{p.p_max:.6f}", f"{p.p_mean:.6f}", f"{p.risk:.6f}", 1])
            else:
                w.writerow([p.admission_id, 0, "", "", "", 0])


def read_predictions(path) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            scorable = row.get("scorable", "1") not in ("0", "false", "False")
            out[row["admission_id"]] = float(row["risk"]) if scorable and row["risk"] != "" else None
    return out


# -- fine-tuning -----------------------------------------------------------------

def build_examples(admissions: Sequence[AdmissionRecord], labels: dict[str, int], vocab: Vocabulary,
                   max_len: int, mode: str | int = "discharge", rules: PreprocessRules = DEFAULT_RULES,
                   evaluation: bool = False) -> list[tuple[TokenSequence, int]]:
    """Subsequences paired with their admission's label."""
    examples = []
    for adm in admissions:
        if adm.admission_id not in labels:
            continue
        notes = select_notes(adm, mode, evaluation)
        if not notes:
            continue
        tokens = notes_to_tokens(notes, vocab, rules)
        if not tokens:
            continue
        for seq in split_subsequences(tokens, max_len, vocab):
            examples.append((seq, labels[adm.admission_id]))
    return examples


@dataclass
class FinetuneResult:
    model: ReadmissionModel
    history: list[dict]
    best_epoch: int


def _batch_loss(batch, model: ReadmissionModel, train: bool, rng) -> Tensor:
    ids, seg, valid = pad_batch([s for s, _ in batch], model.vocab.pad_id)
    y = np.array([lab for _, lab in batch], dtype=np.float64)
    out = forward(ids, seg, valid, model.params, model.config, train=train, rng=rng)
    return T.bce_with_logits(head_logits(out.h_cls, model.params, model.config.activation), y)


def evaluation_loss(examples, model: ReadmissionModel, batch_size: int = 64) -> float:
    total = 0.0
    with T.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start:start + batch_size]
            total += _batch_loss(batch, model, False, None).item() * len(batch)
    return total / len(examples)


def finetune(model: ReadmissionModel, train: Sequence[tuple[TokenSequence, int]],
             validation: Sequence[tuple[TokenSequence, int]], epochs: int = 3, batch_size: int = 32,
             lr: float = 1e-4, seed: int = 0) -> FinetuneResult:
    """Minimize subsequence binary cross-entropy; return the epoch with the lowest validation loss."""
    labels = {lab for _, lab in train}
    if labels != {0, 1}:
        raise ValueError(f"training data must contain both classes, got {sorted(labels)}")
    if not validation:
        raise ValueError("early stopping needs a non-empty validation set")
    names = sorted(model.params)
    opt = Adam([model.params[k] for k in names], lr=lr)
    order_rng = stream(seed, "finetune-order")
    drop_rng = stream(seed, "finetune-dropout")
    best = (math.inf, -1, None)
    history = []
    for epoch in range(epochs):
        order = order_rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [train[i] for i in order[start:start + batch_size]]
            opt.zero_grad()
            loss = _batch_loss(batch, model, True, drop_rng)
            if not math.isfinite(loss.item()):
                raise FloatingPointError(f"non-finite fine-tuning loss in epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val = evaluation_loss(validation, model)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "validation_loss": val})
        log.info("epoch %d train %.4f validation %.4f", epoch, history[-1]["train_loss"], val)
        if val < best[0]:
            best = (val, epoch, {k: p.data.copy() for k, p in model.params.items()})
    for k, arr in best[2].items():
        model.params[k].data[...] = arr
    return FinetuneResult(model, history, best[1])


def sweep_c(predictions: Sequence[PatientPrediction], labels: dict[str, int],
            grid: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0)) -> tuple[float, dict[float, float]]:
    """Pick the aggregation constant with the best validation AUROC (ties go to the earlier grid value)."""
    scored = [p for p in predictions if p.scorable and p.admission_id in labels]
    y = [labels[p.admission_id] for p in scored]
    results = {c: auroc([aggregate(p.probs, c) for p in scored], y) for c in grid}
    best = max(grid, key=lambda c: (results[c], -grid.index(c)))
    return best, results
