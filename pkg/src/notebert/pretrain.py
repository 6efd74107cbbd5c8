"""Masked language modeling and next-sentence prediction pre-training."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, forward, init_params
from .optim import Adam
from .rng import stream
from .tensor import Tensor
from .tokenizer import TokenSequence, Vocabulary, encode_pair, pad_batch

log = logging.getLogger(__name__)


@dataclass
class PretrainExample:
    sequence: TokenSequence
    mlm_targets: dict[int, int]
    is_next: int


@dataclass
class Stage:
    max_seq_len: int
    num_steps: int
    batch_size: int


@dataclass
class PretrainSchedule:
    stages: list[Stage]
    learning_rate: float = 1e-3
    seed: int = 0
    eval_interval: int = 100
    eval_pairs: int = 200
    holdout: float = 0.1
    mask_rate: float = 0.15

    def __post_init__(self):
        self.stages = [s if isinstance(s, Stage) else Stage(**s) for s in self.stages]
        lens = [s.max_seq_len for s in self.stages]
        if lens != sorted(lens):
            raise ValueError("stages must be ordered by nondecreasing max_seq_len")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_good: dict[str, np.ndarray], history: list[dict]):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.last_good = last_good
        self.history = history


def init_heads(config: EncoderConfig, seed: int) -> dict[str, Tensor]:
    rng = stream(seed, "pretrain-heads-init")
    return {
        "mlm.bias": T.parameter(np.zeros(config.vocab_size)),
        "nsp.w": T.parameter(rng.normal(0.0, config.init_std, size=(config.model_dim, 1))),
        "nsp.b": T.parameter(np.zeros(1)),
    }


# -- data preparation --------------------------------------------------------

def pack_sequences(sentences: Sequence[Sequence[int]], max_len: int) -> list[list[int]]:
    """Greedily pack whole tokenized sentences into segments of at most ``max_len`` tokens."""
    segments: list[list[int]] = []
    current: list[int] = []
    for sent in sentences:
        sent = list(sent)[:max_len]
        if not sent:
            continue
        if current and len(current) + len(sent) > max_len:
            segments.append(current)
            current = []
        current = current + sent
    if current:
        segments.append(current)
    return segments


def make_nsp_pairs(segments: Sequence[Sequence[int]], rng: np.random.Generator) -> Iterator[tuple[list[int], list[int], int]]:
    """Endless stream of (segment A, segment B, is_next) draws, half of them consecutive."""
    if len(segments) < 2:
        raise ValueError("next-sentence pairs need at least two segments")
    n = len(segments)
    while True:
        i = int(rng.integers(n - 1))
        if rng.random() < 0.5:
            yield list(segments[i]), list(segments[i + 1]), 1
        else:
            j = int(rng.integers(n - 1))
            j = j if j < i + 1 else j + 1  # skip the true successor
            yield list(segments[i]), list(segments[j]), 0


def mask_tokens(seq: TokenSequence, rng: np.random.Generator, vocab: Vocabulary, is_next: int = 1,
                rate: float = 0.15, mask_prob: float = 0.8, random_prob: float = 0.1) -> PretrainExample:
    """Select non-special positions at ``rate``; replace 80% with [MASK], 10% with a random token."""
    specials = vocab.special_ids
    candidates = [i for i, t in enumerate(seq.ids) if t not in specials]
    if not candidates:
        raise ValueError("sequence has no maskable tokens")
    picked = [i for i in candidates if rng.random() < rate]
    if not picked:
        picked = [candidates[int(rng.integers(len(candidates)))]]
    ids = list(seq.ids)
    targets: dict[int, int] = {}
    n_regular = len(vocab) - len(specials)
    for i in picked:
        targets[i] = ids[i]
        u = rng.random()
        if u < mask_prob:
            ids[i] = vocab.mask_id
        elif u < mask_prob + random_prob:
            ids[i] = len(specials) + int(rng.integers(n_regular))
    return PretrainExample(TokenSequence(ids, list(seq.segment_ids)), targets, is_next)


def collate(examples: Sequence[PretrainExample], pad_id: int):
    ids, seg, valid = pad_batch([e.sequence for e in examples], pad_id)
    n = ids.shape[1]
    flat_pos, targets = [], []
    for b, e in enumerate(examples):
        for pos in sorted(e.mlm_targets):
            flat_pos.append(b * n + pos)
            targets.append(e.mlm_targets[pos])
    nsp = np.array([e.is_next for e in examples], dtype=np.float64)
    return ids, seg, valid, np.array(flat_pos, dtype=np.int64), np.array(targets, dtype=np.int64), nsp


# -- objective ---------------------------------------------------------------

@dataclass
class PretrainLoss:
    total: Tensor
    mlm: Tensor
    nsp: Tensor
    mlm_logits: Tensor
    nsp_logits: Tensor


def pretrain_loss(hidden: Tensor, flat_pos, targets, nsp_labels, params: dict[str, Tensor]) -> PretrainLoss:
    """Masked-token cross-entropy (per masked token) plus next-sentence binary cross-entropy.

    The vocabulary projection reuses the token embedding matrix.
    """
    b, n, d = hidden.shape
    rows = T.embedding(hidden.reshape(b * n, d), flat_pos)
    mlm_logits = rows @ params["tok_emb"].T + params["mlm.bias"]
    mlm = T.cross_entropy(mlm_logits, targets)
    nsp_logits = (hidden[:, 0, :] @ params["nsp.w"] + params["nsp.b"]).reshape(b)
    nsp = T.bce_with_logits(nsp_logits, nsp_labels)
    return PretrainLoss(mlm + nsp, mlm, nsp, mlm_logits, nsp_logits)


def _step_loss(examples, params, config, vocab, train, rng) -> PretrainLoss:
    ids, seg, valid, flat_pos, targets, nsp = collate(examples, vocab.pad_id)
    out = forward(ids, seg, valid, params, config, train=train, rng=rng)
    return pretrain_loss(out.last, flat_pos, targets, nsp, params)


# -- evaluation --------------------------------------------------------------

def make_eval_examples(segments, vocab: Vocabulary, max_seq_len: int, n_pairs: int, seed: int,
                       rate: float = 0.15) -> list[PretrainExample]:
    rng = stream(seed, "pretrain-eval")
    pairs = make_nsp_pairs(segments, rng)
    out = []
    for _ in range(n_pairs):
        a, b, nxt = next(pairs)
        out.append(mask_tokens(encode_pair(a, b, vocab, max_seq_len), rng, vocab, nxt, rate))
    return out


def evaluate(examples: Sequence[PretrainExample], params, config: EncoderConfig, vocab: Vocabulary,
             batch_size: int = 64) -> tuple[float, float]:
    """Masked-token argmax accuracy and next-sentence accuracy."""
    mlm_hits = mlm_total = nsp_hits = 0
    with T.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            loss = _step_loss(chunk, params, config, vocab, False, None)
            _, _, _, _, targets, nsp = collate(chunk, vocab.pad_id)
            mlm_hits += int((loss.mlm_logits.data.argmax(axis=1) == targets).sum())
            mlm_total += len(targets)
            nsp_hits += int(((loss.nsp_logits.data > 0).astype(float) == nsp).sum())
    return mlm_hits / mlm_total, nsp_hits / len(examples)


# -- training loop -----------------------------------------------------------

@dataclass
class PretrainResult:
    params: dict[str, Tensor]
    config: EncoderConfig
    history: list[dict] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.history[-1]


def snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def run_pretraining(sentences: Sequence[Sequence[int]], vocab: Vocabulary, config: EncoderConfig,
                    schedule: PretrainSchedule, params: dict[str, Tensor] | None = None,
                    eval_sentences: Sequence[Sequence[int]] | None = None) -> PretrainResult:
    """Staged MLM + NSP training with Adam.

    ``sentences`` are token-id lists in corpus order. Unless ``eval_sentences``
    is given, the trailing ``schedule.holdout`` fraction of packed segments is
    held out for the accuracy log (``holdout=0`` evaluates on the training
    segments themselves).
    """
    seed = schedule.seed
    if params is None:
        params = {**init_params(config, seed), **init_heads(config, seed)}
    plist = [params[k] for k in sorted(params)]
    opt = Adam(plist, lr=schedule.learning_rate)
    history: list[dict] = []
    step_losses: list[float] = []
    last_good = snapshot(params)
    step = 0
    for si, stage in enumerate(schedule.stages):
        if stage.max_seq_len > config.max_seq_len:
            raise ValueError(f"stage length {stage.max_seq_len} exceeds model max_seq_len {config.max_seq_len}")
        side = (stage.max_seq_len - 3) // 2
        segments = pack_sequences(sentences, side)
        if eval_sentences is not None:
            train_segs, eval_segs = segments, pack_sequences(eval_sentences, side)
        elif schedule.holdout > 0:
            n_eval = max(2, int(round(len(segments) * schedule.holdout)))
            train_segs, eval_segs = segments[:-n_eval], segments[-n_eval:]
        else:
            train_segs = eval_segs = segments
        eval_examples = make_eval_examples(eval_segs, vocab, stage.max_seq_len, schedule.eval_pairs, seed + si,
                                           schedule.mask_rate)
        data_rng = stream(seed, "pretrain-data", si)
        drop_rng = stream(seed, "pretrain-dropout", si)
        pairs = make_nsp_pairs(train_segs, data_rng)
        running = []
        for _ in range(stage.num_steps):
            examples = []
            for _ in range(stage.batch_size):
                a, b, nxt = next(pairs)
                examples.append(mask_tokens(encode_pair(a, b, vocab, stage.max_seq_len), data_rng, vocab, nxt,
                                            schedule.mask_rate))
            opt.zero_grad()
            loss = _step_loss(examples, params, config, vocab, True, drop_rng)
            value = loss.total.item()
            if not math.isfinite(value):
                raise TrainingDiverged(step, last_good, history)
            loss.total.backward()
            opt.step()
            step += 1
            running.append(value)
            step_losses.append(value)
            if step % schedule.eval_interval == 0 or step == sum(s.num_steps for s in schedule.stages):
                mlm_acc, nsp_acc = evaluate(eval_examples, params, config, vocab)
                history.append({"step": step, "mlm_accuracy": mlm_acc, "nsp_accuracy": nsp_acc,
                                "loss": float(np.mean(running))})
                log.info("step %d loss %.4f mlm %.4f nsp %.4f", step, history[-1]["loss"], mlm_acc, nsp_acc)
                running = []
                last_good = snapshot(params)
    return PretrainResult(params, config, history, step_losses)


def write_metrics_log(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "mlm_accuracy", "nsp_accuracy", "loss"], lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({"step": row["step"], "mlm_accuracy": f"{row['mlm_accuracy']:.4f}",
                             "nsp_accuracy": f"{row['nsp_accuracy']:.4f}", "loss": f"{row['loss']:.6f}"})
