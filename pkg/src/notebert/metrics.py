"""Ranking metrics for readmission scores and similarity metrics for term embeddings."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ScoredLabels:
    """Parallel scores and 0/1 labels, the shared input of every ranking metric."""
    scores: tuple
    labels: tuple

    def __post_init__(self):
        _check(self.scores, self.labels, need_both=False)


def read_scored_labels(path) -> ScoredLabels:
    """CSV with ``score`` and ``label`` columns."""
    scores, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"score", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns score,label")
        for line, row in enumerate(reader, start=2):
            try:
                scores.append(float(row["score"]))
                labels.append(int(row["label"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: bad score/label row") from exc
    return ScoredLabels(tuple(scores), tuple(labels))


def write_scored_labels(data: ScoredLabels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["score", "label"])
        for sc, lab in zip(data.scores, data.labels):
            w.writerow([repr(float(sc)), int(lab)])


def _check(scores, labels, need_both: bool = True):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be non-empty and of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("no positive labels")
    if need_both and n_pos == labels.size:
        raise ValueError("no negative labels")
    return scores, labels


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties counting one half."""
    scores, labels = _check(scores, labels)
    ranks = rankdata(scores)  # average ranks for ties
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    # doubled to keep the numerator an exact integer before the single division
    u2 = int(round(2 * ranks[labels == 1].sum())) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def _threshold_groups(scores, labels):
    """Cumulative (true positives, predicted positives) at each distinct score, descending."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last]
    k = np.arange(1, s.size + 1)[last]
    return tp, k


def _exact_sum(terms: list[Fraction]) -> Fraction:
    """Pairwise sum; keeps intermediate denominators small compared with a running total."""
    if not terms:
        return Fraction(0)
    while len(terms) > 1:
        terms = [terms[i] + terms[i + 1] if i + 1 < len(terms) else terms[i] for i in range(0, len(terms), 2)]
    return terms[0]


def auprc(scores, labels, interpolation: str = "step") -> float:
    """Area under the precision-recall curve.

    ``"step"`` (default) is average precision: the sum over thresholds of the
    recall increment times precision, accumulated as exact fractions so the
    result is the correctly rounded value. ``"trapezoid"`` joins consecutive
    points linearly, starting from (recall 0, first precision); it tends to
    read higher.
    """
    scores, labels = _check(scores, labels, need_both=False)
    tp, k = _threshold_groups(scores, labels)
    precision = tp / k
    if interpolation == "step":
        d_tp = np.diff(np.r_[0, tp])
        terms = [Fraction(int(d) * int(t), int(n)) for d, t, n in zip(d_tp, tp, k) if d]
        return float(_exact_sum(terms) / int(labels.sum()))
    if interpolation == "trapezoid":
        recall = np.r_[0.0, tp / labels.sum()]
        precision = np.r_[precision[0], precision]
        return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2))
    raise ValueError(f"unknown interpolation {interpolation!r}")


def recall_at_precision(scores, labels, min_precision: float = 0.8) -> float:
    """Best recall over thresholds whose precision is at least ``min_precision``; 0 if none."""
    scores, labels = _check(scores, labels, need_both=False)
    tp, k = _threshold_groups(scores, labels)
    ok = tp / k >= min_precision
    if not ok.any():
        return 0.0
    return int(tp[ok].max()) / int(labels.sum())


def rp80(scores, labels) -> float:
    return recall_at_precision(scores, labels, 0.8)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of at least two values")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValueError("pearson correlation undefined for zero variance")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class ConceptPair:
    term_a: str
    term_b: str
    rating: float

    def __post_init__(self):
        if not 1.0 <= self.rating <= 4.0:
            raise ValueError(f"rating {self.rating} outside the 1.0-4.0 scale")


@dataclass
class BenchmarkResult:
    correlation: float
    evaluated: int
    dropped: int
    similarities: list[float]


def concept_benchmark(pairs: Sequence[ConceptPair], embed: Callable[[str], np.ndarray | None]) -> BenchmarkResult:
    """Pearson correlation between physician ratings and embedding cosine similarity.

    ``embed`` returns ``None`` (or raises ``KeyError``/``ValueError``) for a term
    it cannot represent; such pairs are dropped and counted.
    """
    ratings, sims = [], []
    dropped = 0
    for p in pairs:
        try:
            a, b = embed(p.term_a), embed(p.term_b)
        except (KeyError, ValueError):
            a = b = None
        if a is None or b is None:
            dropped += 1
            continue
        ratings.append(p.rating)
        sims.append(cosine(a, b))
    if len(sims) < 2:
        raise ValueError(f"only {len(sims)} evaluable pairs")
    return BenchmarkResult(pearson(ratings, sims), len(sims), dropped, sims)


def read_concept_pairs(path) -> list[ConceptPair]:
    """Read ``term_a, term_b, rating`` rows (tab- or comma-delimited; an optional header is skipped)."""
    text = Path(path).read_text(encoding="utf-8")
    delim = "\t" if "\t" in text else ","
    pairs = []
    for row in csv.reader(text.splitlines(), delimiter=delim):
        if not row or not "".join(row).strip():
            continue
        try:
            rating = float(row[2])
        except (IndexError, ValueError):
            if not pairs:
                continue  # header
            raise ValueError(f"malformed concept pair row: {row}")
        pairs.append(ConceptPair(row[0].strip(), row[1].strip(), rating))
    return pairs


def readmission_report(scores, labels) -> dict[str, float]:
    return {"auroc": auroc(scores, labels), "auprc": auprc(scores, labels), "rp80": rp80(scores, labels)}
