"""Attention-weight extraction and heatmap export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, forward
from .tokenizer import Vocabulary, encode


@dataclass
class AttentionMap:
    layer: int
    head: int
    tokens: list[str]
    weights: np.ndarray  # [query, key]
    queries: np.ndarray | None = None
    keys: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.tokens)
        if self.weights.shape != (n, n):
            raise ValueError(f"weights shape {self.weights.shape} does not match {n} tokens")


def attention_maps(sentence: str, vocab: Vocabulary, params, config: EncoderConfig,
                   add_special_tokens: bool = False) -> list[AttentionMap]:
    """One map per (layer, head), captured post-softmax during an eval-mode forward pass.

    By default only the sentence's own subword tokens are fed, so every query and
    key is a token of the sentence.
    """
    if not sentence.strip():
        raise ValueError("empty sentence")
    tokens = encode(sentence, vocab)
    if add_special_tokens:
        tokens = ["[CLS]", *tokens, "[SEP]"]
    if len(tokens) > config.max_seq_len:
        raise ValueError(f"sentence has {len(tokens)} tokens, more than max_seq_len {config.max_seq_len}")
    ids = np.array([[vocab.id(t) for t in tokens]])
    n = ids.shape[1]
    with T.no_grad():
        out = forward(ids, np.zeros_like(ids), np.ones((1, n), dtype=bool), params, config, capture_attention=True)
    maps = []
    for layer, cap in enumerate(out.attention):
        for head in range(config.num_heads):
            maps.append(AttentionMap(layer, head, list(tokens), cap["weights"][0, head].copy(),
                                     cap["q"][0, head].copy(), cap["k"][0, head].copy()))
    return maps


def recompute_weights(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """``softmax(q K^T / sqrt(d))`` for every query row, from saved projections."""
    scores = queries @ keys.T / math.sqrt(queries.shape[-1])
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def top_attended(amap: AttentionMap, k: int) -> list[tuple[str, str, float]]:
    """The ``k`` heaviest (query, key) cells; ties resolve by row then column."""
    if k < 1:
        raise ValueError("k must be at least 1")
    n = len(amap.tokens)
    flat = amap.weights.reshape(-1)
    order = sorted(range(flat.size), key=lambda i: (-flat[i], i))[:k]
    return [(amap.tokens[i // n], amap.tokens[i % n], float(flat[i])) for i in order]


def export_heatmap(amap: AttentionMap, path, svg_path=None, cell: int = 24) -> None:
    """Write the map as CSV (rows = query tokens, columns = key tokens), optionally as SVG.

    The SVG puts query tokens on the x-axis and key tokens on the y-axis, darker
    cells meaning heavier weight.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query\\key", *amap.tokens])
        for tok, row in zip(amap.tokens, amap.weights):
            w.writerow([tok, *(repr(float(x)) for x in row)])
    if svg_path is not None:
        Path(svg_path).write_text(render_svg(amap, cell), encoding="utf-8")


def read_heatmap(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    tokens = rows[0][1:]
    weights = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return tokens, weights


def render_svg(amap: AttentionMap, cell: int = 24) -> str:
    n = len(amap.tokens)
    margin = 8 * max((len(t) for t in amap.tokens), default=1) + 10
    size = margin + n * cell + 4
    wmax = amap.weights.max() if amap.weights.size and amap.weights.max() > 0 else 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-size="11" '
             f'font-family="monospace">']
    for qi in range(n):
        for ki in range(n):
            level = int(round(255 * (1.0 - amap.weights[qi, ki] / wmax)))
            parts.append(f'<rect class="cell" x="{margin + qi * cell}" y="{ki * cell}" width="{cell}" '
                         f'height="{cell}" fill="rgb({level},{level},{level})"/>')
    for i, tok in enumerate(amap.tokens):
        t = escape(tok)
        parts.append(f'<text x="{margin - 4}" y="{i * cell + cell * 0.7:.1f}" text-anchor="end">{t}</text>')
        x = margin + i * cell + cell / 2
        y = n * cell + 6
        parts.append(f'<text x="{x:.1f}" y="{y}" transform="rotate(90 {x:.1f} {y})">{t}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def row_sums(maps: Sequence[AttentionMap]) -> np.ndarray:
    return np.concatenate([m.weights.sum(axis=1) for m in maps])
