"""Subword vocabulary learning and encoding.

Merges are learned BPE-style over word-internal symbol sequences, and text is
encoded WordPiece-style: greedy longest match per word, with ``##`` marking
pieces that continue a word.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
CONT = "##"


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"vocabulary must start with the special tokens {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        self.max_piece = max(len(t) for t in tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def cls_id(self) -> int:
        return self.index[CLS]

    @property
    def sep_id(self) -> int:
        return self.index[SEP]

    @property
    def mask_id(self) -> int:
        return self.index[MASK]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.index[s] for s in SPECIALS)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def _word_symbols(word: str) -> tuple[str, ...]:
    return (word[0],) + tuple(CONT + c for c in word[1:])


def _join(a: str, b: str) -> str:
    return a + b[len(CONT):]


def build_vocab(corpus: Iterable[str], target_size: int, num_merges: int | None = None) -> Vocabulary:
    """Learn a merge vocabulary of at most ``target_size`` entries.

    Every character seen in ``corpus`` is present in both its word-initial and
    continuation form. Ties between equally frequent pairs go to the pair that
    first occurs earliest in the corpus.
    """
    word_counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    for sentence in corpus:
        for w in sentence.split():
            word_counts[w] += 1
            first_seen.setdefault(w, len(first_seen))
    if not word_counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")

    chars = sorted({c for w in word_counts for c in w})
    base = [c for c in chars] + [CONT + c for c in chars]
    base = [t for t in base if t not in SPECIALS]
    if target_size <= len(base) + len(SPECIALS):
        raise ValueError(
            f"target_size {target_size} must exceed the {len(base)} character tokens plus {len(SPECIALS)} specials")

    tokens: list[str] = list(SPECIALS) + base
    known = set(tokens)
    words = sorted(word_counts, key=first_seen.__getitem__)
    seqs = {w: _word_symbols(w) for w in words}
    budget = target_size - len(tokens)
    if num_merges is not None:
        budget = min(budget, num_merges)

    merges = 0
    while merges < budget:
        pair_counts: Counter[tuple[str, str]] = Counter()
        pair_order: dict[tuple[str, str], int] = {}
        for w in words:
            sym = seqs[w]
            for i in range(len(sym) - 1):
                pair = (sym[i], sym[i + 1])
                pair_counts[pair] += word_counts[w]
                pair_order.setdefault(pair, len(pair_order))
        candidates = [(c, -pair_order[p], p) for p, c in pair_counts.items() if _join(*p) not in SPECIALS]
        if not candidates:
            break
        _, _, best = max(candidates)
        merged = _join(*best)
        for w in words:
            sym = seqs[w]
            if len(sym) < 2:
                continue
            out: list[str] = []
            i = 0
            while i < len(sym):
                if i + 1 < len(sym) and (sym[i], sym[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(sym[i])
                    i += 1
            seqs[w] = tuple(out)
        if merged not in known:
            tokens.append(merged)
            known.add(merged)
        merges += 1
    return Vocabulary(tokens)


def encode_word(word: str, vocab: Vocabulary) -> list[str]:
    pieces: list[str] = []
    start = 0
    while start < len(word):
        prefix = CONT if start else ""
        end = min(len(word), start + vocab.max_piece)
        piece = None
        while end > start:
            cand = prefix + word[start:end]
            # a word-initial piece must not look like a continuation
            if cand in vocab and (start or not cand.startswith(CONT)):
                piece = cand
                break
            end -= 1
        if piece is None:
            piece = UNK
            end = start + 1
        pieces.append(piece)
        start = end
    return pieces


def encode(sentence: str, vocab: Vocabulary) -> list[str]:
    """Tokenize a normalized sentence into vocabulary pieces."""
    out: list[str] = []
    for w in sentence.split():
        out.extend(encode_word(w, vocab))
    return out


def encode_ids(sentence: str, vocab: Vocabulary) -> list[int]:
    return [vocab.id(t) for t in encode(sentence, vocab)]


def decode(tokens: Sequence[str]) -> str:
    words: list[str] = []
    for t in tokens:
        if t in (CLS, SEP, PAD):
            continue
        if t.startswith(CONT) and words:
            words[-1] += t[len(CONT):]
        else:
            words.append(t)
    return " ".join(words)


@dataclass
class TokenSequence:
    ids: list[int]
    segment_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.segment_ids:
            self.segment_ids = [0] * len(self.ids)
        if len(self.segment_ids) != len(self.ids):
            raise ValueError("ids and segment_ids differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def positions(self) -> list[int]:
        return list(range(len(self.ids)))


def encode_pair(a: Sequence[int] | str, b: Sequence[int] | str, vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Lay out ``[CLS] a [SEP] b [SEP]``, trimming the longer side first.

    ``a`` and ``b`` are sentences or already-encoded token-id sequences.
    """
    if isinstance(a, str):
        a = encode_ids(a, vocab)
    if isinstance(b, str):
        b = encode_ids(b, vocab)
    if max_len < 5:
        raise ValueError(f"max_len {max_len} leaves no room for specials and both sides")
    if not a or not b:
        raise ValueError("both sides of a pair must be non-empty")
    a, b = list(a), list(b)
    while len(a) + len(b) + 3 > max_len:
        if len(a) >= len(b):
            a.pop()
        else:
            b.pop()
    ids = [vocab.cls_id, *a, vocab.sep_id, *b, vocab.sep_id]
    seg = [0] * (len(a) + 2) + [1] * (len(b) + 1)
    return TokenSequence(ids, seg)


def encode_single(ids: Sequence[int], vocab: Vocabulary) -> TokenSequence:
    return TokenSequence([vocab.cls_id, *ids, vocab.sep_id])


def pad_batch(seqs: Sequence[TokenSequence], pad_id: int, length: int | None = None):
    """Stack sequences into ``(ids, segment_ids, valid_mask)`` arrays of shape ``[B, n]``."""
    n = length or max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), pad_id, dtype=np.int64)
    seg = np.zeros((len(seqs), n), dtype=np.int64)
    valid = np.zeros((len(seqs), n), dtype=bool)
    for i, s in enumerate(seqs):
        if len(s) > n:
            raise ValueError(f"sequence of length {len(s)} exceeds batch length {n}")
        ids[i, : len(s)] = s.ids
        seg[i, : len(s)] = s.segment_ids
        valid[i, : len(s)] = True
    return ids, seg, valid
