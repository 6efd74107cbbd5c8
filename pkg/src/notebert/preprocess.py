"""Cleaning and rule-based sentence segmentation for clinical notes."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

DEID_PATTERN = r"\[\*\*.*?\*\*\]"

# (pattern, replacement), matched case-insensitively, applied in order
ABBREVIATIONS: tuple[tuple[str, str], ...] = (
    (r"(?<!\w)m\.d\.", "MD"),
    (r"(?<!\w)dr\.", "Dr"),
)

SPECIAL_RUNS: tuple[str, ...] = (r"={2,}", r"-{2,}")

# multi-level enumeration markers such as "1.2." or "3.1.4."
ENUMERATION = r"(?<!\S)\d+\.(?:\d+\.)+(?=\s|$)"

# words ending in "." that do not end a sentence (checked after lowercasing)
NON_TERMINAL_WORDS: tuple[str, ...] = (
    "p.o.", "q.d.", "b.i.d.", "t.i.d.", "q.i.d.", "p.r.n.", "q.h.s.", "i.v.",
    "e.g.", "i.e.", "vs.", "approx.", "mr.", "mrs.", "ms.", "st.",
)
NON_TERMINAL_PATTERNS: tuple[str, ...] = (
    r"\d+\.",                                               # bare number, e.g. "2." before "5"
    r"\d+(?:\.\d+)?(?:mg|mcg|g|ml|meq|units?|cc|l)\.",      # dose strings, e.g. "20mg."
    r"(?:[a-z]\.){2,}",                                     # dotted abbreviations
)

MIN_WORDS = 20


@dataclass(frozen=True)
class PreprocessRules:
    deid_pattern: str = DEID_PATTERN
    abbreviations: tuple[tuple[str, str], ...] = ABBREVIATIONS
    special_runs: tuple[str, ...] = SPECIAL_RUNS
    enumeration: str = ENUMERATION
    non_terminal_words: tuple[str, ...] = NON_TERMINAL_WORDS
    non_terminal_patterns: tuple[str, ...] = NON_TERMINAL_PATTERNS
    min_words: int = MIN_WORDS


DEFAULT_RULES = PreprocessRules()


@dataclass
class RawNote:
    note_id: str
    admission_id: str
    text: str
    charttime: float | None = None
    category: str = "note"

    def __post_init__(self):
        if self.text is None:
            raise ValueError(f"note {self.note_id}: text must not be null")


@dataclass
class SegmentedNote:
    note_id: str
    sentences: list[str] = field(default_factory=list)


def _normalize_once(text: str, rules: PreprocessRules) -> str:
    text = text.replace("\r", " ").replace("\n", " ")
    text = re.sub(rules.deid_pattern, " ", text, flags=re.DOTALL)
    for pattern, repl in rules.abbreviations:
        text = re.sub(pattern, repl, text, flags=re.IGNORECASE)
    for pattern in rules.special_runs:
        text = re.sub(pattern, " ", text)
    text = re.sub(rules.enumeration, " ", text)
    text = text.lower()
    return " ".join(text.split())


def normalize(text: str, rules: PreprocessRules = DEFAULT_RULES) -> str:
    """Lowercase, strip de-id brackets, rewrite abbreviations, drop separator runs.

    Steps repeat until the text stops changing, which makes the function
    idempotent even when one removal exposes another match.
    """
    prev = None
    while text != prev:
        prev, text = text, _normalize_once(text, rules)
    return text


def _is_terminal(word: str, next_word: str | None, rules: PreprocessRules) -> bool:
    if word[-1] not in ".!?":
        return False
    if word[-1] != ".":
        return True
    if word in rules.non_terminal_words:
        return False
    for pattern in rules.non_terminal_patterns:
        if re.fullmatch(pattern, word):
            # a bare number only guards when the next word continues it
            if pattern == r"\d+\." and not (next_word and next_word[0].isdigit()):
                return True
            return False
    return True


def segment(text: str, rules: PreprocessRules = DEFAULT_RULES) -> list[str]:
    """Split normalized text on terminal punctuation followed by whitespace."""
    words = text.split()
    sentences: list[str] = []
    current: list[str] = []
    for i, word in enumerate(words):
        current.append(word)
        nxt = words[i + 1] if i + 1 < len(words) else None
        if nxt is not None and _is_terminal(word, nxt, rules):
            sentences.append(" ".join(current))
            current = []
    if current:
        sentences.append(" ".join(current))
    return sentences


def fuse_short_segments(sentences: Sequence[str], min_words: int = MIN_WORDS) -> list[str]:
    """Fuse segments shorter than ``min_words`` into their predecessor.

    A short leading segment has no predecessor and fuses into its successor.
    """
    out: list[str] = []
    counts: list[int] = []
    for s in sentences:
        n = len(s.split())
        if n == 0:
            continue
        if out and n < min_words:
            out[-1] = f"{out[-1]} {s}"
            counts[-1] += n
        else:
            out.append(s)
            counts.append(n)
    if len(out) > 1 and counts[0] < min_words:
        out[1] = f"{out[0]} {out[1]}"
        out.pop(0)
    return out


def preprocess_note(note: RawNote, rules: PreprocessRules = DEFAULT_RULES) -> SegmentedNote:
    sentences = fuse_short_segments(segment(normalize(note.text, rules), rules), rules.min_words)
    return SegmentedNote(note.note_id, sentences)
