"""Synthetic clinical-style notes and admissions.

The generator writes notes that look enough like ICU documentation to
exercise the cleaning rules (de-id brackets, ``M.D.``/``Dr.``, separator runs,
enumerations, dose strings) and plants a readmission signal whose strength is
controlled by ``signal_rate``.

Every note carries slot sentences of one shared shape. In readmitted stays the
slot is filled, with probability ``signal_rate``, by a risk term
("decompensation", "noncompliance", "deterioration"); otherwise by a neutral
symptom. A share of slot terms (``typo_rate``) in both classes is misspelled
past a six-character prefix, as hurried clinical text often is.
Misspellings are nearly unique, so a word-count model trained on one split
rarely sees them again, while a subword model still shares their prefix pieces.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .cohort import AdmissionRecord, label_readmissions
from .preprocess import RawNote
from .rng import stream

AGES = [str(a) for a in range(45, 90, 3)]
SEXES = ["male", "female"]
CONDITIONS = [
    "congestive heart failure", "atrial fibrillation", "chronic kidney disease", "copd",
    "type 2 diabetes", "hypertension", "coronary artery disease", "pneumonia", "cirrhosis",
    "sepsis", "urinary tract infection", "acute renal failure", "gi bleed", "stroke",
]
SYMPTOMS = [
    "chest pain", "shortness of breath", "fever", "abdominal pain", "cough", "fatigue",
    "nausea", "confusion", "palpitations", "syncope", "weakness", "dizziness",
]
MEDS = [
    ("furosemide", "40mg"), ("metoprolol", "25mg"), ("lisinopril", "10mg"), ("warfarin", "5mg"),
    ("aspirin", "81mg"), ("insulin", "10 units"), ("vancomycin", "1g"), ("ceftriaxone", "1g"),
    ("pantoprazole", "40mg"), ("atorvastatin", "80mg"), ("amiodarone", "200mg"), ("heparin", "5000 units"),
]
FREQS = ["p.o. q.d.", "p.o. b.i.d.", "i.v. q.d.", "p.o. t.i.d.", "p.r.n."]
FINDINGS = [
    "mild pulmonary edema", "a small pleural effusion", "no acute process", "bibasilar atelectasis",
    "cardiomegaly", "a right lower lobe consolidation",
]
LABS = [("creatinine", "1.8"), ("potassium", "5.2"), ("sodium", "131"), ("hemoglobin", "8.4"),
        ("white count", "14.2"), ("bnp", "1200"), ("lactate", "2.5"), ("troponin", "0.4")]
PLACES = ["home", "home with services", "rehab", "a skilled nursing facility"]
UNITS = ["micu", "ccu", "sicu", "csru"]

CLINICAL_TEMPLATES = [
    "patient is a {age} year old {sex} with history of {cond} who presented with {sym}.",
    "{pronoun} was started on {med} {dose} {freq} for {cond}.",
    "vital signs were stable and {sym} improved over the course of the day.",
    "chest x-ray showed {finding}.",
    "labs notable for {lab} of {val}.",
    "{pronoun} was seen by the {unit} team and {cond} was managed medically.",
    "continue {med} {dose} {freq} and monitor {lab} daily.",
    "{pronoun} denies {sym} at this time.",
    "plan to repeat {lab} in the morning and adjust {med} as needed.",
    "exam notable for {finding} without {sym}.",
    "{pronoun} reports {sym} since yesterday evening.",
    "family meeting held to discuss goals of care for {cond}.",
]

GENERAL_TEMPLATES = [
    "the {team} won the game against the {team2} on {day} night.",
    "weather in {city} was {weather} for most of the {period}.",
    "my {relative} bought a new {item} at the market in {city}.",
    "we walked along the {place2} and watched the {animal} near the water.",
    "the concert in {city} started late because of the {weather} weather.",
    "she read a book about the history of {city} during the {period}.",
    "the {team} fans sang loudly after the final whistle on {day}.",
    "his {relative} cooked {food} for dinner while we talked about {city}.",
    "tickets for the {team} match sold out within an hour on {day}.",
    "they planted {plant} in the garden before the {weather} spell.",
]
TEAMS = ["lions", "tigers", "eagles", "sharks", "bears", "wolves", "falcons", "rovers"]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
CITIES = ["paris", "madrid", "oslo", "lisbon", "vienna", "prague", "dublin", "athens"]
WEATHER = ["sunny", "rainy", "windy", "cloudy", "snowy", "foggy"]
PERIODS = ["morning", "afternoon", "weekend", "summer", "winter", "holiday"]
RELATIVES = ["uncle", "aunt", "cousin", "brother", "sister", "grandmother"]
ITEMS = ["bicycle", "guitar", "camera", "jacket", "lamp", "kettle"]
PLACES2 = ["river", "harbor", "beach", "canal", "lake shore"]
ANIMALS = ["ducks", "swans", "gulls", "otters", "herons"]
FOODS = ["pasta", "soup", "fish", "curry", "pancakes", "stew"]
PLANTS = ["tulips", "tomatoes", "roses", "herbs", "sunflowers"]

RISK_TERMS = ["decompensation", "noncompliance", "deterioration"]
NEUTRAL_TERMS = ["palpitations", "restlessness", "lightheadedness", "breathlessness", "sleeplessness",
                 "forgetfulness"]
SLOT_TEMPLATE = "{pronoun} was seen with {term} of {cond}."


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def clinical_sentence(rng: np.random.Generator, pronoun: str | None = None) -> str:
    med, dose = _pick(rng, MEDS)
    lab, val = _pick(rng, LABS)
    return _pick(rng, CLINICAL_TEMPLATES).format(
        age=_pick(rng, AGES), sex=_pick(rng, SEXES), cond=_pick(rng, CONDITIONS), sym=_pick(rng, SYMPTOMS),
        pronoun=pronoun or _pick(rng, ["he", "she"]), med=med, dose=dose, freq=_pick(rng, FREQS),
        finding=_pick(rng, FINDINGS), lab=lab, val=val, unit=_pick(rng, UNITS))


def general_sentence(rng: np.random.Generator) -> str:
    team, team2 = rng.choice(len(TEAMS), size=2, replace=False)
    return _pick(rng, GENERAL_TEMPLATES).format(
        team=TEAMS[team], team2=TEAMS[team2], day=_pick(rng, DAYS), city=_pick(rng, CITIES),
        weather=_pick(rng, WEATHER), period=_pick(rng, PERIODS), relative=_pick(rng, RELATIVES),
        item=_pick(rng, ITEMS), place2=_pick(rng, PLACES2), animal=_pick(rng, ANIMALS), food=_pick(rng, FOODS),
        plant=_pick(rng, PLANTS))


def synthetic_sentences(n: int, seed: int, style: str = "clinical") -> list[str]:
    """``n`` already-normalized sentences in the clinical (style A) or general (style B) register."""
    rng = stream(seed, "sentences", style)
    make = {"clinical": clinical_sentence, "general": general_sentence}[style]
    return [make(rng) for _ in range(n)]


def _decorate(rng: np.random.Generator, sentences: list[str]) -> str:
    """Render sentences as raw note text with the artifacts the cleaner must remove."""
    parts: list[str] = []
    for i, s in enumerate(sentences):
        s = s[0].upper() + s[1:]
        r = rng.random()
        if r < 0.08:
            parts.append(f"{i // 3 + 1}.{i % 3 + 1}. {s}")
        elif r < 0.14:
            parts.append(f"{s} [**Known firstname {int(rng.integers(100, 999))}**]")
        else:
            parts.append(s)
        if rng.random() < 0.1:
            parts.append("\n==========\n")
        elif rng.random() < 0.1:
            parts.append("\r\n--------\r\n")
    header = f"Admission Date: [**2150-1-{int(rng.integers(1, 28))}**]\n"
    footer = f"\nSeen by dr. [**Last Name {int(rng.integers(10, 99))}**] M.D."
    return header + " ".join(parts) + footer


@dataclass
class SyntheticCohort:
    admissions: list[AdmissionRecord]
    notes: list[RawNote]
    labels: dict[str, int] = field(default_factory=dict)


def misspell(word: str, rng: np.random.Generator, keep: int = 6) -> str:
    """Apply one random edit (swap, drop, double or substitute) after the first ``keep`` characters."""
    if len(word) <= keep + 1:
        return word
    i = int(rng.integers(keep, len(word) - 1))
    op = int(rng.integers(4))
    if op == 0:
        return word[:i] + word[i + 1] + word[i] + word[i + 2:]
    if op == 1:
        return word[:i] + word[i + 1:]
    if op == 2:
        return word[:i] + word[i] + word[i:]
    return word[:i] + "abcdefghijklmnopqrstuvwxyz"[int(rng.integers(26))] + word[i + 1:]


def slot_sentence(rng: np.random.Generator, pronoun: str, risk: bool, typo_rate: float) -> str:
    """The shared slot sentence, filled with a risk term or a neutral one and maybe misspelled twice."""
    term = _pick(rng, RISK_TERMS if risk else NEUTRAL_TERMS)
    if rng.random() < typo_rate:
        term = misspell(misspell(term, rng), rng)
    return SLOT_TEMPLATE.format(pronoun=pronoun, term=term, cond=_pick(rng, CONDITIONS))


def _note_sentences(rng, n_sentences: int, readmit: int, slots: int, signal_rate: float,
                    typo_rate: float) -> list[str]:
    pronoun = _pick(rng, ["he", "she"])
    sents = [clinical_sentence(rng, pronoun) for _ in range(n_sentences)]
    for _ in range(slots):
        risk = bool(readmit) and rng.random() < signal_rate
        sents.insert(int(rng.integers(len(sents) + 1)), slot_sentence(rng, pronoun, risk, typo_rate))
    return sents


def gen_synthetic_corpus(seed: int, n_patients: int, signal_rate: float = 0.8, slots_per_note: int = 3,
                         typo_rate: float = 0.5, max_admissions: int = 3, readmit_prob: float = 0.6,
                         summary_sentences: tuple[int, int] = (8, 14),
                         progress_sentences: tuple[int, int] = (3, 6)) -> SyntheticCohort:
    """Patients, admissions and notes with a planted readmission signal.

    Every discharge summary has ``slots_per_note`` slot sentences and every
    progress note one. In a readmitted stay each slot names a risk term with
    probability ``signal_rate``; all other slots name a neutral term, so the
    two classes differ only in which word fills the slot.
    """
    if n_patients < 2:
        raise ValueError("need at least two patients")
    rng = stream(seed, "synthetic-cohort")
    base = datetime(2150, 1, 1, tzinfo=timezone.utc)
    admissions: list[AdmissionRecord] = []
    for p in range(n_patients):
        pid = f"P{p:05d}"
        newborn = rng.random() < 0.03
        n_adm = 1 if newborn else int(rng.integers(1, max_admissions + 1))
        t = base + timedelta(days=float(rng.uniform(0, 3000)))
        for a in range(n_adm):
            los_h = float(rng.choice([rng.uniform(20, 47), rng.uniform(50, 240)], p=[0.15, 0.85]))
            los_h = round(los_h, 1)
            admit, discharge = t, t + timedelta(hours=los_h)
            last = a == n_adm - 1
            died = bool(last and not newborn and rng.random() < 0.04)
            admissions.append(AdmissionRecord(pid, f"A{p:05d}{a}", admit, discharge, died, newborn))
            gap = rng.uniform(2, 29) if rng.random() < readmit_prob else rng.uniform(35, 400)
            t = discharge + timedelta(days=float(gap))

    labels = {la.admission_id: la.readmit for la in label_readmissions(admissions)}
    notes: list[RawNote] = []
    for adm in admissions:
        y = labels.get(adm.admission_id, 0)
        los = adm.length_of_stay_hours
        k = 0
        ct = float(rng.uniform(4, 12))
        while ct < los:
            sents = _note_sentences(rng, int(rng.integers(*progress_sentences)), y, 1, signal_rate, typo_rate)
            notes.append(RawNote(f"{adm.admission_id}-N{k:02d}", adm.admission_id, _decorate(rng, sents),
                                 round(ct, 1), "progress"))
            k += 1
            ct += float(rng.uniform(10, 26))
        sents = _note_sentences(rng, int(rng.integers(*summary_sentences)), y, slots_per_note, signal_rate, typo_rate)
        notes.append(RawNote(f"{adm.admission_id}-DS", adm.admission_id, _decorate(rng, sents),
                             round(los, 1), "discharge_summary"))
    return SyntheticCohort(admissions, notes, labels)


def noisy_subsequence_set(seed: int, n_patients: int = 1000, max_n: int = 40, positive_rate: float = 0.3,
                          informative: tuple[int, int] = (1, 3)) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-subsequence probabilities for patients whose evidence sits in a few chunks.

    Every patient has ``n`` chunks scored around 0.3 (Beta(2, 5)). Positives
    additionally have 1 to 2 chunks (``informative`` range, upper bound
    exclusive) rescored around 0.8 (Beta(6, 2)). Averaging dilutes those
    chunks as ``n`` grows, which is the setting the max-plus-mean rule targets.
    """
    rng = stream(seed, "noisy-subsequences")
    probs, labels = [], []
    for _ in range(n_patients):
        n = int(rng.integers(1, max_n + 1))
        p = rng.beta(2.0, 5.0, size=n)
        y = int(rng.random() < positive_rate)
        if y:
            k = min(n, int(rng.integers(*informative)))
            p[rng.choice(n, size=k, replace=False)] = rng.beta(6.0, 2.0, size=k)
        probs.append(p)
        labels.append(y)
    return probs, np.array(labels)
