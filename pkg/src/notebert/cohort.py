"""Readmission cohort construction: labels, exclusions, folds and cutoff filtering."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .preprocess import RawNote
from .rng import stream

log = logging.getLogger(__name__)

CUTOFF_BUCKETS = {48: "24-48h", 72: "48-72h"}


@dataclass
class AdmissionRecord:
    patient_id: str
    admission_id: str
    admit_time: datetime
    discharge_time: datetime
    died_in_hospital: bool = False
    is_newborn: bool = False
    notes: list[RawNote] = field(default_factory=list)

    def __post_init__(self):
        if self.admit_time > self.discharge_time:
            raise ValueError(f"admission {self.admission_id}: admit_time after discharge_time")

    @property
    def length_of_stay_hours(self) -> float:
        return (self.discharge_time - self.admit_time).total_seconds() / 3600.0


@dataclass(frozen=True)
class LabeledAdmission:
    admission_id: str
    patient_id: str
    readmit: int
    fold: int = -1


def parse_time(value: str | datetime) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    if isinstance(value, datetime):
        dt = value
    else:
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def label_readmissions(admissions: Iterable[AdmissionRecord], window_days: float = 30) -> list[LabeledAdmission]:
    """Label each admission 1 if the patient is readmitted within ``window_days`` of discharge.

    In-hospital deaths and newborn admissions are dropped from the output, but a
    later admission of either kind still counts as the readmission event for an
    earlier stay. The window is inclusive at its upper end.
    """
    window = timedelta(days=window_days)
    by_patient: dict[str, list[AdmissionRecord]] = defaultdict(list)
    for adm in admissions:
        by_patient[adm.patient_id].append(adm)

    labeled: list[LabeledAdmission] = []
    for pid in sorted(by_patient):
        stays = sorted(by_patient[pid], key=lambda a: (a.admit_time, a.admission_id))
        for i, adm in enumerate(stays):
            later = stays[i + 1:]
            if later and later[0].admit_time < adm.discharge_time:
                log.warning("patient %s: admission %s overlaps %s", pid, adm.admission_id, later[0].admission_id)
            if adm.died_in_hospital or adm.is_newborn:
                continue
            readmit = any(nxt.admit_time - adm.discharge_time <= window for nxt in later)
            labeled.append(LabeledAdmission(adm.admission_id, pid, int(readmit)))
    labeled.sort(key=lambda la: la.admission_id)
    return labeled


def split_folds(admission_ids: Sequence[str], k: int = 5, seed: int = 0) -> dict[str, int]:
    """Partition admissions into ``k`` folds of near-equal size."""
    if k < 2:
        raise ValueError("need at least two folds")
    ids = sorted(set(admission_ids))
    if len(ids) < k:
        raise ValueError(f"{len(ids)} admissions cannot fill {k} folds")
    perm = stream(seed, "folds").permutation(len(ids))
    return {ids[j]: int(rank % k) for rank, j in enumerate(perm)}


@dataclass(frozen=True)
class FoldSplit:
    train: list[str]
    validation: list[str]
    test: list[str]


def fold_split(folds: dict[str, int], test_fold: int, seed: int = 0) -> FoldSplit:
    """Train on the other folds; halve the held-out fold into validation and test.

    With five folds this yields the 80/10/10 layout, and pre-training text for
    the run must come from ``train`` only.
    """
    k = max(folds.values()) + 1
    if not 0 <= test_fold < k:
        raise ValueError(f"test fold {test_fold} outside 0..{k - 1}")
    train = sorted(a for a, f in folds.items() if f != test_fold)
    held = sorted(a for a, f in folds.items() if f == test_fold)
    perm = stream(seed, "fold-split", test_fold).permutation(len(held))
    half = len(held) // 2
    validation = sorted(held[j] for j in perm[:half])
    test = sorted(held[j] for j in perm[half:])
    return FoldSplit(train, validation, test)


def cutoff_filter(admission: AdmissionRecord, cutoff_hours: int) -> list[RawNote] | None:
    """Notes charted within the first ``cutoff_hours``, or ``None`` when not scorable.

    A stay lasting no longer than the cutoff is not scored at all.
    """
    if cutoff_hours not in CUTOFF_BUCKETS:
        raise ValueError(f"cutoff must be one of {sorted(CUTOFF_BUCKETS)}, got {cutoff_hours}")
    for note in admission.notes:
        if note.charttime is None:
            raise ValueError(f"note {note.note_id} of admission {admission.admission_id} has no charttime")
    if admission.length_of_stay_hours <= cutoff_hours:
        return None
    return [n for n in admission.notes if n.charttime <= cutoff_hours]


def cutoff_bucket(cutoff_hours: int) -> str:
    return CUTOFF_BUCKETS[cutoff_hours]


def attach_notes(admissions: Sequence[AdmissionRecord], notes: Iterable[RawNote]) -> None:
    by_id = {a.admission_id: a for a in admissions}
    for note in notes:
        adm = by_id.get(note.admission_id)
        if adm is not None:
            adm.notes.append(note)
    for a in admissions:
        a.notes.sort(key=lambda n: (n.charttime if n.charttime is not None else np.inf, n.note_id))
