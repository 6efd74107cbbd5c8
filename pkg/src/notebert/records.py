"""Newline-delimited JSON files for notes, admissions and preprocessed notes.

Notes: ``{"note_id", "admission_id", "charttime", "text"}`` plus an optional
``"category"``; ``charttime`` is hours since admission (or null).
Admissions: ``{"patient_id", "admission_id", "admit_time", "discharge_time",
"died_in_hospital", "is_newborn"}`` with ISO-8601 UTC timestamps.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .cohort import AdmissionRecord, format_time, parse_time
from .preprocess import RawNote, SegmentedNote

NOTE_FIELDS = ("note_id", "admission_id", "charttime", "text")
ADMISSION_FIELDS = ("patient_id", "admission_id", "admit_time", "discharge_time", "died_in_hospital", "is_newborn")


class RecordError(ValueError):
    pass


def _lines(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise RecordError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj: dict, fields: Sequence[str], where: str) -> None:
    missing = [f for f in fields if f not in obj]
    if missing:
        raise RecordError(f"{where}: missing field(s) {', '.join(missing)}")


def read_notes(path) -> list[RawNote]:
    notes = []
    for lineno, obj in _lines(path):
        where = f"{path}:{lineno}"
        _require(obj, NOTE_FIELDS, where)
        if not isinstance(obj["text"], str):
            raise RecordError(f"{where}: text must be a string")
        ct = obj["charttime"]
        if ct is not None and (isinstance(ct, bool) or not isinstance(ct, (int, float))):
            raise RecordError(f"{where}: charttime must be a number of hours or null")
        notes.append(RawNote(str(obj["note_id"]), str(obj["admission_id"]), obj["text"],
                             None if ct is None else float(ct), obj.get("category", "note")))
    return notes


def write_notes(notes: Iterable[RawNote], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for n in notes:
            fh.write(json.dumps({"note_id": n.note_id, "admission_id": n.admission_id, "charttime": n.charttime,
                                 "text": n.text, "category": n.category}, ensure_ascii=False) + "\n")


def read_admissions(path) -> list[AdmissionRecord]:
    out = []
    for lineno, obj in _lines(path):
        where = f"{path}:{lineno}"
        _require(obj, ADMISSION_FIELDS, where)
        try:
            out.append(AdmissionRecord(str(obj["patient_id"]), str(obj["admission_id"]),
                                       parse_time(obj["admit_time"]), parse_time(obj["discharge_time"]),
                                       bool(obj["died_in_hospital"]), bool(obj["is_newborn"])))
        except (TypeError, ValueError, AttributeError) as exc:
            raise RecordError(f"{where}: {exc}") from None
    return out


def write_admissions(admissions: Iterable[AdmissionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a in admissions:
            fh.write(json.dumps({"patient_id": a.patient_id, "admission_id": a.admission_id,
                                 "admit_time": format_time(a.admit_time),
                                 "discharge_time": format_time(a.discharge_time),
                                 "died_in_hospital": a.died_in_hospital, "is_newborn": a.is_newborn}) + "\n")


def write_segmented(pairs: Iterable[tuple[RawNote, SegmentedNote]], path) -> None:
    """One line per note with its cleaned sentences."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for raw, seg in pairs:
            fh.write(json.dumps({"note_id": raw.note_id, "admission_id": raw.admission_id,
                                 "charttime": raw.charttime, "category": raw.category,
                                 "sentences": seg.sentences}, ensure_ascii=False) + "\n")


def read_segmented(path) -> list[dict]:
    rows = []
    for lineno, obj in _lines(path):
        _require(obj, ("note_id", "sentences"), f"{path}:{lineno}")
        rows.append(obj)
    return rows


def read_labels(path) -> dict[str, int]:
    """Labels from a CSV (``admission_id,label``) or derived from an admissions JSONL file."""
    from .cohort import label_readmissions

    if Path(path).suffix in (".jsonl", ".json"):
        return {la.admission_id: la.readmit for la in label_readmissions(read_admissions(path))}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"admission_id", "label"} <= set(reader.fieldnames):
            raise RecordError(f"{path}: expected columns admission_id,label")
        for lineno, row in enumerate(reader, start=2):
            if row["label"] not in ("0", "1"):
                raise RecordError(f"{path}:{lineno}: label must be 0 or 1")
            out[row["admission_id"]] = int(row["label"])
    return out


def write_labels(labels: dict[str, int], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["admission_id", "label"])
        for k in sorted(labels):
            w.writerow([k, labels[k]])
