"""CSV ingestion and emission for datasets and fit tables.

One canonical long format is used everywhere:

    subject_id,visit_index,years_since_baseline,age_at_visit,dx,educ,gender,race_lat,outcome

Floats are written with shortest round-trip formatting, so write/read
cycles reproduce values exactly and equal inputs produce byte-identical
files.  Days-based inputs (a days column plus ``age_at_baseline`` instead
of derived timing fields) are converted through :func:`core.derive_timing`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    LongitudinalDataset,
    RawVisit,
    ValidationError,
    VisitRecord,
    derive_timing,
    validate_dataset,
)
from .design import AlignedPeBin

DATASET_HEADER = (
    "subject_id",
    "visit_index",
    "years_since_baseline",
    "age_at_visit",
    "dx",
    "educ",
    "gender",
    "race_lat",
    "outcome",
)

FIT_TABLE_HEADER = ("term", "estimate", "se", "stat", "p")


def _fmt(value: float) -> str:
    return repr(float(value))


def dataset_to_csv(dataset: LongitudinalDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_HEADER)
    for r in dataset.records:
        writer.writerow(
            [
                r.subject_id,
                r.visit_index,
                _fmt(r.years_since_baseline),
                _fmt(r.age_at_visit),
                r.dx,
                _fmt(r.educ),
                r.gender,
                _fmt(r.race_lat),
                _fmt(r.outcome),
            ]
        )
    return buf.getvalue()


def write_dataset(dataset: LongitudinalDataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


def _require_columns(fieldnames: Sequence[str] | None, required: Iterable[str], path) -> None:
    have = set(fieldnames or ())
    missing = [c for c in required if c not in have]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")


def read_dataset(path: str | Path, days_column: str | None = None) -> LongitudinalDataset:
    """Load and validate a dataset CSV.

    With ``days_column`` set, rows are expected to carry that column plus
    ``age_at_baseline`` in place of the derived timing fields, and timing is
    reconstructed from elapsed days.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if days_column is None:
            _require_columns(reader.fieldnames, DATASET_HEADER, path)
            records = []
            for row in reader:
                try:
                    records.append(
                        VisitRecord(
                            subject_id=row["subject_id"],
                            visit_index=int(row["visit_index"]),
                            years_since_baseline=float(row["years_since_baseline"]),
                            age_at_visit=float(row["age_at_visit"]),
                            dx=int(row["dx"]),
                            educ=float(row["educ"]),
                            gender=int(row["gender"]),
                            race_lat=float(row["race_lat"]),
                            outcome=float(row["outcome"]),
                        )
                    )
                except (TypeError, KeyError, ValueError) as exc:
                    raise ValidationError(f"{path}: malformed row {row!r}: {exc}") from exc
            return validate_dataset(records)

        needed = ("subject_id", days_column, "age_at_baseline", "dx", "educ",
                  "gender", "race_lat", "outcome")
        _require_columns(reader.fieldnames, needed, path)
        raw = []
        for row in reader:
            try:
                raw.append(
                    RawVisit(
                        subject_id=row["subject_id"],
                        days_since_baseline=float(row[days_column]),
                        age_at_baseline=float(row["age_at_baseline"]),
                        dx=int(row["dx"]),
                        educ=float(row["educ"]),
                        gender=int(row["gender"]),
                        race_lat=float(row["race_lat"]),
                        outcome=float(row["outcome"]),
                    )
                )
            except (TypeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}: malformed row {row!r}: {exc}") from exc
        return validate_dataset(derive_timing(raw))


@dataclass(frozen=True)
class FitTableRow:
    term: str
    estimate: float
    se: float
    stat: float
    p: float


def fit_table_rows(fit) -> list[FitTableRow]:
    """Flatten an LMM or GEE fit into (term, estimate, se, stat, p) rows."""
    stats = getattr(fit, "wald_stats", None)
    if stats is None:
        stats = fit.test_stats
    return [
        FitTableRow(term, float(est), float(se), float(st), float(p))
        for term, est, se, st, p in zip(
            fit.terms, fit.coefficients, fit.std_errors, stats, fit.p_values
        )
    ]


def write_fit_table(fit, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIT_TABLE_HEADER)
        for row in fit_table_rows(fit):
            writer.writerow([row.term, _fmt(row.estimate), _fmt(row.se),
                             _fmt(row.stat), _fmt(row.p)])


def read_fit_table(path: str | Path) -> list[FitTableRow]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, FIT_TABLE_HEADER, path)
        return [
            FitTableRow(
                term=row["term"],
                estimate=float(row["estimate"]),
                se=float(row["se"]),
                stat=float(row["stat"]),
                p=float(row["p"]),
            )
            for row in reader
        ]


def write_aligned_pe_table(bins: Sequence[AlignedPeBin], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["age_lo", "age_hi", "pe_estimate", "n_reassess", "n_baseline"])
        for b in bins:
            est = "" if b.pe_estimate is None else _fmt(b.pe_estimate)
            writer.writerow([_fmt(b.age_lo), _fmt(b.age_hi), est, b.n_reassess, b.n_baseline])
