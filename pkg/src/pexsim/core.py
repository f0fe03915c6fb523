"""Domain types and validation for long-format subject-visit panel data.

All types are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

DAYS_PER_YEAR = 365.25

# Tolerance for the identity age_at_visit == age_at_baseline + years_since_baseline.
AGE_IDENTITY_TOL = 1e-9


class ValidationError(ValueError):
    """Input records or files violate the dataset contract."""


class NumericalError(RuntimeError):
    """An estimation routine failed (rank deficiency, non-convergence)."""


@dataclass(frozen=True)
class VisitRecord:
    """One subject-visit row of the long-format panel.

    ``visit_index`` counts assessments from 1 (baseline).  Assessments are
    treated as 12 months apart when the index is used for practice-effect
    coding; ``years_since_baseline`` carries the actual elapsed time for
    continuous terms.  Covariates other than the outcome are baseline values
    repeated on every row.
    """

    subject_id: str
    visit_index: int
    years_since_baseline: float
    age_at_visit: float
    dx: int            # 0 = healthy control, 1 = case group
    educ: float        # years of education
    gender: int        # binary indicator
    race_lat: float    # single numeric regressor; binary 0/1 by convention
    outcome: float


@dataclass(frozen=True)
class RawVisit:
    """Pre-timing input row: elapsed days instead of years and visit index.

    ``days_since_baseline`` may be fractional; the baseline row of each
    subject must carry 0.  ``age_at_baseline`` must be identical across a
    subject's rows.
    """

    subject_id: str
    days_since_baseline: float
    age_at_baseline: float
    dx: int
    educ: float
    gender: int
    race_lat: float
    outcome: float


@dataclass(frozen=True)
class LongitudinalDataset:
    """Validated collection of visit records, grouped contiguously by subject.

    Records are sorted by (subject_id, visit_index), every retained subject
    has a baseline row, and there are no duplicate (subject, visit) keys.
    Construct through :func:`validate_dataset`.
    """

    records: tuple[VisitRecord, ...]
    max_visits: int
    dropped_subjects: tuple[str, ...] = ()

    @cached_property
    def subject_slices(self) -> tuple[tuple[str, slice], ...]:
        """(subject_id, row slice) pairs in record order."""
        out = []
        start = 0
        for sid, group in itertools.groupby(self.records, key=lambda r: r.subject_id):
            n = sum(1 for _ in group)
            out.append((sid, slice(start, start + n)))
            start += n
        return tuple(out)

    @property
    def n_records(self) -> int:
        return len(self.records)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_slices)


def validate_dataset(records: Sequence[VisitRecord]) -> LongitudinalDataset:
    """Sort, de-duplicate and baseline-align raw visit records.

    Subjects without a baseline (visit_index == 1) row are dropped and
    reported through ``dropped_subjects``.  Raises :class:`ValidationError`
    on duplicate (subject, visit) keys, non-increasing time within a
    subject, a violated age/time identity, or an empty result.
    """
    if not records:
        raise ValidationError("no records supplied")

    ordered = sorted(records, key=lambda r: (r.subject_id, r.visit_index))

    seen: set[tuple[str, int]] = set()
    for rec in ordered:
        if rec.visit_index < 1:
            raise ValidationError(
                f"visit_index must be >= 1, got {rec.visit_index} for subject {rec.subject_id!r}"
            )
        key = (rec.subject_id, rec.visit_index)
        if key in seen:
            raise ValidationError(f"duplicate (subject, visit) key {key!r}")
        seen.add(key)

    kept: list[VisitRecord] = []
    dropped: list[str] = []
    for sid, group_iter in itertools.groupby(ordered, key=lambda r: r.subject_id):
        group = list(group_iter)
        if group[0].visit_index != 1:
            dropped.append(sid)
            continue
        _check_subject(sid, group)
        kept.extend(group)

    if not kept:
        raise ValidationError("no subjects remain after baseline exclusion")

    max_visits = max(r.visit_index for r in kept)
    return LongitudinalDataset(
        records=tuple(kept), max_visits=max_visits, dropped_subjects=tuple(dropped)
    )


def _check_subject(sid: str, group: list[VisitRecord]) -> None:
    baseline = group[0]
    if baseline.years_since_baseline != 0.0:
        raise ValidationError(
            f"subject {sid!r}: baseline visit has years_since_baseline "
            f"{baseline.years_since_baseline!r}, expected 0"
        )
    age_baseline = baseline.age_at_visit
    prev_t = None
    for rec in group:
        if prev_t is not None and rec.years_since_baseline <= prev_t:
            raise ValidationError(
                f"subject {sid!r}: years_since_baseline not strictly increasing "
                f"at visit {rec.visit_index}"
            )
        prev_t = rec.years_since_baseline
        expected_age = age_baseline + rec.years_since_baseline
        if abs(rec.age_at_visit - expected_age) > AGE_IDENTITY_TOL:
            raise ValidationError(
                f"subject {sid!r} visit {rec.visit_index}: age_at_visit "
                f"{rec.age_at_visit!r} != age_at_baseline + years ({expected_age!r})"
            )


def derive_timing(raw: Iterable[RawVisit]) -> list[VisitRecord]:
    """Convert days-since-baseline rows into timed visit records.

    Years elapsed are days / 365.25; visit indices are assigned per subject
    in time order starting at 1.  Age at visit is derived from the subject's
    baseline age so the age/time identity holds exactly.
    """
    rows = list(raw)
    if not rows:
        raise ValidationError("no records supplied")

    out: list[VisitRecord] = []
    keyed = sorted(rows, key=lambda r: (r.subject_id, r.days_since_baseline))
    for sid, group_iter in itertools.groupby(keyed, key=lambda r: r.subject_id):
        group = list(group_iter)
        ages = {r.age_at_baseline for r in group}
        if len(ages) > 1:
            raise ValidationError(
                f"subject {sid!r}: inconsistent age_at_baseline values {sorted(ages)}"
            )
        if group[0].days_since_baseline != 0:
            if group[0].days_since_baseline < 0:
                raise ValidationError(
                    f"subject {sid!r}: negative days_since_baseline "
                    f"{group[0].days_since_baseline!r}"
                )
            raise ValidationError(
                f"subject {sid!r}: earliest row has days_since_baseline "
                f"{group[0].days_since_baseline!r}, expected a 0-day baseline row"
            )
        prev_days = None
        for j, rec in enumerate(group, start=1):
            if prev_days is not None and rec.days_since_baseline == prev_days:
                raise ValidationError(
                    f"subject {sid!r}: duplicate days_since_baseline {prev_days!r}"
                )
            prev_days = rec.days_since_baseline
            years = rec.days_since_baseline / DAYS_PER_YEAR
            out.append(
                VisitRecord(
                    subject_id=rec.subject_id,
                    visit_index=j,
                    years_since_baseline=years,
                    age_at_visit=rec.age_at_baseline + years,
                    dx=rec.dx,
                    educ=rec.educ,
                    gender=rec.gender,
                    race_lat=rec.race_lat,
                    outcome=rec.outcome,
                )
            )
    return out
