"""Design-matrix construction and the assessment-aligned practice-effect estimate.

The model family is fixed: intercept, age (continuous or banded), binary
group, group-by-time interaction, baseline covariates, and optional
visit-level practice indicators with group/age interactions.  Columns follow
one canonical order so fitted tables line up across engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .core import LongitudinalDataset, ValidationError

INTERCEPT_LABEL = "(Intercept)"
AGE_LABEL = "age_visit"
DX_LABEL = "dx_bin"
DX_TIME_LABEL = "dx_bin:t"

# Display labels for covariate fields (paper-style table headers).
_COVARIATE_LABELS = {"educ": "educ", "gender": "gen", "race_lat": "race_lat"}

AGE_CODINGS = ("linear", "binned")
PE_CODINGS = ("visit", "cumulative")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of which mean model to build.

    ``pe_max_level`` (K) top-codes the final practice indicator: visits
    beyond K+1 share the level-K coefficient, so with K=5 and six visits the
    fifth indicator covers visits 5 and 6.  ``pe_coding`` switches between
    visit-level dummies (coefficient = level at that visit) and cumulative
    at-least-k indicators (coefficient = incremental gain); both span the
    same column space.
    """

    age_coding: str = "linear"
    include_pe: bool = False
    pe_coding: str = "visit"
    pe_max_level: int = 5
    pe_by_dx: bool = False
    pe_by_age: bool = False
    covariates: tuple[str, ...] = ("educ", "gender", "race_lat")
    dx_time_interaction: bool = True
    age_bin_width: float = 5.0
    age_bin_origin: float = 25.0
    age_n_bands: int = 6

    def __post_init__(self) -> None:
        if self.age_coding not in AGE_CODINGS:
            raise ValueError(f"age_coding must be one of {AGE_CODINGS}, got {self.age_coding!r}")
        if self.pe_coding not in PE_CODINGS:
            raise ValueError(f"pe_coding must be one of {PE_CODINGS}, got {self.pe_coding!r}")
        if self.pe_max_level < 1:
            raise ValueError("pe_max_level must be >= 1")
        if (self.pe_by_dx or self.pe_by_age) and not self.include_pe:
            raise ValueError("pe_by_dx / pe_by_age require include_pe")
        if self.age_bin_width <= 0 or self.age_n_bands < 1:
            raise ValueError("binned age coding needs positive width and band count")
        unknown = [c for c in self.covariates if c not in _COVARIATE_LABELS]
        if unknown:
            raise ValueError(f"unknown covariates {unknown}; expected {list(_COVARIATE_LABELS)}")


_SPEC_NAMES = ("no-pe", "pe", "pe-by-dx", "pe-by-age")


def standard_spec(name: str, age_coding: str = "linear") -> ModelSpec:
    """Named model variants exposed on the command line."""
    if name not in _SPEC_NAMES:
        raise ValueError(f"spec must be one of {_SPEC_NAMES}, got {name!r}")
    base = ModelSpec(age_coding=age_coding)
    if name == "no-pe":
        return base
    if name == "pe":
        return replace(base, include_pe=True)
    if name == "pe-by-dx":
        return replace(base, include_pe=True, pe_by_dx=True)
    return replace(base, include_pe=True, pe_by_age=True)


@dataclass(frozen=True)
class DesignMatrix:
    """Dense design with aligned response and cluster grouping.

    Rows follow dataset record order (grouped contiguously by subject); the
    first column is the intercept.
    """

    column_labels: tuple[str, ...]
    rows: np.ndarray
    response: np.ndarray
    cluster_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.column_labels)) != len(self.column_labels):
            raise ValueError("duplicate column labels")
        n, p = self.rows.shape
        if p != len(self.column_labels) or n != len(self.response) or n != len(self.cluster_ids):
            raise ValueError("misaligned design components")

    @cached_property
    def cluster_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(start indices, sizes) of the contiguous cluster blocks."""
        ids = self.cluster_ids
        starts = [0]
        for i in range(1, len(ids)):
            if ids[i] != ids[i - 1]:
                starts.append(i)
        starts_arr = np.asarray(starts, dtype=np.intp)
        sizes = np.diff(np.append(starts_arr, len(ids)))
        return starts_arr, sizes

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_bounds[0])


def _age_band(age: float, spec: ModelSpec) -> int:
    """1-based band index for half-open bands; the last band is closed above."""
    top = spec.age_bin_origin + spec.age_bin_width * spec.age_n_bands
    if age == top:
        return spec.age_n_bands
    band = math.floor((age - spec.age_bin_origin) / spec.age_bin_width) + 1
    return band


def _pe_indicator_row(j: int, spec: ModelSpec) -> np.ndarray:
    k_max = spec.pe_max_level
    row = np.zeros(k_max)
    if j < 2:
        return row
    if spec.pe_coding == "visit":
        row[min(j - 1, k_max) - 1] = 1.0
    else:
        row[: min(j - 1, k_max)] = 1.0
    return row


def pe_term_labels(spec: ModelSpec) -> tuple[str, ...]:
    if spec.pe_coding == "visit":
        return tuple(f"prac{k}" for k in range(1, spec.pe_max_level + 1))
    return tuple(f"prac{k}plus" for k in range(1, spec.pe_max_level + 1))


def build_design(dataset: LongitudinalDataset, spec: ModelSpec) -> DesignMatrix:
    """Assemble the mean-model design for ``spec`` over a validated dataset.

    Column order is [intercept, age terms, dx, dx:t, covariates, PE terms,
    PE-by-dx, PE-by-age].  Under binned age coding, band 1 is the reference
    level and bands without any observation are omitted.  Rank problems are
    left to the fitters.
    """
    recs = dataset.records
    n = len(recs)

    labels: list[str] = [INTERCEPT_LABEL]
    cols: list[np.ndarray] = [np.ones(n)]

    age = np.array([r.age_at_visit for r in recs])
    t = np.array([r.years_since_baseline for r in recs])
    dx = np.array([float(r.dx) for r in recs])

    if spec.age_coding == "linear":
        labels.append(AGE_LABEL)
        cols.append(age)
    else:
        bands = np.empty(n, dtype=int)
        for i, r in enumerate(recs):
            b = _age_band(r.age_at_visit, spec)
            if b < 1 or b > spec.age_n_bands:
                raise ValidationError(
                    f"age_at_visit {r.age_at_visit!r} outside all age bands "
                    f"(subject {r.subject_id!r}, visit {r.visit_index})"
                )
            bands[i] = b
        for k in range(2, spec.age_n_bands + 1):
            col = (bands == k).astype(float)
            if col.any():
                labels.append(f"age_band_kband{k}")
                cols.append(col)

    labels.append(DX_LABEL)
    cols.append(dx)

    if spec.dx_time_interaction:
        labels.append(DX_TIME_LABEL)
        cols.append(t * dx)

    for name in spec.covariates:
        labels.append(_COVARIATE_LABELS[name])
        cols.append(np.array([float(getattr(r, name)) for r in recs]))

    if spec.include_pe:
        pe = np.vstack([_pe_indicator_row(r.visit_index, spec) for r in recs])
        pe_labels = pe_term_labels(spec)
        labels.extend(pe_labels)
        cols.extend(pe.T)
        if spec.pe_by_dx:
            labels.extend(f"{lab}:{DX_LABEL}" for lab in pe_labels)
            cols.extend((pe * dx[:, None]).T)
        if spec.pe_by_age:
            labels.extend(f"{lab}:{AGE_LABEL}" for lab in pe_labels)
            cols.extend((pe * age[:, None]).T)

    return DesignMatrix(
        column_labels=tuple(labels),
        rows=np.column_stack(cols),
        response=np.array([r.outcome for r in recs]),
        cluster_ids=tuple(r.subject_id for r in recs),
    )


@dataclass(frozen=True)
class AlignedPeBin:
    """One age bin of the aligned first-reassessment comparison."""

    age_lo: float
    age_hi: float
    pe_estimate: float | None
    n_reassess: int
    n_baseline: int


def aligned_pe_estimate(
    dataset: LongitudinalDataset, age_bin_width: float = 5.0
) -> list[AlignedPeBin]:
    """Nonparametric first-reassessment practice-effect estimate by age bin.

    Within each age-at-visit bin the estimate is the mean outcome of second
    assessments minus the mean outcome of first assessments, so subjects
    observed at the same age but with different testing exposure are
    compared directly.  Bins missing either group carry ``None``.
    """
    if age_bin_width <= 0:
        raise ValueError(f"age_bin_width must be positive, got {age_bin_width!r}")

    first = [(r.age_at_visit, r.outcome) for r in dataset.records if r.visit_index == 1]
    second = [(r.age_at_visit, r.outcome) for r in dataset.records if r.visit_index == 2]
    if not second:
        raise ValidationError("dataset has no reassessment (visit_index == 2) rows")

    ages = [a for a, _ in first] + [a for a, _ in second]
    lo = math.floor(min(ages) / age_bin_width) * age_bin_width
    hi = max(ages)

    n_bins = math.floor((hi - lo) / age_bin_width) + 1
    out: list[AlignedPeBin] = []
    for i in range(n_bins):
        edge = lo + i * age_bin_width
        upper = lo + (i + 1) * age_bin_width
        y1 = [y for a, y in first if edge <= a < upper]
        y2 = [y for a, y in second if edge <= a < upper]
        est = None
        if y1 and y2:
            est = float(np.mean(y2) - np.mean(y1))
        out.append(
            AlignedPeBin(
                age_lo=edge,
                age_hi=upper,
                pe_estimate=est,
                n_reassess=len(y2),
                n_baseline=len(y1),
            )
        )
    return out
