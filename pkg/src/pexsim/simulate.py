"""Multi-cohort longitudinal outcome simulation with exchangeable errors.

Cohorts enroll at staggered baseline ages so that calendar visits and age
decouple across the sample.  Within-subject dependence follows the Gaussian
exchangeable structure: a shared intercept component of variance rho*sigma2
plus independent noise of variance (1-rho)*sigma2, which gives every pair of
visits correlation rho and every visit marginal variance sigma2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LongitudinalDataset, VisitRecord, validate_dataset


@dataclass(frozen=True)
class SubjectProfile:
    """Baseline covariates of one simulated (or hypothetical) subject."""

    age_at_baseline: float
    dx: int
    educ: float = 0.0
    gender: int = 0
    race_lat: float = 0.0


@dataclass(frozen=True)
class SimulationConfig:
    """All generative parameters for one simulated cohort study.

    ``pe_beta5`` holds the practice level reached at visit 2, 3, ... ;
    an empty vector disables practice effects.  Visits past the last entry
    stay at the final level (the plateau is part of the scenario, not a
    constraint).  ``pe_beta6_dx`` and ``pe_beta7_age`` optionally shift the
    level per unit of dx and of age at visit, respectively.
    """

    n_per_cohort: int = 100
    cohort_baseline_ages: tuple[float, ...] = (25.0, 30.0, 35.0, 40.0, 45.0)
    n_visits: int = 6
    beta0: float = 0.326
    beta1: float = -0.007
    beta2: float = -0.782
    beta3: float = 0.013
    beta4: tuple[float, float, float] = (0.098, 0.034, -0.077)
    pe_beta5: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.5)
    pe_beta6_dx: tuple[float, ...] | None = None
    pe_beta7_age: tuple[float, ...] | None = None
    sigma2: float = 0.155**2
    rho: float = 0.753
    dx_prob: float = 0.5
    educ_mean: float = 13.5
    educ_sd: float = 2.0
    educ_range: tuple[float, float] = (8.0, 20.0)
    gender_prob: float = 0.5
    race_lat_prob: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_per_cohort < 1 or not self.cohort_baseline_ages:
            raise ValueError("need at least one cohort with one subject")
        if self.n_visits < 1:
            raise ValueError("n_visits must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho!r}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        if len(self.beta4) != 3:
            raise ValueError("beta4 must have 3 entries (educ, gender, race_lat)")
        if len(self.pe_beta5) > self.n_visits - 1:
            raise ValueError("pe_beta5 longer than n_visits - 1")
        for name in ("pe_beta6_dx", "pe_beta7_age"):
            vec = getattr(self, name)
            if vec is not None:
                if not self.pe_beta5:
                    raise ValueError(f"{name} requires a non-empty pe_beta5")
                if not 1 <= len(vec) <= self.n_visits - 1:
                    raise ValueError(f"{name} length must be in [1, n_visits - 1]")
        for name in ("dx_prob", "gender_prob", "race_lat_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def n_subjects(self) -> int:
        return self.n_per_cohort * len(self.cohort_baseline_ages)


def _pe_level(vec: Sequence[float] | None, j: int) -> float:
    """Practice level active at visit j; visits past the vector stay at the end."""
    if not vec or j < 2:
        return 0.0
    return vec[min(j - 2, len(vec) - 1)]


def mean_function(config: SimulationConfig, subject: SubjectProfile, j: int) -> float:
    """Expected outcome for ``subject`` at visit ``j`` (1-based, 1 year apart)."""
    if not 1 <= j <= config.n_visits:
        raise ValueError(f"visit index {j} outside 1..{config.n_visits}")
    t = float(j - 1)
    age_visit = subject.age_at_baseline + t
    mu = (
        config.beta0
        + config.beta1 * age_visit
        + config.beta2 * subject.dx
        + config.beta3 * t * subject.dx
        + config.beta4[0] * subject.educ
        + config.beta4[1] * subject.gender
        + config.beta4[2] * subject.race_lat
    )
    mu += _pe_level(config.pe_beta5, j)
    mu += _pe_level(config.pe_beta6_dx, j) * subject.dx
    mu += _pe_level(config.pe_beta7_age, j) * age_visit
    return mu


def gen_correlated_errors(
    n_visits: int, sigma2: float, rho: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one subject's error vector with exchangeable correlation.

    Decomposes each error into a shared N(0, rho*sigma2) component plus
    independent N(0, (1-rho)*sigma2) noise, so marginal variance is sigma2
    and every pairwise correlation is rho.
    """
    if n_visits < 1:
        raise ValueError("n_visits must be >= 1")
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho!r}")
    shared = rng.normal(0.0, np.sqrt(rho * sigma2))
    noise = rng.normal(0.0, np.sqrt((1.0 - rho) * sigma2), size=n_visits)
    return shared + noise


def _draw_profile(config: SimulationConfig, age: float, rng: np.random.Generator) -> SubjectProfile:
    dx = int(rng.random() < config.dx_prob)
    lo, hi = config.educ_range
    educ = float(min(max(round(rng.normal(config.educ_mean, config.educ_sd)), lo), hi))
    gender = int(rng.random() < config.gender_prob)
    race_lat = float(rng.random() < config.race_lat_prob)
    return SubjectProfile(age_at_baseline=age, dx=dx, educ=educ, gender=gender, race_lat=race_lat)


def simulate_cohorts(config: SimulationConfig) -> LongitudinalDataset:
    """Generate the full multi-cohort dataset for ``config``.

    Subject k (1-based over cohorts in order) draws from its own stream
    ``default_rng([seed, k])``, in the fixed order dx, educ, gender,
    race_lat, then the visit error vector, so per-subject draws do not
    depend on iteration order.  Output is deterministic given the config.
    """
    width = max(4, len(str(config.n_subjects)))
    records: list[VisitRecord] = []
    serial = 0
    for age in config.cohort_baseline_ages:
        for _ in range(config.n_per_cohort):
            serial += 1
            rng = np.random.default_rng([config.seed, serial])
            profile = _draw_profile(config, age, rng)
            errors = gen_correlated_errors(config.n_visits, config.sigma2, config.rho, rng)
            sid = f"s{serial:0{width}d}"
            for j in range(1, config.n_visits + 1):
                t = float(j - 1)
                records.append(
                    VisitRecord(
                        subject_id=sid,
                        visit_index=j,
                        years_since_baseline=t,
                        age_at_visit=age + t,
                        dx=profile.dx,
                        educ=profile.educ,
                        gender=profile.gender,
                        race_lat=profile.race_lat,
                        outcome=mean_function(config, profile, j) + errors[j - 1],
                    )
                )
    return validate_dataset(records)
