"""Random-intercept linear mixed model fit by profiled REML.

The only variance parameter after profiling is the ratio
lambda = sigma_b^2 / sigma_e^2.  For fixed lambda the GLS coefficients and
the residual variance have closed forms, using the rank-one structure of
each cluster's covariance (I + lambda * ones) for O(rows) evaluation.  The
REML criterion is then maximised by a bounded scalar search over
log(lambda) in [-12, 12], with lambda = 0 checked as a boundary candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .core import LongitudinalDataset, NumericalError, ValidationError
from .design import DesignMatrix, INTERCEPT_LABEL, ModelSpec, build_design
from .gee import check_full_rank, normal_sf_two_sided

LOG_LAMBDA_BOUNDS = (-12.0, 12.0)
MAX_PROFILE_ITER = 200


@dataclass(frozen=True)
class LmmFit:
    """Fixed effects, variance components and per-term tests from one fit.

    ``p_values`` use the normal approximation; ``df_containment`` carries
    the containment-style degrees of freedom emitted for table parity
    (within-subject terms: n_obs - n_subjects - #within terms; others:
    n_subjects - #between terms - 1).
    """

    terms: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    test_stats: np.ndarray
    p_values: np.ndarray
    df_containment: np.ndarray
    cov: np.ndarray
    sigma_b2: float
    sigma_e2: float
    icc: float
    reml_loglik: float
    converged: bool
    n_subjects: int
    n_obs: int


def icc(sigma_b2: float, sigma_e2: float) -> float:
    """Share of variance due to stable between-subject differences."""
    if sigma_b2 < 0 or sigma_e2 < 0:
        raise ValueError("variance components must be non-negative")
    total = sigma_b2 + sigma_e2
    if total == 0:
        raise ValueError("icc undefined when both variance components are zero")
    return sigma_b2 / total


def reml_profile(design: DesignMatrix) -> Callable[[float], float]:
    """Profiled REML log-likelihood as a function of lambda >= 0.

    The returned callable evaluates the full restricted log-likelihood at
    the profiled GLS coefficients and residual variance.  Cluster sums are
    pre-aggregated by cluster size, so one evaluation costs
    O(#distinct sizes * p^2).
    """
    X = design.rows
    y = design.response
    starts, sizes = design.cluster_bounds
    n, p = X.shape

    xtx = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    s = np.add.reduceat(X, starts, axis=0)          # per-cluster column sums
    q = np.add.reduceat(y, starts)                  # per-cluster response sums

    by_size: list[tuple[int, int, np.ndarray, np.ndarray, float]] = []
    for m in np.unique(sizes):
        mask = sizes == m
        sm = s[mask]
        qm = q[mask]
        by_size.append((int(m), int(mask.sum()), sm.T @ sm, sm.T @ qm, float(qm @ qm)))

    def loglik(lam: float) -> float:
        a = xtx.copy()
        b = xty.copy()
        v = yty
        logdet_corr = 0.0
        for m, count, g, h, w in by_size:
            c = lam / (1.0 + lam * m)
            a -= c * g
            b -= c * h
            v -= c * w
            logdet_corr += count * math.log1p(lam * m)
        beta = np.linalg.solve(a, b)
        quad = v - float(beta @ b)
        sigma_e2 = quad / (n - p)
        sign, logdet_a = np.linalg.slogdet(a)
        if sign <= 0 or sigma_e2 <= 0:
            return -np.inf
        return -0.5 * (
            (n - p) * (math.log(2.0 * math.pi) + 1.0)
            + (n - p) * math.log(sigma_e2)
            + logdet_corr
            + logdet_a
        )

    return loglik


def _gls_at(design: DesignMatrix, lam: float) -> tuple[np.ndarray, np.ndarray, float]:
    """GLS coefficients, unscaled information matrix and residual quad form."""
    X = design.rows
    y = design.response
    starts, sizes = design.cluster_bounds
    c = lam / (1.0 + lam * sizes)
    s = np.add.reduceat(X, starts, axis=0)
    q = np.add.reduceat(y, starts)
    a = X.T @ X - (s * c[:, None]).T @ s
    b = X.T @ y - s.T @ (c * q)
    beta = np.linalg.solve(a, b)
    quad = float(y @ y - np.sum(c * q * q) - beta @ b)
    return beta, a, quad


def containment_df(design: DesignMatrix) -> np.ndarray:
    """Containment-style degrees of freedom per design column.

    A term is within-subject when it varies inside at least one cluster;
    the intercept is reported with the within-subject denominator.
    """
    X = design.rows
    starts, _ = design.cluster_bounds
    n, p = X.shape
    n_sub = len(starts)

    mins = np.minimum.reduceat(X, starts, axis=0)
    maxs = np.maximum.reduceat(X, starts, axis=0)
    within = (maxs - mins > 1e-12).any(axis=0)

    labels = design.column_labels
    is_intercept = np.array([lab == INTERCEPT_LABEL for lab in labels])
    p_within = int(np.sum(within & ~is_intercept))
    p_between = int(np.sum(~within & ~is_intercept))

    df = np.where(within | is_intercept, n - n_sub - p_within, n_sub - p_between - 1)
    return df.astype(int)


def fit_lmm_design(design: DesignMatrix) -> LmmFit:
    """Fit the random-intercept model to an arbitrary design matrix."""
    starts, sizes = design.cluster_bounds
    if int(np.sum(sizes >= 2)) < 2:
        raise ValidationError("need at least 2 subjects with at least 2 visits")
    check_full_rank(design)

    n, p = design.rows.shape
    loglik = reml_profile(design)

    res = minimize_scalar(
        lambda u: -loglik(math.exp(u)),
        bounds=LOG_LAMBDA_BOUNDS,
        method="bounded",
        options={"maxiter": MAX_PROFILE_ITER, "xatol": 1e-10},
    )
    lam = math.exp(res.x)
    best = -res.fun
    converged = bool(res.success)

    # The bracket cannot represent lambda = 0 exactly; take it when the
    # profile keeps decreasing through the lower boundary.
    at_zero = loglik(0.0)
    if at_zero >= best:
        lam, best = 0.0, at_zero

    beta, a, quad = _gls_at(design, lam)
    sigma_e2 = quad / (n - p)
    sigma_b2 = lam * sigma_e2
    cov = sigma_e2 * np.linalg.inv(a)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pvals = np.array([normal_sf_two_sided(v) for v in z])

    return LmmFit(
        terms=design.column_labels,
        coefficients=beta,
        std_errors=se,
        test_stats=z,
        p_values=pvals,
        df_containment=containment_df(design),
        cov=cov,
        sigma_b2=sigma_b2,
        sigma_e2=sigma_e2,
        icc=sigma_b2 / (sigma_b2 + sigma_e2),
        reml_loglik=best,
        converged=converged,
        n_subjects=len(starts),
        n_obs=n,
    )


def fit_lmm(dataset: LongitudinalDataset, spec: ModelSpec) -> LmmFit:
    """Build the design for ``spec`` and fit the random-intercept model."""
    return fit_lmm_design(build_design(dataset, spec))
