"""Fit tables, engine/spec comparison reports, figures, and replication studies."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import LongitudinalDataset
from .dataio import fit_table_rows
from .design import AGE_LABEL, ModelSpec, build_design, standard_spec
from .gee import GeeFit, fit_gee
from .lmm import LmmFit, fit_lmm
from .simulate import SimulationConfig, simulate_cohorts

Z_975 = 1.959963984540054

# Slope shift (per year) above which unmodeled practice effects are flagged
# as masking the age trend.
MASKING_SLOPE_THRESHOLD = 0.02


def format_p(p: float) -> str:
    """Fixed-decimal p-value, scientific below 1e-4, '<2e-16' below that floor."""
    if p < 2e-16:
        return "<2e-16"
    if p < 1e-4:
        return f"{p:.1e}"
    return f"{p:.5f}"


def format_num(x: float) -> str:
    if not math.isfinite(x):
        return "nan"
    if x != 0 and abs(x) < 1e-4:
        return f"{x:.1e}"
    return f"{x:.5f}"


def _render_rows(header: Sequence[str], body: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in body:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = []
    lines.append("  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                           for i, (h, w) in enumerate(zip(header, widths))))
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                               for i, (cell, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)


def render_fit_text(fit: GeeFit | LmmFit, title: str | None = None) -> str:
    """Aligned console table; Wald columns for GEE, t/DF columns for LMM."""
    parts = []
    if title:
        parts.append(title)
    if isinstance(fit, GeeFit):
        header = ["Term", "Estimate", "Std. Err", "Wald", "p-value"]
        body = [
            [r.term, format_num(r.estimate), format_num(r.se), f"{r.stat:.2f}", format_p(r.p)]
            for r in fit_table_rows(fit)
        ]
        parts.append(_render_rows(header, body))
        parts.append(
            f"clusters: {fit.n_clusters}  obs: {fit.n_obs}  working rho: {fit.working_rho:.4f}"
            f"  dispersion: {fit.dispersion:.6f}  iterations: {fit.n_iter}"
            f"  converged: {fit.converged}"
        )
    else:
        header = ["Fixed Effect", "Estimate", "Std. Error", "DF", "t-value", "p-value"]
        body = [
            [term, format_num(est), format_num(se), str(df), f"{t:.2f}", format_p(p)]
            for term, est, se, df, t, p in zip(
                fit.terms, fit.coefficients, fit.std_errors,
                fit.df_containment, fit.test_stats, fit.p_values,
            )
        ]
        parts.append(_render_rows(header, body))
        parts.append(
            f"subjects: {fit.n_subjects}  obs: {fit.n_obs}"
            f"  sigma_b2: {fit.sigma_b2:.6f}  sigma_e2: {fit.sigma_e2:.6f}"
            f"  ICC: {fit.icc:.4f}  REML loglik: {fit.reml_loglik:.4f}"
            f"  converged: {fit.converged}"
        )
    return "\n".join(parts)


@dataclass(frozen=True)
class ComparisonReport:
    """Four-fit battery (engine x practice-effect adjustment) with verdict.

    ``deltas`` hold with-PE minus no-PE coefficients for terms shared by
    both specs, per engine.  The masking verdict compares the fitted age
    slopes of the two GEE specs.
    """

    fits: dict[tuple[str, str], GeeFit | LmmFit | None]
    failures: dict[tuple[str, str], str]
    deltas: dict[str, list[tuple[str, float]]]
    age_slope_no_pe: float | None
    age_slope_with_pe: float | None
    slope_shift: float | None
    masking_detected: bool | None
    verdict: str
    pe_spec: ModelSpec


def _coef(fit, term: str) -> float | None:
    if fit is None or term not in fit.terms:
        return None
    return float(fit.coefficients[fit.terms.index(term)])


def run_comparison(
    dataset: LongitudinalDataset,
    age_coding: str = "linear",
    working: str = "exchangeable",
) -> ComparisonReport:
    """Fit LMM and GEE, each with and without practice-effect terms."""
    no_pe = standard_spec("no-pe", age_coding)
    with_pe = standard_spec("pe", age_coding)
    specs = {"no-pe": no_pe, "pe": with_pe}

    fits: dict[tuple[str, str], GeeFit | LmmFit | None] = {}
    failures: dict[tuple[str, str], str] = {}
    for engine in ("lmm", "gee"):
        for spec_name, spec in specs.items():
            key = (engine, spec_name)
            try:
                if engine == "lmm":
                    fits[key] = fit_lmm(dataset, spec)
                else:
                    fits[key] = fit_gee(dataset, spec, working=working)
            except Exception as exc:  # partial report on any component failure
                fits[key] = None
                failures[key] = f"{type(exc).__name__}: {exc}"

    deltas: dict[str, list[tuple[str, float]]] = {}
    for engine in ("lmm", "gee"):
        base, ext = fits[(engine, "no-pe")], fits[(engine, "pe")]
        if base is None or ext is None:
            continue
        deltas[engine] = [
            (term, float(ext.coefficients[ext.terms.index(term)]) -
             float(base.coefficients[base.terms.index(term)]))
            for term in base.terms
            if term in ext.terms
        ]

    slope_no = _coef(fits[("gee", "no-pe")], AGE_LABEL)
    slope_pe = _coef(fits[("gee", "pe")], AGE_LABEL)
    if slope_no is None or slope_pe is None:
        shift = None
        masking = None
        verdict = "age-slope comparison unavailable"
    else:
        shift = slope_no - slope_pe
        masking = shift > MASKING_SLOPE_THRESHOLD
        direction = ">" if shift > 0 else "<="
        verdict = (
            f"age slope no-PE ({slope_no:+.4f}/yr) {direction} "
            f"age slope with-PE ({slope_pe:+.4f}/yr); shift {shift:+.4f}/yr; "
            + ("masking detected" if masking else "no masking detected")
        )
    return ComparisonReport(
        fits=fits,
        failures=failures,
        deltas=deltas,
        age_slope_no_pe=slope_no,
        age_slope_with_pe=slope_pe,
        slope_shift=shift,
        masking_detected=masking,
        verdict=verdict,
        pe_spec=with_pe,
    )


def render_comparison_text(report: ComparisonReport) -> str:
    parts = []
    titles = {
        ("lmm", "no-pe"): "Linear mixed model, no practice-effect terms",
        ("lmm", "pe"): "Linear mixed model, with practice-effect terms",
        ("gee", "no-pe"): "GEE, no practice-effect terms",
        ("gee", "pe"): "GEE, with practice-effect terms",
    }
    for key, title in titles.items():
        fit = report.fits.get(key)
        if fit is None:
            parts.append(f"{title}\n  FAILED: {report.failures.get(key, 'unknown error')}")
        else:
            parts.append(render_fit_text(fit, title=title))
        parts.append("")
    parts.append(f"verdict: {report.verdict}")
    return "\n".join(parts)


def write_comparison_tables(report: ComparisonReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "compare_fits.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["engine", "spec", "term", "estimate", "se", "stat", "p"])
        for (engine, spec_name), fit in report.fits.items():
            if fit is None:
                continue
            for row in fit_table_rows(fit):
                writer.writerow([engine, spec_name, row.term, repr(row.estimate),
                                 repr(row.se), repr(row.stat), repr(row.p)])
    with open(out_dir / "compare_deltas.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["engine", "term", "delta_with_pe_minus_no_pe"])
        for engine, rows in report.deltas.items():
            for term, delta in rows:
                writer.writerow([engine, term, repr(delta)])


def save_coefficient_scatter(report: ComparisonReport, path: str | Path) -> None:
    """Scatter of LMM vs GEE coefficients (no-PE spec) against the diagonal."""
    lmm_fit = report.fits.get(("lmm", "no-pe"))
    gee_fit = report.fits.get(("gee", "no-pe"))
    if lmm_fit is None or gee_fit is None:
        raise ValueError("coefficient scatter needs both no-PE fits")
    shared = [t for t in lmm_fit.terms if t in gee_fit.terms]
    xs = [float(lmm_fit.coefficients[lmm_fit.terms.index(t)]) for t in shared]
    ys = [float(gee_fit.coefficients[gee_fit.terms.index(t)]) for t in shared]

    fig, ax = plt.subplots(figsize=(5, 5))
    lo = min(min(xs), min(ys))
    hi = max(max(xs), max(ys))
    pad = 0.05 * (hi - lo) if hi > lo else 0.1
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], color="gray", lw=1, zorder=1)
    ax.scatter(xs, ys, color="tab:blue", zorder=2)
    for t, x, y in zip(shared, xs, ys):
        ax.annotate(t, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("Mixed-model estimate")
    ax.set_ylabel("GEE estimate")
    ax.set_title("Coefficient agreement across engines")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _pe_contribution(dataset: LongitudinalDataset, fit: GeeFit, spec: ModelSpec) -> np.ndarray:
    """Fitted practice contribution per record under the with-PE fit."""
    dm = build_design(dataset, spec)
    pe_cols = [i for i, lab in enumerate(dm.column_labels) if lab.startswith("prac")]
    coefs = np.array([fit.coefficients[fit.terms.index(dm.column_labels[i])] for i in pe_cols])
    return dm.rows[:, pe_cols] @ coefs


def save_trajectory_figure(
    dataset: LongitudinalDataset, report: ComparisonReport, path: str | Path
) -> None:
    """Mean outcome against age at visit by group, raw and practice-adjusted."""
    gee_pe = report.fits.get(("gee", "pe"))
    if gee_pe is None:
        raise ValueError("trajectory figure needs the with-PE GEE fit")
    adj = _pe_contribution(dataset, gee_pe, report.pe_spec)

    age = np.array([r.age_at_visit for r in dataset.records])
    y = np.array([r.outcome for r in dataset.records])
    dx = np.array([r.dx for r in dataset.records])
    y_adj = y - adj

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    colors = {0: "tab:blue", 1: "tab:red"}
    names = {0: "HC", 1: "SZ"}
    bins = np.floor(age).astype(int)
    for g in (0, 1):
        sel = dx == g
        if not sel.any():
            continue
        ages = np.unique(bins[sel])
        raw_means = [y[sel & (bins == a)].mean() for a in ages]
        adj_means = [y_adj[sel & (bins == a)].mean() for a in ages]
        ax.plot(ages, raw_means, "o-", color=colors[g], lw=1.2,
                label=f"{names[g]} observed")
        ax.plot(ages, adj_means, "s--", color=colors[g], lw=1.2, alpha=0.6,
                label=f"{names[g]} practice-adjusted")
    ax.set_xlabel("Age at visit (years)")
    ax.set_ylabel("Mean outcome")
    ax.set_title("Outcome over age, with and without practice adjustment")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --- replication studies -------------------------------------------------


@dataclass(frozen=True)
class ReplicationTermSummary:
    term: str
    true_value: float
    mean_estimate: float
    mean_bias: float
    empirical_se: float
    mean_se: float
    coverage_95: float
    n_fits: int


@dataclass(frozen=True)
class ReplicationResult:
    raw: list[tuple[int, str, float, float]]  # (seed, term, estimate, se)
    summary: list[ReplicationTermSummary]
    n_requested: int
    n_failed: int


def true_value_for_term(term: str, config: SimulationConfig) -> float:
    """Generating value behind a fitted term; NaN when none is defined."""
    fixed = {
        "(Intercept)": config.beta0,
        AGE_LABEL: config.beta1,
        "dx_bin": config.beta2,
        "dx_bin:t": config.beta3,
        "educ": config.beta4[0],
        "gen": config.beta4[1],
        "race_lat": config.beta4[2],
    }
    if term in fixed:
        return fixed[term]

    def level(vec: tuple[float, ...] | None, k: int) -> float:
        if not vec:
            return 0.0
        return vec[min(k - 1, len(vec) - 1)]

    if term.startswith("prac"):
        base, _, interact = term.partition(":")
        if base.endswith("plus"):
            k = int(base[4:-4])
            lev = level(config.pe_beta5, k)
            prev = level(config.pe_beta5, k - 1) if k > 1 else 0.0
            return lev - prev
        k = int(base[4:])
        if interact == "dx_bin":
            return level(config.pe_beta6_dx, k)
        if interact == AGE_LABEL:
            return level(config.pe_beta7_age, k)
        return level(config.pe_beta5, k)
    return float("nan")


def run_replication(
    config: SimulationConfig,
    spec: ModelSpec,
    engine: str = "gee",
    working: str = "exchangeable",
    n_reps: int = 100,
) -> ReplicationResult:
    """Repeat simulate-and-fit over seeds config.seed .. config.seed + n_reps - 1.

    Per-term output: mean bias against the generating value, the empirical
    SE of the estimates, the mean reported SE, and 95% CI coverage.  Failed
    fits are counted and skipped.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    raw: list[tuple[int, str, float, float]] = []
    per_term: dict[str, list[tuple[float, float]]] = {}
    n_failed = 0
    for s in range(config.seed, config.seed + n_reps):
        cfg = replace(config, seed=s)
        try:
            ds = simulate_cohorts(cfg)
            if engine == "gee":
                fit = fit_gee(ds, spec, working=working)
            else:
                fit = fit_lmm(ds, spec)
        except Exception:
            n_failed += 1
            continue
        for term, est, se in zip(fit.terms, fit.coefficients, fit.std_errors):
            raw.append((s, term, float(est), float(se)))
            per_term.setdefault(term, []).append((float(est), float(se)))

    summary = []
    for term, vals in per_term.items():
        ests = np.array([v[0] for v in vals])
        ses = np.array([v[1] for v in vals])
        truth = true_value_for_term(term, config)
        if math.isnan(truth):
            bias = cover = float("nan")
        else:
            bias = float(ests.mean() - truth)
            cover = float(np.mean(np.abs(ests - truth) <= Z_975 * ses))
        summary.append(
            ReplicationTermSummary(
                term=term,
                true_value=truth,
                mean_estimate=float(ests.mean()),
                mean_bias=bias,
                empirical_se=float(ests.std(ddof=1)) if len(ests) > 1 else float("nan"),
                mean_se=float(ses.mean()),
                coverage_95=cover,
                n_fits=len(ests),
            )
        )
    return ReplicationResult(
        raw=raw, summary=summary, n_requested=n_reps, n_failed=n_failed
    )


def write_replication_raw(result: ReplicationResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "term", "estimate", "se"])
        for seed, term, est, se in result.raw:
            writer.writerow([seed, term, repr(est), repr(se)])


def write_replication_summary(result: ReplicationResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["term", "true_value", "mean_estimate", "mean_bias",
             "empirical_se", "mean_se", "coverage_95", "n_fits"]
        )
        for row in result.summary:
            writer.writerow(
                [row.term, repr(row.true_value), repr(row.mean_estimate),
                 repr(row.mean_bias), repr(row.empirical_se), repr(row.mean_se),
                 repr(row.coverage_95), row.n_fits]
            )


def render_replication_text(result: ReplicationResult) -> str:
    header = ["Term", "True", "MeanEst", "Bias", "EmpSE", "MeanSE", "Cover95", "N"]
    body = []
    for row in result.summary:
        body.append([
            row.term,
            format_num(row.true_value),
            format_num(row.mean_estimate),
            format_num(row.mean_bias),
            format_num(row.empirical_se),
            format_num(row.mean_se),
            "nan" if math.isnan(row.coverage_95) else f"{row.coverage_95:.3f}",
            str(row.n_fits),
        ])
    table = _render_rows(header, body)
    return (
        f"{table}\nreplications: {result.n_requested}  failed fits: {result.n_failed}"
    )
