"""Cohort evaluation metrics.

Covers next-step forecasting accuracy, the individuality index with
patient-level bootstrap, abnormality prevalence and reclassification,
lead-time analysis, binned event rates with Wilson intervals, confusion
metrics on the population-normal subset, and Benjamini-Hochberg FDR
correction. All functions are pure; undefined quantities are returned as
None markers (rendered "---" in CSV outputs) rather than raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quantile_interp(values, p: float) -> float:
    """Order-statistic quantile with the (n + 1) * p linear-interpolation rule.

    h = (n + 1) * p is clamped to [1, n]; fractional h interpolates between
    adjacent order statistics. Used for every median/IQR reported here.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    h = (n + 1) * p
    h = min(max(h, 1.0), float(n))
    lo = int(np.floor(h))
    frac = h - lo
    if lo >= n:
        return float(x[-1])
    return float(x[lo - 1] + frac * (x[lo] - x[lo - 1]))


def median_iqr(values) -> tuple[float, float, float]:
    return (quantile_interp(values, 0.5),
            quantile_interp(values, 0.25),
            quantile_interp(values, 0.75))


# ------------------------------------------------------------- forecasting

@dataclass(frozen=True)
class ForecastMetrics:
    mae: float
    mape: float
    r2: float | None
    n: int


def forecast_metrics(actual, pred) -> ForecastMetrics:
    """MAE, MAPE (%), and R^2 about the actual mean; R^2 is None on zero SST."""
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if a.size != p.size:
        raise ValueError(f"length mismatch: {a.size} vs {p.size}")
    if a.size < 2:
        raise ValueError("need at least 2 prediction pairs")
    err = p - a
    mae = float(np.mean(np.abs(err)))
    mape = float(100.0 * np.mean(np.abs(err / a)))
    sst = float(np.sum((a - a.mean()) ** 2))
    r2 = None if sst == 0.0 else 1.0 - float(np.sum(err ** 2)) / sst
    return ForecastMetrics(mae, mape, r2, int(a.size))


# ------------------------------------------------------------ individuality

@dataclass(frozen=True)
class IndividualityResult:
    cv_intra: float
    cv_inter: float | None
    ii: float | None                  # None marks a degenerate denominator
    ci_intra: tuple[float, float]
    ci_inter: tuple[float, float] | None
    ci_ii: tuple[float, float] | None
    n_patients: int
    warnings: tuple[str, ...] = ()


def _cv_components(per_patient: list[np.ndarray]) -> tuple[float, float | None]:
    cvs = [float(np.std(v, ddof=1) / np.mean(v)) for v in per_patient]
    cv_intra = float(np.median(cvs))
    means = np.array([float(np.mean(v)) for v in per_patient])
    sd_of_means = float(np.std(means, ddof=1))
    cv_inter = None if sd_of_means == 0.0 else sd_of_means / float(means.mean())
    return cv_intra, cv_inter


def individuality_index(series_by_patient: dict[str, np.ndarray],
                        n_boot: int = 1000, seed: int = 0) -> IndividualityResult:
    """Within/between-person coefficient-of-variation ratio with bootstrap CIs.

    CV_intra is the median across patients of per-patient SD/mean; CV_inter
    is the SD of patient means over their mean. CIs come from a
    patient-level bootstrap (percentile, n_boot resamples). Patients need
    at least 2 measurements; non-positive patient means are excluded.
    """
    warnings = []
    kept: list[np.ndarray] = []
    for pid in sorted(series_by_patient):
        v = np.asarray(series_by_patient[pid], dtype=np.float64)
        if v.size < 2:
            continue
        if np.mean(v) <= 0:
            warnings.append(f"{pid}: non-positive mean excluded")
            continue
        kept.append(v)
    if len(kept) < 2:
        raise ValueError("need >= 2 patients with >= 2 measurements")

    cv_intra, cv_inter = _cv_components(kept)
    ii = None if cv_inter is None else cv_intra / cv_inter

    rng = np.random.default_rng(seed)
    b_intra, b_inter, b_ii = [], [], []
    for _ in range(n_boot):
        idx = rng.integers(0, len(kept), size=len(kept))
        sample = [kept[i] for i in idx]
        ci_a, ci_e = _cv_components(sample)
        b_intra.append(ci_a)
        if ci_e is not None:
            b_inter.append(ci_e)
            b_ii.append(ci_a / ci_e)

    def pct(vals):
        return (quantile_interp(vals, 0.025), quantile_interp(vals, 0.975)) if vals else None

    return IndividualityResult(
        cv_intra=cv_intra, cv_inter=cv_inter, ii=ii,
        ci_intra=pct(b_intra), ci_inter=pct(b_inter), ci_ii=pct(b_ii),
        n_patients=len(kept), warnings=tuple(warnings),
    )


# --------------------------------------------- prevalence / reclassification

@dataclass(frozen=True)
class PrevalenceResult:
    n: int
    prevalence: dict[str, float]              # framework -> abnormal fraction
    reclassification: dict[str, float | None]  # among pop-normal tests


def prevalence_reclassification(flags: list[dict[str, bool]]) -> PrevalenceResult:
    """Abnormality prevalence per framework and the pop-normal reclassification rate."""
    if not flags:
        raise ValueError("empty cohort")
    frameworks = sorted({k for f in flags for k in f})
    n = len(flags)
    prevalence = {}
    for fw in frameworks:
        rows = [f[fw] for f in flags if fw in f]
        prevalence[fw] = sum(rows) / len(rows)
    pop_normal = [f for f in flags if not f.get("pop", False)]
    reclass: dict[str, float | None] = {}
    for fw in frameworks:
        if fw == "pop":
            continue
        rows = [f[fw] for f in pop_normal if fw in f]
        reclass[fw] = (sum(rows) / len(rows)) if rows else None
    return PrevalenceResult(n=n, prevalence=prevalence, reclassification=reclass)


# ------------------------------------------------------------------ lead time

@dataclass(frozen=True)
class LeadTimeResult:
    n_model_only_flags: int
    n_confirmed: int
    median_days: float | None
    iqr_days: tuple[float, float] | None
    leads_days: tuple[float, ...] = ()


def lead_time(timelines: dict, unit_seconds: float = 86400.0) -> LeadTimeResult:
    """Lead from a model-only abnormal flag to the first later pop-abnormal test.

    timelines: {(patient, analyte): [(time, pop_flag, model_flag), ...]},
    each list chronologically sorted. Flags never confirmed count in the
    denominator only.
    """
    leads: list[float] = []
    n_flags = 0
    for key in sorted(timelines):
        rows = timelines[key]
        times = [r[0] for r in rows]
        if times != sorted(times):
            raise ValueError(f"timeline for {key} is not sorted")
        for i, (t, pop_f, model_f) in enumerate(rows):
            if model_f and not pop_f:
                n_flags += 1
                for t2, pop2, _ in rows[i + 1:]:
                    if t2 > t and pop2:
                        leads.append((t2 - t) / unit_seconds)
                        break
    if leads:
        med, q1, q3 = median_iqr(leads)
        return LeadTimeResult(n_flags, len(leads), med, (q1, q3), tuple(leads))
    return LeadTimeResult(n_flags, 0, None, None)


# -------------------------------------------------- binned rates / Wilson CI

def wilson_ci(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    denom = 1.0 + z * z / n
    center = phat + z * z / (2 * n)
    rad = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    lo = min(max(0.0, (center - rad) / denom), phat)
    hi = max(min(1.0, (center + rad) / denom), phat)
    return (float(lo), float(hi))


@dataclass(frozen=True)
class RateBin:
    lo: float
    hi: float
    n: int
    events: int
    rate: float
    ci: tuple[float, float]


def binned_event_rates(values, events, n_bins: int = 10,
                       min_observations: int = 20) -> list[RateBin] | None:
    """Equal-frequency bins of values with per-bin event rate and Wilson CI.

    Returns None (excluded marker) when there are fewer than
    min_observations usable rows. Deciles by default; pass n_bins=5 for
    the quintile variant.
    """
    v = np.asarray(values, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    keep = np.isfinite(v)
    v, e = v[keep], e[keep]
    if v.size < min_observations:
        return None
    order = np.argsort(v, kind="stable")
    splits = np.array_split(order, n_bins)
    out = []
    for part in splits:
        if part.size == 0:
            continue
        vals = v[part]
        k = int(e[part].sum())
        out.append(RateBin(
            lo=float(vals.min()), hi=float(vals.max()), n=int(part.size),
            events=k, rate=k / part.size, ci=wilson_ci(k, part.size),
        ))
    return out


# -------------------------------------------------------- confusion metrics

@dataclass(frozen=True)
class ConfusionMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    ppv: float | None
    sensitivity: float | None
    specificity: float | None
    balanced_accuracy: float | None


def confusion_metrics(flags, events) -> ConfusionMetrics:
    """2x2 metrics; zero-denominator cells become None (rendered "---").

    Callers restrict to the population-normal subset before calling, so
    the comparison isolates what each framework adds beyond the fixed
    population interval.
    """
    f = np.asarray(flags, dtype=bool)
    e = np.asarray(events, dtype=bool)
    tp = int(np.sum(f & e))
    fp = int(np.sum(f & ~e))
    fn = int(np.sum(~f & e))
    tn = int(np.sum(~f & ~e))
    ppv = tp / (tp + fp) if tp + fp else None
    sens = tp / (tp + fn) if tp + fn else None
    spec = tn / (tn + fp) if tn + fp else None
    bacc = (sens + spec) / 2 if sens is not None and spec is not None else None
    return ConfusionMetrics(tp, fp, fn, tn, ppv, sens, spec, bacc)


# ------------------------------------------------------------------- BH-FDR

def bh_fdr(pvalues) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values (monotone, clipped at 1)."""
    p = np.asarray(pvalues, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(ranked[::-1])[::-1]
    adj = np.minimum(adj, 1.0)
    out = np.empty_like(adj)
    out[order] = adj
    return out
