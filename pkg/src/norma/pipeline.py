"""End-to-end orchestration: CSV cohorts in, framework flags and metric tables out.

This is the glue the CLI and service share. Classification follows the
index/baseline protocol: personalized and model intervals are fit on the
baseline only, every index measurement is classified against them, and
patients whose personalized setpoint falls outside the population range
are excluded from the classification analyses.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytes import ANALYTES
from .baselines import baseline_predict
from .cohort import (
    CohortRow, Ineligible, LabSeries, Patient, RejectedRow, SECONDS_PER_DAY,
    SplitPolicy, clean_series, deviation_zscore, parse_measurements,
    parse_timestamp, split_baseline_index,
)
from .evaluation import (
    ForecastMetrics, IndividualityResult, LeadTimeResult, PrevalenceResult,
    RateBin, binned_event_rates, bh_fdr, confusion_metrics, forecast_metrics,
    individuality_index, lead_time, prevalence_reclassification,
)
from .model import NormaModel, build_tokens
from .reference import (
    NORMAL, PerRiIneligibleError, ReferenceInterval, classify_three_way,
    perri_setpoint_valid, popri_classify, select_perri,
)
from .survival import CoxResult, cox_fit


@dataclass
class CohortData:
    series: dict[str, dict[str, LabSeries]]    # analyte -> patient id -> series
    patients: dict[str, Patient]
    rejects: list[RejectedRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def all_series(self) -> list[LabSeries]:
        return [s for per_analyte in self.series.values() for s in per_analyte.values()]


def load_measurements(path: str | Path) -> CohortData:
    """Read the measurement CSV schema and run ingestion + cleaning."""
    patients: dict[str, Patient] = {}
    raw_rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            pid = row["patient_id"]
            if pid not in patients:
                try:
                    patients[pid] = Patient(pid, row["sex"].strip().upper()[:1], float(row["age"]))
                except (ValueError, KeyError):
                    patients[pid] = Patient(pid, "F", 50.0)
            raw_rows.append((pid, row["analyte"], row["unit"], row["value"], row["timestamp"]))

    kept, rejects = parse_measurements(raw_rows)
    warnings: list[str] = []
    by_analyte: dict[str, list] = {}
    for pid, m in kept:
        by_analyte.setdefault(m.analyte, []).append((pid, m))
    series = {a: clean_series(rows, patients, warnings) for a, rows in sorted(by_analyte.items())}
    return CohortData(series=series, patients=patients, rejects=rejects, warnings=warnings)


def load_outcomes(path: str | Path) -> dict[str, dict[str, tuple[bool, float]]]:
    out: dict[str, dict[str, tuple[bool, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            event = str(row["event"]).strip().lower() in ("1", "true", "yes")
            out.setdefault(row["patient_id"], {})[row["outcome"]] = (event, float(row["time_days"]))
    return out


def policy_from_json(obj: dict | str | Path) -> SplitPolicy:
    if not isinstance(obj, dict):
        obj = json.loads(Path(obj).read_text())
    kwargs = dict(obj)
    if "baseline_cutoff" in kwargs and isinstance(kwargs["baseline_cutoff"], str):
        kwargs["baseline_cutoff"] = parse_timestamp(kwargs["baseline_cutoff"])
    if "index_window" in kwargs and kwargs["index_window"] is not None:
        kwargs["index_window"] = tuple(
            parse_timestamp(t) if isinstance(t, str) else t for t in kwargs["index_window"])
    return SplitPolicy(**kwargs)


def build_cohort_frame(
    data: CohortData,
    policy: SplitPolicy,
    outcomes: dict[str, dict[str, tuple[bool, float]]] | None = None,
) -> tuple[list[CohortRow], dict[tuple[str, str], str]]:
    """Patients x analytes x outcomes rows feeding the statistics tasks.

    One row per eligible patient-analyte with its first index measurement,
    baseline series, and any outcome labels; ineligible series are returned
    with their reason codes rather than dropped silently.
    """
    outcomes = outcomes or {}
    rows: list[CohortRow] = []
    ineligible: dict[tuple[str, str], str] = {}
    for analyte in sorted(data.series):
        for pid in sorted(data.series[analyte]):
            split = split_baseline_index(data.series[analyte][pid], policy)
            if isinstance(split, Ineligible):
                ineligible[(pid, analyte)] = split.reason
                continue
            baseline, index_list = split
            labels = dict(outcomes.get(pid, {}))
            followup = None
            if labels:
                followup = index_list[0].time + max(
                    t for _, t in labels.values()) * SECONDS_PER_DAY
                if any(t < 0 for _, t in labels.values()):
                    raise ValueError(f"negative follow-up for patient {pid}")
            rows.append(CohortRow(
                patient_id=pid, analyte=analyte, index=index_list[0],
                baseline=baseline, outcomes=labels, followup_end=followup,
            ))
    return rows, ineligible


# ------------------------------------------------------------ classification

@dataclass
class FlagRow:
    patient_id: str
    analyte: str
    time: float
    value: float
    pop_state: str
    flags: dict[str, bool]
    deviation: float | None
    per_interval: ReferenceInterval | None = None
    norma_interval: ReferenceInterval | None = None


@dataclass
class ClassifiedCohort:
    rows: list[FlagRow]
    n_setpoint_excluded: int
    ineligible: dict[tuple[str, str], str]
    frameworks: tuple[str, ...]


def classify_cohort(
    data: CohortData,
    policy: SplitPolicy,
    model: NormaModel | None = None,
    frameworks: tuple[str, ...] = ("pop", "per", "norma"),
    batch_size: int = 256,
) -> ClassifiedCohort:
    """Split each series, fit the requested frameworks on the baseline, and
    classify every index measurement."""
    if "norma" in frameworks and model is None:
        raise ValueError("norma framework requested without a model")
    rows: list[FlagRow] = []
    ineligible: dict[tuple[str, str], str] = {}
    excluded = 0

    pending: list[tuple[int, object]] = []   # (row position, tokens) for batched inference
    for analyte in sorted(data.series):
        for pid in sorted(data.series[analyte]):
            series = data.series[analyte][pid]
            split = split_baseline_index(series, policy)
            if isinstance(split, Ineligible):
                ineligible[(pid, analyte)] = split.reason
                continue
            baseline, index_list = split
            sex = series.patient.sex

            per_iv = None
            if "per" in frameworks:
                try:
                    per_iv, gmm_model = select_perri(baseline)
                except PerRiIneligibleError:
                    ineligible[(pid, analyte)] = "per-baseline-too-short"
                    continue
                if not perri_setpoint_valid(gmm_model, per_iv, analyte, sex):
                    excluded += 1
                    continue

            for m in index_list:
                pop_state = popri_classify(m.value, analyte, sex)
                row = FlagRow(
                    patient_id=pid, analyte=analyte, time=m.time, value=m.value,
                    pop_state=pop_state,
                    flags={},
                    deviation=deviation_zscore(m, baseline),
                    per_interval=per_iv,
                )
                rows.append(row)
                if "norma" in frameworks:
                    horizon = max(0.0, (m.time - baseline.measurements[-1].time) / SECONDS_PER_DAY)
                    tokens = build_tokens(baseline, NORMAL, horizon, model.config)
                    pending.append((len(rows) - 1, tokens))

    if pending:
        from .model import norma_interval
        for i in range(0, len(pending), batch_size):
            chunk = pending[i:i + batch_size]
            preds = model.predict_batch([tk for _, tk in chunk])
            for (row_idx, _), pred in zip(chunk, preds):
                iv, _degenerate = norma_interval(pred)
                rows[row_idx].norma_interval = iv

    for row in rows:
        row.flags = classify_three_way(
            row.value, row.pop_state,
            row.per_interval if "per" in frameworks else None,
            row.norma_interval if "norma" in frameworks else None,
        )
    return ClassifiedCohort(rows, excluded, ineligible, tuple(frameworks))


# ------------------------------------------------------------------ ri fit

def fit_reference_intervals(data: CohortData, policy: SplitPolicy, framework: str):
    """`ri fit` rows: patient_id, analyte, framework, lower, upper, valid."""
    out = []
    for analyte in sorted(data.series):
        spec = ANALYTES[analyte]
        for pid in sorted(data.series[analyte]):
            series = data.series[analyte][pid]
            if framework == "pop":
                lo, hi = spec.bounds(series.patient.sex)
                out.append((pid, analyte, "pop", lo, hi, True))
                continue
            split = split_baseline_index(series, policy)
            if isinstance(split, Ineligible):
                continue
            baseline, _ = split
            try:
                iv, gmm_model = select_perri(baseline)
            except PerRiIneligibleError:
                continue
            valid = perri_setpoint_valid(gmm_model, iv, analyte, series.patient.sex)
            out.append((pid, analyte, "per", iv.lower, iv.upper, valid))
    return out


# -------------------------------------------------------------- eval tasks

def task_forecast(
    data: CohortData,
    model: NormaModel | None = None,
    batch_size: int = 256,
    min_prefix: int = 2,
) -> dict[tuple[str, str], ForecastMetrics]:
    """Teacher-forced next-step accuracy per (analyte, model) incl. baselines."""
    actual: dict[str, list[float]] = {}
    preds: dict[tuple[str, str], list[float]] = {}
    pending = []
    for analyte in sorted(data.series):
        for pid in sorted(data.series[analyte]):
            s = data.series[analyte][pid]
            ms = s.measurements
            for t in range(min_prefix, len(ms)):
                prefix_vals = [m.value for m in ms[:t]]
                target = ms[t].value
                actual.setdefault(analyte, []).append(target)
                for kind in ("last", "patient_mean", "ar"):
                    val, _ = baseline_predict(kind, prefix_vals)
                    preds.setdefault((analyte, kind), []).append(val)
                if model is not None:
                    prefix = LabSeries(s.patient, analyte, ms[:t], s.states[:t] if s.states else ())
                    horizon = (ms[t].time - ms[t - 1].time) / SECONDS_PER_DAY
                    state = popri_classify(target, analyte, s.patient.sex)
                    tokens = build_tokens(prefix, state, horizon, model.config)
                    pending.append((analyte, tokens))
                    preds.setdefault((analyte, "norma"), []).append(np.nan)

    if pending:
        filled: dict[str, list[float]] = {}
        for i in range(0, len(pending), batch_size):
            chunk = pending[i:i + batch_size]
            for (analyte, _), pred in zip(chunk, model.predict_batch([tk for _, tk in chunk])):
                filled.setdefault(analyte, []).append(pred.point())
        for analyte, vals in filled.items():
            preds[(analyte, "norma")] = vals

    return {
        (analyte, kind): forecast_metrics(actual[analyte], vals)
        for (analyte, kind), vals in sorted(preds.items())
    }


def task_individuality(data: CohortData, n_boot: int = 1000, seed: int = 0
                       ) -> dict[str, IndividualityResult]:
    out = {}
    for analyte in sorted(data.series):
        per_patient = {pid: s.values() for pid, s in data.series[analyte].items() if len(s) >= 2}
        if len(per_patient) < 2:
            continue
        out[analyte] = individuality_index(per_patient, n_boot=n_boot, seed=seed)
    return out


def task_prevalence(classified: ClassifiedCohort) -> dict[str, PrevalenceResult]:
    """Per-analyte plus pooled ("ALL") prevalence and reclassification."""
    by_analyte: dict[str, list[dict]] = {}
    for row in classified.rows:
        by_analyte.setdefault(row.analyte, []).append(row.flags)
    out = {a: prevalence_reclassification(flags) for a, flags in sorted(by_analyte.items())}
    out["ALL"] = prevalence_reclassification([r.flags for r in classified.rows])
    return out


def task_lead_time(classified: ClassifiedCohort, model_framework: str = "norma"
                   ) -> dict[str, LeadTimeResult]:
    by_analyte: dict[str, dict] = {}
    for row in sorted(classified.rows, key=lambda r: (r.analyte, r.patient_id, r.time)):
        if model_framework not in row.flags:
            continue
        tl = by_analyte.setdefault(row.analyte, {}).setdefault((row.patient_id, row.analyte), [])
        tl.append((row.time, row.flags["pop"], row.flags[model_framework]))
    return {a: lead_time(timelines) for a, timelines in sorted(by_analyte.items())}


def task_deviation_bins(
    data: CohortData,
    policy: SplitPolicy,
    outcomes: dict,
    outcome_name: str,
    variant: str = "deviation",
    n_bins: int = 10,
) -> dict[str, list[RateBin] | None]:
    """Event rate by deviation-decile (or raw-value quintile) per analyte.

    Index measurements with an undefined deviation (zero-variance baseline)
    are excluded from the deviation variant.
    """
    frame, _ = build_cohort_frame(data, policy, outcomes)
    by_analyte: dict[str, tuple[list, list]] = {}
    for row in frame:
        if outcome_name not in row.outcomes:
            continue
        if variant == "raw":
            value = row.index.value
        else:
            value = deviation_zscore(row.index, row.baseline)
            if value is None:
                continue
        values, events = by_analyte.setdefault(row.analyte, ([], []))
        values.append(value)
        events.append(row.outcomes[outcome_name][0])
    return {a: binned_event_rates(v, e, n_bins=n_bins)
            for a, (v, e) in sorted(by_analyte.items())}


def task_confusion(
    classified: ClassifiedCohort,
    outcomes: dict,
    outcome_name: str,
) -> dict[tuple[str, str], object]:
    """PPV/sensitivity/specificity per (analyte, framework), pop-normal subset."""
    out = {}
    frameworks = [f for f in classified.frameworks if f != "pop"]
    by_analyte: dict[str, list[FlagRow]] = {}
    for row in classified.rows:
        if row.pop_state == NORMAL:
            by_analyte.setdefault(row.analyte, []).append(row)
    for analyte, rows in sorted(by_analyte.items()):
        usable = [r for r in rows
                  if r.patient_id in outcomes and outcome_name in outcomes[r.patient_id]]
        if not usable:
            continue
        events = [outcomes[r.patient_id][outcome_name][0] for r in usable]
        for fw in frameworks:
            flags = [r.flags.get(fw, False) for r in usable]
            out[(analyte, fw)] = confusion_metrics(flags, events)
    return out


def task_cox(
    classified: ClassifiedCohort,
    data: CohortData,
    outcomes: dict,
    outcome_name: str,
    seed: int = 0,
    n_boot: int = 1000,
) -> dict[tuple[str, str], CoxResult | str]:
    """Cox PH of the abnormality flag (adjusted for age/sex) per analyte and
    framework, with BH-FDR adjusted p-values across the whole family.

    Uses the first index measurement per patient-analyte. Failures are
    recorded as message strings rather than aborting the family.
    """
    first_rows: dict[tuple[str, str], FlagRow] = {}
    for row in sorted(classified.rows, key=lambda r: (r.analyte, r.patient_id, r.time)):
        first_rows.setdefault((row.patient_id, row.analyte), row)

    by_analyte: dict[str, list[FlagRow]] = {}
    for row in first_rows.values():
        by_analyte.setdefault(row.analyte, []).append(row)

    results: dict[tuple[str, str], CoxResult | str] = {}
    for analyte, rows in sorted(by_analyte.items()):
        usable = [r for r in rows
                  if r.patient_id in outcomes and outcome_name in outcomes[r.patient_id]]
        if len(usable) < 10:
            continue
        age = [data.patients[r.patient_id].age for r in usable]
        sex = [1.0 if data.patients[r.patient_id].sex == "M" else 0.0 for r in usable]
        event = [outcomes[r.patient_id][outcome_name][0] for r in usable]
        time_days = [outcomes[r.patient_id][outcome_name][1] for r in usable]
        for fw in classified.frameworks:
            flags = [1.0 if r.flags.get(fw, False) else 0.0 for r in usable]
            try:
                results[(analyte, fw)] = cox_fit(flags, age, sex, event, time_days,
                                                 seed=seed, n_boot=n_boot)
            except (ValueError, OverflowError, np.linalg.LinAlgError, RuntimeError) as exc:
                results[(analyte, fw)] = f"error: {exc}"

    fitted = [(key, res) for key, res in results.items() if isinstance(res, CoxResult)]
    if fitted:
        adj = bh_fdr([res.p_value for _, res in fitted])
        from dataclasses import replace
        for (key, res), a in zip(fitted, adj):
            results[key] = replace(res, adjusted_p=float(a))
    return results


# ------------------------------------------------------------- CSV helpers

def fmt_cell(v) -> str:
    if v is None:
        return "---"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(v) for v in row) + "\n")


def write_canonical_measurements(path: str | Path, data: CohortData) -> None:
    """Cleaned measurements back out in the ingestion schema (canonical units)."""
    from .cohort import format_timestamp
    rows = []
    for analyte in sorted(data.series):
        for pid in sorted(data.series[analyte]):
            s = data.series[analyte][pid]
            for m in s.measurements:
                rows.append((pid, s.patient.sex, s.patient.age, analyte,
                             ANALYTES[analyte].unit, m.value, format_timestamp(m.time)))
    write_csv(path, ["patient_id", "sex", "age", "analyte", "unit", "value", "timestamp"], rows)
