"""One-at-a-time sensitivity sweeps over the model's input features.

The synthetic baseline per analyte is a 50-year-old male with 10
measurements at the male reference-range midpoint spaced 90 days apart and
a 30-day prediction horizon. Each sweep varies a single feature; the
variability sweep draws 30 seeded noisy histories per multiplier and
averages. Width changes are reported as a percentage of the population
reference-range width so the zero-variability baseline stays comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytes import ANALYTES, AnalyteSpec
from .cohort import LabSeries, Measurement, Patient, SECONDS_PER_DAY
from .gmm import seed_from
from .model import NormaModel, build_tokens, norma_interval
from .reference import NORMAL

SWEEP_FEATURES = ("age", "sex", "history_length", "horizon", "variability")

DEFAULT_GRIDS = {
    "age": [float(a) for a in range(20, 85, 5)],
    "sex": ["F", "M"],
    "history_length": [2, 5, 10, 20, 30, 60, 100, 200, 300],
    "horizon": [7.0, 14.0, 30.0, 90.0, 180.0, 365.0, 730.0, 1825.0, 3650.0],
    "variability": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
}

BASE_AGE = 50.0
BASE_SEX = "M"
BASE_N = 10
BASE_SPACING_DAYS = 90.0
BASE_HORIZON_DAYS = 30.0
N_VARIABILITY_DRAWS = 30


@dataclass(frozen=True)
class SweepRecord:
    analyte: str
    feature: str
    value: object
    median: float
    interval_width: float
    pct_width_change: float    # vs baseline, as % of the Pop_RI width


class UntrainedModelError(RuntimeError):
    pass


def _history(analyte: str, sex: str, age: float, values: np.ndarray,
             spacing_days: float = BASE_SPACING_DAYS) -> LabSeries:
    patient = Patient("sweep", sex, age)
    times = np.arange(len(values)) * spacing_days * SECONDS_PER_DAY
    ms = tuple(Measurement(time=float(t), value=float(v), analyte=analyte)
               for t, v in zip(times, values))
    return LabSeries(patient, analyte, ms)


def _predict_stats(model: NormaModel, series_list: list[LabSeries],
                   horizon_days: float) -> tuple[float, float]:
    tokens = [build_tokens(s, NORMAL, horizon_days, model.config) for s in series_list]
    preds = model.predict_batch(tokens)
    medians, widths = [], []
    for pred in preds:
        iv, _ = norma_interval(pred)
        medians.append(pred.point())
        widths.append(iv.upper - iv.lower)
    return float(np.mean(medians)), float(np.mean(widths))


def _noisy_histories(analyte: str, sex: str, age: float, midpoint: float,
                     sd: float, n: int, seed: int) -> list[LabSeries]:
    out = []
    for d in range(N_VARIABILITY_DRAWS):
        rng = np.random.default_rng(seed_from(seed, analyte, "variability", sd, d))
        vals = rng.normal(midpoint, sd, size=n) if sd > 0 else np.full(n, midpoint)
        vals = np.maximum(vals, 1e-6 * max(1.0, midpoint))
        out.append(_history(analyte, sex, age, vals))
    return out


def sweep_analyte(model: NormaModel, spec: AnalyteSpec, grids: dict | None = None,
                  seed: int = 0) -> list[SweepRecord]:
    grids = {**DEFAULT_GRIDS, **(grids or {})}
    midpoint = spec.midpoint(BASE_SEX)
    pop_width = spec.width(BASE_SEX)
    base_values = np.full(BASE_N, midpoint)

    base_series = _history(spec.code, BASE_SEX, BASE_AGE, base_values)
    base_median, base_width = _predict_stats(model, [base_series], BASE_HORIZON_DAYS)

    records = [SweepRecord(spec.code, "baseline", None, base_median, base_width, 0.0)]

    def emit(feature, value, median, width):
        pct = 100.0 * (width - base_width) / pop_width
        records.append(SweepRecord(spec.code, feature, value, median, width, pct))

    for age in grids["age"]:
        m, w = _predict_stats(model, [_history(spec.code, BASE_SEX, age, base_values)],
                              BASE_HORIZON_DAYS)
        emit("age", age, m, w)
    for sex in grids["sex"]:
        mid = spec.midpoint(sex)
        m, w = _predict_stats(model, [_history(spec.code, sex, BASE_AGE, np.full(BASE_N, mid))],
                              BASE_HORIZON_DAYS)
        emit("sex", sex, m, w)
    for n in grids["history_length"]:
        m, w = _predict_stats(model, [_history(spec.code, BASE_SEX, BASE_AGE,
                                               np.full(int(n), midpoint))], BASE_HORIZON_DAYS)
        emit("history_length", int(n), m, w)
    for h in grids["horizon"]:
        m, w = _predict_stats(model, [base_series], float(h))
        emit("horizon", float(h), m, w)
    for mult in grids["variability"]:
        sd = float(mult) * pop_width / 10.0
        histories = _noisy_histories(spec.code, BASE_SEX, BASE_AGE, midpoint, sd, BASE_N, seed)
        m, w = _predict_stats(model, histories, BASE_HORIZON_DAYS)
        emit("variability", float(mult), m, w)
    return records


def sensitivity_sweep(model: NormaModel, analytes: list[str] | None = None,
                      grids: dict | None = None, seed: int = 0) -> list[SweepRecord]:
    """Full sweep table over the requested analytes (default: all 30)."""
    if not model.trained:
        raise UntrainedModelError("refusing to sweep an untrained checkpoint")
    codes = analytes if analytes is not None else sorted(ANALYTES)
    records = []
    for code in codes:
        records.extend(sweep_analyte(model, ANALYTES[code], grids, seed))
    return records


def sweep_base_case(
    model: NormaModel,
    base_series: LabSeries,
    horizon_days: float,
    feature: str,
    grid: list,
    seed: int = 0,
) -> list[SweepRecord]:
    """Service-side sweep anchored on a user's base case instead of the
    synthetic midpoint baseline.

    age/sex/horizon vary the request directly; history_length rebuilds the
    history at the user's mean value and median spacing; variability
    redraws values around the user's mean with the analyte-scaled SD.
    """
    if not model.trained:
        raise UntrainedModelError("refusing to sweep an untrained checkpoint")
    if feature not in SWEEP_FEATURES:
        raise ValueError(f"unknown sweep feature {feature!r}; have {SWEEP_FEATURES}")
    spec = ANALYTES[base_series.analyte]
    patient = base_series.patient
    values = base_series.values()
    mean_val = float(values.mean())
    times = base_series.times()
    spacing = float(np.median(np.diff(times)) / SECONDS_PER_DAY) if len(times) > 1 else BASE_SPACING_DAYS
    pop_width = spec.width(patient.sex if spec.sex_stratified else BASE_SEX)

    base_median, base_width = _predict_stats(model, [base_series], horizon_days)
    records = [SweepRecord(spec.code, "baseline", None, base_median, base_width, 0.0)]

    def emit(value, median, width):
        pct = 100.0 * (width - base_width) / pop_width
        records.append(SweepRecord(spec.code, feature, value, median, width, pct))

    for g in grid:
        if feature == "age":
            s = LabSeries(Patient(patient.id, patient.sex, float(g)), spec.code,
                          base_series.measurements)
            m, w = _predict_stats(model, [s], horizon_days)
        elif feature == "sex":
            s = LabSeries(Patient(patient.id, str(g), patient.age), spec.code,
                          base_series.measurements)
            m, w = _predict_stats(model, [s], horizon_days)
        elif feature == "horizon":
            m, w = _predict_stats(model, [base_series], float(g))
        elif feature == "history_length":
            s = _history(spec.code, patient.sex, patient.age,
                         np.full(int(g), mean_val), spacing)
            m, w = _predict_stats(model, [s], horizon_days)
        else:
            sd = float(g) * pop_width / 10.0
            histories = [
                LabSeries(patient, spec.code, h.measurements)
                for h in _noisy_histories(spec.code, patient.sex, patient.age,
                                          mean_val, sd, len(values), seed)
            ]
            m, w = _predict_stats(model, histories, horizon_days)
        emit(g, m, w)
    return records
