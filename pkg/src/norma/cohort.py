"""Cohort data model: ingestion, cleaning, eligibility, and baseline/index splits.

All types are immutable after construction; the operations here are pure
functions and safe to run in parallel per analyte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .analytes import ANALYTES, normalize_unit, UNIT_CONVERSIONS

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class Measurement:
    time: float            # unix seconds, UTC
    value: float           # canonical unit, > 0
    analyte: str


@dataclass(frozen=True)
class Patient:
    id: str
    sex: str               # "F" | "M"
    age: float             # years at the reference date


@dataclass(frozen=True)
class LabSeries:
    patient: Patient
    analyte: str
    measurements: tuple[Measurement, ...]
    states: tuple[str, ...] = ()   # per-measurement low/normal/high, filled lazily

    def values(self) -> np.ndarray:
        return np.array([m.value for m in self.measurements], dtype=np.float64)

    def times(self) -> np.ndarray:
        return np.array([m.time for m in self.measurements], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.measurements)


@dataclass(frozen=True)
class SplitPolicy:
    kind: str = "longitudinal"          # "longitudinal" | "fraction"
    min_count: int = 5
    min_spacing_days: float = 90.0      # longitudinal only
    baseline_fraction: float = 0.75     # fraction only
    baseline_cutoff: float | None = None    # unix seconds, longitudinal only
    index_window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("longitudinal", "fraction"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0 < self.baseline_fraction < 1:
            raise ValueError("baseline_fraction must be in (0, 1)")
        if self.min_count < 2:
            raise ValueError("min_count must be >= 2")


@dataclass(frozen=True)
class CohortRow:
    patient_id: str
    analyte: str
    index: Measurement
    baseline: LabSeries
    outcomes: dict[str, tuple[bool, float]] = field(default_factory=dict)
    followup_end: float | None = None


@dataclass
class RejectedRow:
    row: int
    reason: str


REASON_UNKNOWN_ANALYTE = "unknown-analyte"
REASON_UNIT_UNMAPPED = "unit-unmapped"
REASON_NON_POSITIVE = "non-positive"
REASON_BAD_TIMESTAMP = "bad-timestamp"
REASON_BAD_VALUE = "bad-value"


def parse_timestamp(raw: str) -> float:
    """RFC 3339 timestamp -> unix seconds (second resolution, UTC)."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return float(int(dt.timestamp()))


def format_timestamp(t: float) -> str:
    dt = datetime.fromtimestamp(int(t), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_measurements(rows) -> tuple[list[tuple[str, Measurement]], list[RejectedRow]]:
    """Canonicalize raw (patient, analyte, unit, value, timestamp) rows.

    Returns (kept, rejected): kept pairs (patient_id, Measurement) with
    values converted to the canonical unit, and every rejected row listed
    exactly once with a reason code. Row indices are 0-based input order.
    """
    kept: list[tuple[str, Measurement]] = []
    rejected: list[RejectedRow] = []
    for i, (patient_id, analyte, unit, value, timestamp) in enumerate(rows):
        if analyte not in ANALYTES:
            rejected.append(RejectedRow(i, REASON_UNKNOWN_ANALYTE))
            continue
        factor = UNIT_CONVERSIONS[analyte].get(normalize_unit(str(unit)))
        if factor is None:
            rejected.append(RejectedRow(i, REASON_UNIT_UNMAPPED))
            continue
        try:
            v = float(value)
        except (TypeError, ValueError):
            rejected.append(RejectedRow(i, REASON_BAD_VALUE))
            continue
        if not math.isfinite(v) or v <= 0:
            rejected.append(RejectedRow(i, REASON_NON_POSITIVE))
            continue
        try:
            t = parse_timestamp(str(timestamp))
        except (ValueError, OverflowError):
            rejected.append(RejectedRow(i, REASON_BAD_TIMESTAMP))
            continue
        kept.append((str(patient_id), Measurement(time=t, value=v * factor, analyte=analyte)))
    return kept, rejected


def clean_series(
    rows: list[tuple[str, Measurement]],
    patients: dict[str, Patient],
    warnings: list[str] | None = None,
) -> dict[str, LabSeries]:
    """Clean one analyte's cohort-wide measurements into per-patient series.

    Duplicate (patient, timestamp) rows are averaged first; then values
    beyond 3 sample SDs from the cohort median are dropped in a single
    pass. Output series are strictly increasing in time.
    """
    if not rows:
        return {}
    analyte = rows[0][1].analyte

    by_key: dict[tuple[str, float], list[float]] = {}
    for pid, m in rows:
        by_key.setdefault((pid, m.time), []).append(m.value)
    deduped = {k: float(np.mean(vs)) for k, vs in by_key.items()}

    values = np.array(list(deduped.values()), dtype=np.float64)
    if values.size >= 2:
        med = float(np.median(values))
        sd = float(np.std(values, ddof=1))
        keep = {k for k, v in deduped.items() if abs(v - med) <= 3.0 * sd}
    else:
        if warnings is not None:
            warnings.append(f"{analyte}: single measurement cohort, outlier filter skipped")
        keep = set(deduped)

    per_patient: dict[str, list[Measurement]] = {}
    for (pid, t), v in deduped.items():
        if (pid, t) in keep:
            per_patient.setdefault(pid, []).append(Measurement(time=t, value=v, analyte=analyte))

    out: dict[str, LabSeries] = {}
    for pid, ms in per_patient.items():
        ms.sort(key=lambda m: m.time)
        patient = patients.get(pid, Patient(id=pid, sex="F", age=50.0))
        out[pid] = LabSeries(patient=patient, analyte=analyte, measurements=tuple(ms))
    return out


@dataclass(frozen=True)
class Ineligible:
    reason: str


INELIGIBLE_TOO_FEW = "too-few"
INELIGIBLE_SPACING = "spacing"
INELIGIBLE_NO_INDEX = "no-index"


def _max_spaced_chain(times: np.ndarray, min_spacing: float) -> int:
    # Greedy earliest-first chain; maximal for this interval constraint.
    count = 0
    last = -math.inf
    for t in times:
        if t - last >= min_spacing:
            count += 1
            last = t
    return count


def split_baseline_index(
    series: LabSeries, policy: SplitPolicy
) -> tuple[LabSeries, list[Measurement]] | Ineligible:
    """Split a cleaned, sorted series into baseline and index measurements.

    Longitudinal policy: eligibility needs >= min_count pre-cutoff
    measurements forming a chain with consecutive gaps >= min_spacing_days,
    plus at least one measurement in the index window; the first window
    measurement is the index value. Fraction policy: baseline is the first
    ceil(baseline_fraction * n) measurements, index the remainder.
    """
    ms = series.measurements
    if policy.kind == "fraction":
        n = len(ms)
        if n < policy.min_count:
            return Ineligible(INELIGIBLE_TOO_FEW)
        n_base = math.ceil(policy.baseline_fraction * n)
        if n_base >= n:
            return Ineligible(INELIGIBLE_NO_INDEX)
        baseline = LabSeries(series.patient, series.analyte, ms[:n_base])
        return baseline, list(ms[n_base:])

    if policy.baseline_cutoff is None or policy.index_window is None:
        raise ValueError("longitudinal policy requires baseline_cutoff and index_window")
    cutoff = policy.baseline_cutoff
    w_start, w_end = policy.index_window
    pre = [m for m in ms if m.time < cutoff]
    if len(pre) < policy.min_count:
        return Ineligible(INELIGIBLE_TOO_FEW)
    times = np.array([m.time for m in pre])
    spacing = policy.min_spacing_days * SECONDS_PER_DAY
    if _max_spaced_chain(times, spacing) < policy.min_count:
        return Ineligible(INELIGIBLE_SPACING)
    in_window = [m for m in ms if w_start <= m.time < w_end]
    if not in_window:
        return Ineligible(INELIGIBLE_NO_INDEX)
    baseline = LabSeries(series.patient, series.analyte, tuple(pre))
    return baseline, [in_window[0]]


def deviation_zscore(index: Measurement, baseline: LabSeries) -> float | None:
    """|index - baseline mean| / baseline sample SD; None when SD is 0."""
    vals = baseline.values()
    if vals.size < 2:
        return None
    mu = float(np.mean(vals))
    sd = float(np.std(vals, ddof=1))
    if sd == 0.0:
        return None
    return abs(index.value - mu) / sd
