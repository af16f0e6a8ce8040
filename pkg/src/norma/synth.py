"""Seeded synthetic cohort generator.

Each patient gets a per-analyte setpoint drawn from the population
distribution; observations follow the setpoint plus optional linear drift
plus stationary noise (independent draws, or an exponentially decaying
autocorrelation over irregular gaps when ar_phi > 0). Outcomes are drawn
from a logistic or proportional-hazards link on deviation/drift, and a
ground-truth sidecar records everything an oracle needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytes import ANALYTES
from .cohort import SECONDS_PER_DAY, format_timestamp
from .gmm import seed_from

EPOCH_SECONDS = 1577836800.0   # 2020-01-01T00:00:00Z


@dataclass(frozen=True)
class AnalyteParams:
    pop_mean: float
    between_sd: float
    within_sd: float | tuple[float, float]   # scalar, or (lo, hi) log-uniform per patient
    ar_phi: float = 0.0                      # lag-1 correlation at ar_ref_days
    ar_ref_days: float = 90.0
    drift_slope_per_year: float = 0.0

    def __post_init__(self):
        sds = self.within_sd if isinstance(self.within_sd, (tuple, list)) else (self.within_sd,)
        if self.between_sd <= 0 or any(s <= 0 for s in sds):
            raise ValueError("SDs must be positive")
        if not 0.0 <= self.ar_phi < 1.0:
            raise ValueError("ar_phi must be in [0, 1)")


@dataclass(frozen=True)
class OutcomeSpec:
    name: str = "death"
    kind: str = "hazard"            # "hazard" | "logistic"
    base_rate: float = 1e-4         # hazard per day, or logistic intercept (log-odds)
    coef_deviation: float = 0.0
    coef_drift: float = 0.0
    horizon_days: float = 3650.0


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int
    analytes: dict[str, AnalyteParams]
    count_dist: dict = field(default_factory=lambda: {"kind": "fixed", "n": 12})
    spacing_dist: dict = field(default_factory=lambda: {"kind": "fixed", "days": 90.0})
    drift_fraction: float = 0.0
    female_fraction: float = 0.5
    age_range: tuple[int, int] = (25, 85)
    outcome: OutcomeSpec = field(default_factory=OutcomeSpec)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drift_fraction <= 1.0:
            raise ValueError("drift_fraction must be in [0, 1]")
        for code in self.analytes:
            if code not in ANALYTES:
                raise KeyError(f"unknown analyte {code!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSpec":
        analytes = {code: AnalyteParams(**{
            **params,
            "within_sd": tuple(params["within_sd"]) if isinstance(params["within_sd"], list)
            else params["within_sd"],
        }) for code, params in d["analytes"].items()}
        outcome = OutcomeSpec(**d.get("outcome", {}))
        return cls(
            n_patients=d["n_patients"],
            analytes=analytes,
            count_dist=d.get("count_dist", {"kind": "fixed", "n": 12}),
            spacing_dist=d.get("spacing_dist", {"kind": "fixed", "days": 90.0}),
            drift_fraction=d.get("drift_fraction", 0.0),
            female_fraction=d.get("female_fraction", 0.5),
            age_range=tuple(d.get("age_range", (25, 85))),
            outcome=outcome,
            seed=d.get("seed", 0),
        )


def _draw_count(dist: dict, rng) -> int:
    kind = dist["kind"]
    if kind == "fixed":
        return int(dist["n"])
    if kind == "uniform_int":
        return int(rng.integers(dist["low"], dist["high"] + 1))
    if kind == "choice":
        return int(rng.choice(dist["values"], p=dist.get("probs")))
    raise ValueError(f"unknown count_dist kind {kind!r}")


def _draw_gaps(dist: dict, n: int, rng) -> np.ndarray:
    kind = dist["kind"]
    if kind == "fixed":
        return np.full(n, float(dist["days"]))
    if kind == "loguniform":
        lo, hi = math.log(dist["low"]), math.log(dist["high"])
        return np.exp(rng.uniform(lo, hi, size=n))
    raise ValueError(f"unknown spacing_dist kind {kind!r}")


@dataclass
class PatientTruth:
    id: str
    sex: str
    age: int
    drifter: bool
    per_analyte: dict
    event_prob: float = 0.0


def _simulate_values(setpoint, sigma, phi, ref_days, drift_per_day, times_days, rng):
    n = len(times_days)
    x = np.empty(n)
    z = rng.normal(0.0, sigma)
    for k in range(n):
        if k > 0:
            gap = times_days[k] - times_days[k - 1]
            rho = 0.0 if phi == 0.0 else math.exp(math.log(phi) * gap / ref_days)
            z = rho * z + math.sqrt(max(0.0, 1.0 - rho * rho)) * sigma * rng.normal()
        val = setpoint + drift_per_day * (times_days[k] - times_days[0]) + z
        tries = 0
        while val <= 0 and tries < 100:
            z = rng.normal(0.0, sigma)
            val = setpoint + drift_per_day * (times_days[k] - times_days[0]) + z
            tries += 1
        x[k] = val
    return x


def generate_cohort(spec: CohortSpec):
    """Returns (measurement_rows, outcome_rows, truth). Fully seed-deterministic."""
    width = max(4, len(str(spec.n_patients)))
    meas_rows = []
    outcome_rows = []
    patients: list[PatientTruth] = []
    probs = []

    for i in range(spec.n_patients):
        rng = np.random.default_rng(seed_from(spec.seed, "patient", i))
        pid = f"P{i:0{width}d}"
        sex = "F" if rng.random() < spec.female_fraction else "M"
        age = int(rng.integers(spec.age_range[0], spec.age_range[1] + 1))
        drifter = bool(rng.random() < spec.drift_fraction)
        start_day = float(rng.uniform(0.0, 365.0))

        per_analyte = {}
        devs = []
        for code in sorted(spec.analytes):
            ap = spec.analytes[code]
            setpoint = float(rng.normal(ap.pop_mean, ap.between_sd))
            if isinstance(ap.within_sd, tuple):
                lo, hi = ap.within_sd
                sigma = float(np.exp(rng.uniform(math.log(lo), math.log(hi))))
            else:
                sigma = float(ap.within_sd)
            n = _draw_count(spec.count_dist, rng)
            gaps = _draw_gaps(spec.spacing_dist, n - 1, rng)
            times = start_day + np.concatenate([[0.0], np.cumsum(gaps)])
            slope_day = 0.0
            if drifter and ap.drift_slope_per_year != 0.0:
                sign = 1.0 if rng.random() < 0.5 else -1.0
                slope_day = sign * ap.drift_slope_per_year / 365.25
            values = _simulate_values(setpoint, sigma, ap.ar_phi, ap.ar_ref_days,
                                      slope_day, times, rng)
            per_analyte[code] = {
                "setpoint": setpoint, "sigma": sigma,
                "drift_per_year": slope_day * 365.25,
                "times_days": times.tolist(),
            }
            devs.append(abs(values[-1] - setpoint) / sigma)
            unit = ANALYTES[code].unit
            for t_day, v in zip(times, values):
                ts = format_timestamp(EPOCH_SECONDS + t_day * SECONDS_PER_DAY)
                meas_rows.append((pid, sex, age, code, unit, float(v), ts))

        oc = spec.outcome
        dev = float(np.mean(devs)) if devs else 0.0
        lp = oc.coef_deviation * dev + oc.coef_drift * (1.0 if drifter else 0.0)
        if oc.kind == "logistic":
            p_event = 1.0 / (1.0 + math.exp(-(oc.base_rate + lp)))
            event = bool(rng.random() < p_event)
            time_days = float(rng.uniform(0.0, oc.horizon_days)) if event else oc.horizon_days
        elif oc.kind == "hazard":
            lam = oc.base_rate * math.exp(lp)
            p_event = 1.0 - math.exp(-lam * oc.horizon_days)
            t_event = float(rng.exponential(1.0 / lam))
            event = t_event <= oc.horizon_days
            time_days = min(t_event, oc.horizon_days)
        else:
            raise ValueError(f"unknown outcome kind {oc.kind!r}")
        outcome_rows.append((pid, oc.name, int(event), float(time_days)))
        probs.append(p_event)
        patients.append(PatientTruth(pid, sex, age, drifter, per_analyte, p_event))

    truth = {
        "seed": spec.seed,
        "analytic_event_rate": float(np.mean(probs)) if probs else 0.0,
        "event_rate_se": float(np.sqrt(np.sum([p * (1 - p) for p in probs])) / max(len(probs), 1)),
        "analytes": {
            code: {
                "pop_mean": ap.pop_mean,
                "between_sd": ap.between_sd,
                "within_sd": list(ap.within_sd) if isinstance(ap.within_sd, tuple) else ap.within_sd,
                "true_ii": (float(np.mean(ap.within_sd)) if isinstance(ap.within_sd, tuple)
                            else ap.within_sd) / ap.between_sd,
            }
            for code, ap in spec.analytes.items()
        },
        "patients": [
            {"id": p.id, "sex": p.sex, "age": p.age, "drifter": p.drifter,
             "event_prob": p.event_prob, "analytes": p.per_analyte}
            for p in patients
        ],
    }
    return meas_rows, outcome_rows, truth


def write_cohort(spec: CohortSpec, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meas_rows, outcome_rows, truth = generate_cohort(spec)

    meas_path = out / "measurements.csv"
    with open(meas_path, "w") as fh:
        fh.write("patient_id,sex,age,analyte,unit,value,timestamp\n")
        for pid, sex, age, code, unit, value, ts in meas_rows:
            fh.write(f"{pid},{sex},{age},{code},{unit},{value!r},{ts}\n")

    outcome_path = out / "outcomes.csv"
    with open(outcome_path, "w") as fh:
        fh.write("patient_id,outcome,event,time_days\n")
        for pid, name, event, time_days in outcome_rows:
            fh.write(f"{pid},{name},{event},{time_days!r}\n")

    truth_path = out / "truth.json"
    truth_path.write_text(json.dumps(truth, sort_keys=True, indent=1))
    return {"measurements": meas_path, "outcomes": outcome_path, "truth": truth_path}
