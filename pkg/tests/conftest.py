"""Shared fixtures: synthetic cohorts and trained checkpoints.

The trained-model fixtures are session-scoped because training dominates
the suite's runtime; every acceptance criterion that needs a checkpoint
shares these three runs.
"""

import time

import pytest

from norma.cohort import Patient, clean_series, parse_measurements
from norma.model import preset
from norma.synth import AnalyteParams, CohortSpec, OutcomeSpec, generate_cohort
from norma.training import TrainPlan, patient_split, train


def cohort_series(spec: CohortSpec):
    """Generate, ingest, and clean a synthetic cohort; returns (series_map, truth)."""
    meas, _, truth = generate_cohort(spec)
    rows = [(pid, code, unit, value, ts) for pid, sex, age, code, unit, value, ts in meas]
    patients = {pid: Patient(pid, sex, float(age)) for pid, sex, age, *_ in meas}
    kept, rejected = parse_measurements(rows)
    assert not rejected
    series_map = {}
    by_analyte = {}
    for pid, m in kept:
        by_analyte.setdefault(m.analyte, []).append((pid, m))
    for analyte, rws in by_analyte.items():
        series_map[analyte] = clean_series(rws, patients)
    return series_map, truth, patients


class TrainedRun:
    def __init__(self, spec, config, plan):
        self.spec = spec
        self.config = config
        self.plan = plan
        series_map, self.truth, self.patients = cohort_series(spec)
        self.series_map = series_map
        self.series = [s for per in series_map.values() for s in per.values()]
        t0 = time.time()
        self.result = train(config, self.series, plan)
        self.train_seconds = time.time() - t0
        self.model = self.result.model
        splits = patient_split([s.patient.id for s in self.series],
                               plan.seed, plan.fractions)
        self.train_ids, self.val_ids, self.test_ids = splits

    def test_series(self):
        return [s for s in self.series if s.patient.id in self.test_ids]


@pytest.fixture(scope="session")
def quantile_run():
    """Heteroscedastic AR(1) cohort + quantile-preset checkpoint (calibration)."""
    spec = CohortSpec(
        n_patients=2000,
        analytes={"GLU": AnalyteParams(pop_mean=84.5, between_sd=3.0,
                                       within_sd=(1.0, 2.5),
                                       ar_phi=0.9, ar_ref_days=90.0)},
        count_dist={"kind": "uniform_int", "low": 8, "high": 16},
        spacing_dist={"kind": "fixed", "days": 90.0},
        seed=20250801,
    )
    config = preset("eicu-default", d_model=32, n_layers=2, n_heads=4)
    return TrainedRun(spec, config, TrainPlan(max_epochs=30, patience=8, seed=1))


@pytest.fixture(scope="session")
def gaussian_run():
    """i.i.d. cohort with fixed within-person SD + gaussian-preset checkpoint."""
    spec = CohortSpec(
        n_patients=700,
        analytes={"GLU": AnalyteParams(pop_mean=84.5, between_sd=4.0, within_sd=3.0)},
        count_dist={"kind": "choice",
                    "values": [5, 8, 12, 16, 22, 30, 40, 50, 60, 75],
                    "probs": [0.14, 0.14, 0.14, 0.12, 0.12, 0.11, 0.08, 0.07, 0.05, 0.03]},
        spacing_dist={"kind": "fixed", "days": 90.0},
        seed=505,
    )
    config = preset("chs-default", d_model=32, n_layers=2, n_heads=4, max_seq_len=64)
    return TrainedRun(spec, config, TrainPlan(max_epochs=14, patience=6, seed=2))


@pytest.fixture(scope="session")
def drift_run():
    """Cohort with 20% subclinical drift + quantile-preset checkpoint."""
    spec = CohortSpec(
        n_patients=1200,
        analytes={"GLU": AnalyteParams(pop_mean=84.5, between_sd=4.0, within_sd=3.0,
                                       ar_phi=0.85, ar_ref_days=90.0,
                                       drift_slope_per_year=3.5)},
        count_dist={"kind": "uniform_int", "low": 10, "high": 16},
        spacing_dist={"kind": "loguniform", "low": 20, "high": 720},
        drift_fraction=0.2,
        outcome=OutcomeSpec(name="death", kind="hazard", base_rate=2e-5,
                            coef_deviation=0.5, coef_drift=1.2, horizon_days=3650),
        seed=606,
    )
    config = preset("eicu-default", d_model=32, n_layers=2, n_heads=4)
    return TrainedRun(spec, config, TrainPlan(max_epochs=18, patience=6, seed=4))
