import numpy as np
import pytest

from norma.synth import AnalyteParams, CohortSpec, OutcomeSpec, generate_cohort, write_cohort


def _spec(**overrides):
    base = dict(
        n_patients=40,
        analytes={"GLU": AnalyteParams(pop_mean=84.5, between_sd=5.0, within_sd=2.0)},
        count_dist={"kind": "fixed", "n": 8},
        spacing_dist={"kind": "fixed", "days": 90.0},
        seed=7,
    )
    base.update(overrides)
    return CohortSpec(**base)


class TestGenerate:
    def test_zero_within_sd_gives_constant_series(self):
        spec = _spec(analytes={"GLU": AnalyteParams(84.5, 5.0, 1e-9)})
        meas, _, truth = generate_cohort(spec)
        by_pid = {}
        for row in meas:
            by_pid.setdefault(row[0], []).append(row[5])
        for pid, vals in by_pid.items():
            assert np.std(vals) < 1e-6

    def test_empirical_ii_matches_plugin_oracle(self):
        spec = _spec(
            n_patients=200,
            analytes={"GLU": AnalyteParams(pop_mean=100.0, between_sd=10.0, within_sd=2.0)},
            count_dist={"kind": "fixed", "n": 50},
        )
        meas, _, truth = generate_cohort(spec)
        per_patient = {}
        for pid, _sex, _age, _code, _unit, value, _ts in meas:
            per_patient.setdefault(pid, []).append(value)
        from norma.evaluation import individuality_index
        r = individuality_index({k: np.array(v) for k, v in per_patient.items()},
                                n_boot=50, seed=0)
        assert truth["analytes"]["GLU"]["true_ii"] == pytest.approx(0.2)
        assert r.ii == pytest.approx(0.2, abs=0.05)

    def test_same_seed_byte_identical(self, tmp_path):
        spec = _spec()
        p1 = write_cohort(spec, tmp_path / "a")
        p2 = write_cohort(spec, tmp_path / "b")
        for key in ("measurements", "outcomes", "truth"):
            assert p1[key].read_bytes() == p2[key].read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = write_cohort(_spec(seed=1), tmp_path / "a")
        b = write_cohort(_spec(seed=2), tmp_path / "b")
        assert a["measurements"].read_bytes() != b["measurements"].read_bytes()

    def test_patient_mean_sd_tracks_between_sd(self):
        spec = _spec(n_patients=600, count_dist={"kind": "fixed", "n": 12})
        meas, _, _ = generate_cohort(spec)
        per_patient = {}
        for pid, _sex, _age, _code, _unit, value, _ts in meas:
            per_patient.setdefault(pid, []).append(value)
        means = np.array([np.mean(v) for v in per_patient.values()])
        # within-noise adds 2^2/12 to the variance of patient means
        expected = np.sqrt(5.0 ** 2 + 2.0 ** 2 / 12)
        assert np.std(means, ddof=1) == pytest.approx(expected, rel=0.05)

    def test_event_rate_within_2se_of_analytic(self):
        spec = _spec(
            n_patients=800,
            outcome=OutcomeSpec(name="death", kind="logistic", base_rate=-1.5,
                                coef_deviation=0.3, horizon_days=3650),
        )
        meas, outcomes, truth = generate_cohort(spec)
        rate = np.mean([ev for _pid, _n, ev, _t in outcomes])
        assert abs(rate - truth["analytic_event_rate"]) <= 2 * truth["event_rate_se"]

    def test_hazard_outcome_times(self):
        spec = _spec(outcome=OutcomeSpec(kind="hazard", base_rate=1e-3, horizon_days=1000))
        _, outcomes, _ = generate_cohort(spec)
        for _pid, _name, event, t in outcomes:
            assert 0 <= t <= 1000
            if t < 1000:
                assert event == 1

    def test_ar_phi_autocorrelation(self):
        spec = _spec(
            n_patients=300,
            analytes={"GLU": AnalyteParams(84.5, 0.5, 3.0, ar_phi=0.9, ar_ref_days=90.0)},
            count_dist={"kind": "fixed", "n": 30},
        )
        meas, _, truth = generate_cohort(spec)
        setpoints = {p["id"]: p["analytes"]["GLU"]["setpoint"] for p in truth["patients"]}
        per_patient = {}
        for pid, _sex, _age, _code, _unit, value, _ts in meas:
            per_patient.setdefault(pid, []).append(value)
        # center on the true setpoint: the sample-mean version is biased low
        num = den = 0.0
        for pid, vals in per_patient.items():
            x = np.array(vals) - setpoints[pid]
            num += np.sum(x[1:] * x[:-1])
            den += np.sum(x[:-1] ** 2)
        assert num / den == pytest.approx(0.9, abs=0.03)

    def test_positivity(self):
        spec = _spec(analytes={"TBIL": AnalyteParams(0.6, 0.3, 0.4)},
                     count_dist={"kind": "fixed", "n": 20}, n_patients=100)
        meas, _, _ = generate_cohort(spec)
        assert all(row[5] > 0 for row in meas)

    def test_from_dict_roundtrip(self):
        d = {
            "n_patients": 10,
            "seed": 3,
            "analytes": {"GLU": {"pop_mean": 84.5, "between_sd": 4.0,
                                 "within_sd": [1.0, 2.0], "ar_phi": 0.5}},
            "count_dist": {"kind": "uniform_int", "low": 5, "high": 9},
            "drift_fraction": 0.25,
            "outcome": {"name": "aki", "kind": "logistic", "base_rate": -2.0},
        }
        spec = CohortSpec.from_dict(d)
        assert spec.analytes["GLU"].within_sd == (1.0, 2.0)
        assert spec.outcome.name == "aki"
        meas, outcomes, truth = generate_cohort(spec)
        assert len({r[0] for r in meas}) == 10

    def test_validation(self):
        with pytest.raises(KeyError):
            _spec(analytes={"NOPE": AnalyteParams(1, 1, 1)})
        with pytest.raises(ValueError):
            _spec(drift_fraction=1.5)
        with pytest.raises(ValueError):
            AnalyteParams(10.0, -1.0, 1.0)
