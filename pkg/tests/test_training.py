import numpy as np
import pytest

from norma.baselines import baseline_predict, fit_ar_cls
from norma.cohort import LabSeries, Measurement, Patient, SECONDS_PER_DAY
from norma.model import preset
from norma.training import (
    TrainPlan, analyte_weights, patient_split, teacher_forced_examples, train,
)


def _series(pid, values, analyte="GLU"):
    ms = tuple(Measurement(90.0 * i * SECONDS_PER_DAY, float(v), analyte)
               for i, v in enumerate(values))
    return LabSeries(Patient(pid, "M", 50.0), analyte, ms)


class TestPatientSplit:
    def test_exact_sizes(self):
        tr, va, te = patient_split([f"p{i}" for i in range(10)], seed=0)
        assert (len(tr), len(va), len(te)) == (7, 1, 2)

    def test_deterministic(self):
        ids = [f"p{i}" for i in range(57)]
        assert patient_split(ids, seed=3) == patient_split(ids, seed=3)
        assert patient_split(ids, seed=3) != patient_split(ids, seed=4)

    def test_disjoint_partition(self):
        ids = [f"p{i}" for i in range(101)]
        tr, va, te = patient_split(ids, seed=1)
        assert tr | va | te == set(ids)
        assert not (tr & va) and not (tr & te) and not (va & te)

    def test_patient_level_constraint(self):
        # all series of one patient land in exactly one partition
        series = [_series("p1", [80, 85], a) for a in ("GLU", "NA", "K", "CA", "CL")]
        tr, va, te = patient_split([s.patient.id for s in series] + ["p2", "p3"], seed=0)
        homes = [part for part in (tr, va, te) if "p1" in part]
        assert len(homes) == 1

    def test_min_patients(self):
        with pytest.raises(ValueError):
            patient_split(["a", "b"], seed=0)


class TestAnalyteWeights:
    def test_inverse_frequency_ratio(self):
        seqs = [_series(f"p{i}", [1, 2], "GLU") for i in range(100)]
        seqs += [_series(f"q{i}", [1, 2], "NA") for i in range(50)]
        w = analyte_weights(seqs)
        w_glu, w_na = w[0], w[-1]
        assert w_na / w_glu == pytest.approx(2.0)
        assert w.sum() == pytest.approx(1.0)

    def test_single_analyte_uniform(self):
        seqs = [_series(f"p{i}", [1, 2]) for i in range(10)]
        w = analyte_weights(seqs)
        assert np.allclose(w, 0.1)

    def test_expected_draws_equal_per_analyte(self):
        rng = np.random.default_rng(0)
        seqs = []
        for a, n in (("GLU", 137), ("NA", 12), ("K", 51)):
            seqs += [_series(f"{a}{i}", [1, 2], a) for i in range(n)]
        w = analyte_weights(seqs)
        per_analyte = {}
        for s, wi in zip(seqs, w):
            per_analyte[s.analyte] = per_analyte.get(s.analyte, 0.0) + wi
        probs = list(per_analyte.values())
        assert max(probs) - min(probs) < 1e-12


class TestBaselines:
    def test_last_and_mean(self):
        assert baseline_predict("last", [3, 5, 7]) == (7.0, "last")
        assert baseline_predict("patient_mean", [3, 5, 7]) == (5.0, "patient_mean")

    def test_constant_series_ar_fixed_point(self):
        val, used = baseline_predict("ar", [4.0] * 10)
        assert used == "ar"
        assert val == pytest.approx(4.0)

    def test_ar_fallback_flag(self):
        val, used = baseline_predict("ar", [3.0, 5.0], p=2)
        assert used == "patient_mean"
        assert val == 4.0

    def test_ar1_phi_recovery(self):
        # closed-form CLS oracle: phi_hat = sum x_t x_{t-1} / sum x_{t-1}^2
        rng = np.random.default_rng(12)
        x = np.zeros(200)
        for t in range(1, 200):
            x[t] = 0.8 * x[t - 1] + rng.normal()
        coef = fit_ar_cls(x, p=1)
        oracle = float(np.sum(x[1:] * x[:-1]) / np.sum(x[:-1] ** 2))
        assert coef[0] == pytest.approx(oracle, abs=0.02)   # demeaning is the only difference
        assert abs(coef[0] - 0.8) < 0.1

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            baseline_predict("prophet", [1, 2, 3])


class TestTrain:
    def test_constant_cohort_learns_constant(self):
        # every patient constant at 85 -> median prediction ~= 85 on held-out
        series = [_series(f"p{i}", [85.0] * 8) for i in range(30)]
        cfg = preset("eicu-default", d_model=8, n_layers=1, n_heads=2)
        plan = TrainPlan(max_epochs=6, batch_size=16, seed=0, patience=6)
        res = train(cfg, series, plan)
        assert not res.aborted
        from norma.model import build_tokens
        tokens = build_tokens(_series("new", [85.0] * 5), "normal", 90, cfg)
        pred = res.model.predict_tokens(tokens)
        assert pred.quantiles[0.5] == pytest.approx(85.0, abs=1.0)

    def test_loss_curve_and_early_stop_meta(self):
        rng = np.random.default_rng(5)
        series = [_series(f"p{i}", rng.normal(85, 3, 8)) for i in range(30)]
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        res = train(cfg, series, TrainPlan(max_epochs=3, batch_size=16, seed=0))
        splits = {s for _, s, _ in res.log}
        assert splits == {"train", "val"}
        vlosses = [l for _, s, l in res.log if s == "val"]
        assert res.best_val == pytest.approx(min(vlosses))
        assert res.model.trained

    def test_reproducible_checkpoint_hash(self, tmp_path):
        from norma.checkpoint import checkpoint_hash, save_checkpoint
        rng = np.random.default_rng(5)
        series = [_series(f"p{i}", rng.normal(85, 3, 7)) for i in range(24)]
        cfg = preset("eicu-default", d_model=8, n_layers=1, n_heads=2)
        hashes = []
        for run in range(2):
            res = train(cfg, series, TrainPlan(max_epochs=2, batch_size=16, seed=11))
            path = tmp_path / f"run{run}.ckpt"
            save_checkpoint(res.model, path)
            hashes.append(checkpoint_hash(path))
        assert hashes[0] == hashes[1]

    def test_teacher_forcing_example_counts(self):
        cfg = preset("eicu-default", d_model=8, n_layers=1, n_heads=2)
        series = [_series("p1", [80, 85, 90, 95, 100])]
        ex = teacher_forced_examples(series, cfg)
        assert len(ex) == 3   # targets at positions 3..5 over prefixes >= 2
        assert [e.target for e in ex] == [90.0, 95.0, 100.0]
        assert ex[0].tokens.T == 2
