import math

import numpy as np
import pytest

from norma.survival import (
    CoxConvergenceError, concordance_index, cox_fit, cox_newton,
    stratified_split, time_dependent_auc,
)


def _survival_data(n=600, hr_flag=2.0, seed=0, censor_lo=500, censor_hi=6000):
    rng = np.random.default_rng(seed)
    flag = (rng.random(n) < 0.3).astype(float)
    age = rng.uniform(40, 80, n)
    sex = (rng.random(n) < 0.5).astype(float)
    lp = math.log(hr_flag) * flag + 0.02 * (age - 60) + 0.3 * sex
    lam0 = 1.0 / 3000.0
    t_event = rng.exponential(1.0 / (lam0 * np.exp(lp)))
    censor = rng.uniform(censor_lo, censor_hi, n)
    event = t_event <= censor
    return flag, age, sex, event, np.minimum(t_event, censor)


class TestNewton:
    def test_loglik_non_decreasing(self):
        flag, age, sex, event, t = _survival_data(400)
        x = np.column_stack([flag, age, sex])
        _, _, trace = cox_newton(x, event, t)
        assert np.all(np.diff(trace) >= -1e-9)

    def test_constant_covariate_rejected(self):
        flag, age, sex, event, t = _survival_data(200)
        x = np.column_stack([np.ones_like(flag), age, sex])
        with pytest.raises(ValueError, match="constant covariate"):
            cox_newton(x, event, t)

    def test_too_few_events(self):
        x = np.array([[0.0, 1.0], [1.0, 2.0], [0.0, 3.0]])
        with pytest.raises(ValueError):
            cox_newton(x, np.array([True, False, False]), np.array([1.0, 2.0, 3.0]))

    def test_recovers_true_beta(self):
        flag, age, sex, event, t = _survival_data(3000, hr_flag=2.0, seed=7)
        beta, se, _ = cox_newton(np.column_stack([flag, age, sex]), event, t)
        assert beta[0] == pytest.approx(math.log(2.0), abs=0.15)
        assert beta[1] == pytest.approx(0.02, abs=0.01)


class TestConcordance:
    def test_brute_force_equality(self):
        rng = np.random.default_rng(1)
        n = 150
        score = rng.normal(size=n)
        score[rng.random(n) < 0.2] = 0.5   # inject score ties
        event = rng.random(n) < 0.6
        t = np.round(rng.exponential(100, n), 0)  # time ties too
        conc = perm = 0.0
        for i in range(n):
            for j in range(n):
                if i != j and event[i] and t[i] < t[j]:
                    perm += 1
                    conc += 1.0 if score[i] > score[j] else (0.5 if score[i] == score[j] else 0.0)
        assert concordance_index(score, event, t) == conc / perm

    def test_random_score_near_half(self):
        rng = np.random.default_rng(2)
        n = 1000
        score = rng.normal(size=n)
        event = rng.random(n) < 0.5
        t = rng.exponential(100, n)
        assert concordance_index(score, event, t) == pytest.approx(0.5, abs=0.03)

    def test_no_usable_pairs(self):
        assert concordance_index(np.array([1.0, 2.0]), np.array([False, False]),
                                 np.array([1.0, 2.0])) is None


class TestTimeDependentAuc:
    def test_perfect_separation(self):
        score = np.array([3.0, 2.0, 1.0, 0.0])
        event = np.array([True, True, False, False])
        t = np.array([100.0, 200.0, 900.0, 900.0])
        assert time_dependent_auc(score, event, t, 365.0) == 1.0

    def test_censored_before_horizon_excluded(self):
        score = np.array([5.0, 1.0, 2.0])
        event = np.array([True, False, False])
        t = np.array([100.0, 200.0, 900.0])   # middle row censored pre-horizon
        auc = time_dependent_auc(score, event, t, 365.0)
        assert auc == 1.0   # only case=0 vs control=2 compared

    def test_no_cases_marker(self):
        assert time_dependent_auc(np.array([1.0, 2.0]), np.array([False, False]),
                                  np.array([900.0, 900.0]), 365.0) is None


class TestStratifiedSplit:
    def test_partition_and_fraction(self):
        flag, age, sex, event, t = _survival_data(500)
        a, b = stratified_split(event, t, 0.6, seed=0)
        assert len(a) + len(b) == 500
        assert not set(a) & set(b)
        assert abs(len(a) - 300) <= 25

    def test_event_balance(self):
        flag, age, sex, event, t = _survival_data(800)
        a, b = stratified_split(event, t, 0.6, seed=1)
        assert event[a].mean() == pytest.approx(event[b].mean(), abs=0.05)

    def test_deterministic(self):
        flag, age, sex, event, t = _survival_data(300)
        a1, b1 = stratified_split(event, t, 0.6, seed=5)
        a2, b2 = stratified_split(event, t, 0.6, seed=5)
        assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


class TestCoxFit:
    def test_result_contract(self):
        flag, age, sex, event, t = _survival_data(800, seed=3)
        res = cox_fit(flag, age, sex, event, t, seed=0, n_boot=100)
        assert res.hr_ci[0] < res.hazard_ratio < res.hr_ci[1]
        assert res.hazard_ratio > 0
        assert 0 <= res.p_value <= 1
        assert res.n_train + res.n_test == 800
        assert res.events_test > 0
        assert np.all(np.diff(res.loglik_trace) >= -1e-9)
        assert res.concordance_ci[0] <= res.concordance <= res.concordance_ci[1]

    def test_constant_flag_rejected(self):
        flag, age, sex, event, t = _survival_data(300)
        with pytest.raises(ValueError, match="constant covariate"):
            cox_fit(np.zeros_like(flag), age, sex, event, t, n_boot=10)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            cox_fit([0, 1], [50, 60], [0, 1], [True, True], [-1.0, 5.0], n_boot=10)
