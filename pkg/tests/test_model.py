import math

import numpy as np
import pytest

import norma.autodiff as ad
from norma.cohort import LabSeries, Measurement, Patient, SECONDS_PER_DAY
from norma.model import (
    ModelConfig, NormaModel, PredictiveDistribution, build_tokens, collate,
    forward, forward_batch, gaussian_nll, gaussian_nll_graph, init_params,
    norma_interval, pinball_loss, pinball_loss_graph, predict, preset,
    sequence_norm_params,
)

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings, strategies as st


def _series(values, days=None, analyte="GLU", sex="M", age=50.0):
    days = days if days is not None else [90.0 * i for i in range(len(values))]
    ms = tuple(Measurement(d * SECONDS_PER_DAY, float(v), analyte) for d, v in zip(days, values))
    return LabSeries(Patient("p1", sex, age), analyte, ms)


class TestConfig:
    def test_presets(self):
        chs = preset("chs-default")
        assert (chs.time_encoding, chs.head) == ("time2vec", "gaussian")
        eicu = preset("eicu-default")
        assert (eicu.time_encoding, eicu.value_encoding, eicu.head) == (
            "log_delta_t", "within_sequence_norm", "quantile")
        assert eicu.context_token == "dedicated"

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(d_model=10, n_heads=4)
        with pytest.raises(ValueError):
            ModelConfig(quantile_levels=(0.9, 0.1, 0.5))
        with pytest.raises(ValueError):
            ModelConfig(quantile_levels=(0.1, 0.5, 0.975))
        with pytest.raises(ValueError):
            ModelConfig(head="laplace")


class TestBuildTokens:
    def test_first_gap_is_zero(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        tokens = build_tokens(_series([80, 90]), "normal", 30, cfg)
        assert tokens.delta_days[0] == 0.0
        assert tokens.delta_days[1] == pytest.approx(90.0)

    def test_ternary_states_from_pop_ri(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        tokens = build_tokens(_series([60, 85, 120]), "normal", 30, cfg)
        assert tokens.state_idx.tolist() == [0, 1, 2]   # low, normal, high

    def test_within_sequence_norm_oracle(self):
        # {80, 120}: mean 100, sample sd 28.284 -> +-0.7071
        cfg = preset("eicu-default", d_model=8, n_layers=1, n_heads=2)
        tokens = build_tokens(_series([80, 120]), "normal", 30, cfg)
        assert tokens.values_model == pytest.approx([-0.70710678, 0.70710678])

    def test_norm_roundtrip_identity(self):
        vals = np.array([81.0, 92.5, 99.0, 77.0])
        m, s = sequence_norm_params(vals)
        assert np.allclose(((vals - m) / s) * s + m, vals, atol=1e-10)

    def test_truncation_recorded(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2, max_seq_len=4)
        tokens = build_tokens(_series([80] * 10), "normal", 30, cfg)
        assert tokens.T == 4 and tokens.truncated

    def test_empty_history_rejected(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        with pytest.raises(ValueError):
            build_tokens(_series([]), "normal", 30, cfg)

    def test_unknown_analyte_rejected(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        s = LabSeries(Patient("p", "M", 50.0), "NOPE",
                      (Measurement(0.0, 1.0, "NOPE"),))
        with pytest.raises(KeyError):
            build_tokens(s, "normal", 30, cfg)

    def test_sequence_lengths_by_context_mode(self):
        for name, extra in (("chs-default", 1), ("eicu-default", 2)):
            cfg = preset(name, d_model=8, n_layers=1, n_heads=2)
            tokens = build_tokens(_series([80, 85, 90]), "normal", 30, cfg)
            batch = collate([tokens], cfg)
            assert batch.seq_len == tokens.T + extra


class TestForward:
    def test_zero_head_weights_give_constant_mu(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        params = init_params(cfg, seed=0)
        params["w_head"].data[:] = 0.0
        params["b_head"].data[:] = [3.25, 0.0]
        outs = []
        for vals in ([80, 90, 100], [71, 72], [95]):
            pred = forward(build_tokens(_series(vals), "normal", 30, cfg), params, cfg)
            outs.append(pred.mu)
        assert outs == pytest.approx([3.25, 3.25, 3.25])

    def test_order_sensitivity(self):
        # swapping two history values (times kept) must change the output
        cfg = preset("chs-default", d_model=16, n_layers=2, n_heads=2)
        params = init_params(cfg, seed=1)
        a = forward(build_tokens(_series([80, 95, 90]), "normal", 30, cfg), params, cfg)
        b = forward(build_tokens(_series([90, 95, 80]), "normal", 30, cfg), params, cfg)
        assert a.mu != b.mu

    def test_causality_perturbation(self):
        # changing history value i leaves every hidden state at positions
        # before i bit-identical (causal mask), and changes the output.
        # raw value encoding: within-sequence normalization would couple
        # positions through the shared mean/sd.
        cfg = preset("eicu-default", d_model=16, n_layers=2, n_heads=2,
                     value_encoding="raw")
        model = NormaModel.init(cfg, seed=2)
        vals = [80.0, 88.0, 93.0, 85.0, 90.0]
        vals2 = vals[:-1] + [200.0]
        traces = []
        outs = []
        for v in (vals, vals2):
            trace: list = []
            tokens = build_tokens(_series(v), "normal", 30, cfg)
            out = forward_batch(collate([tokens], cfg), model.params, cfg, trace=trace)
            traces.append(trace)
            outs.append(out.data.copy())
        # dedicated context: positions [context, h1..h5, query]; h5 is
        # index 5, so positions 0..4 must match exactly at every layer
        for layer_a, layer_b in zip(*traces):
            assert np.array_equal(layer_a[0, :5, :], layer_b[0, :5, :])
            assert not np.array_equal(layer_a[0, 5, :], layer_b[0, 5, :])
        assert not np.array_equal(outs[0], outs[1])

    def test_quantiles_monotone(self):
        cfg = preset("eicu-default", d_model=16, n_layers=1, n_heads=2)
        model = NormaModel.init(cfg, seed=3)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            pred = model.predict_tokens(
                build_tokens(_series(rng.uniform(70, 99, 6)), "normal", 30, cfg))
            q = [pred.quantiles[l] for l in cfg.quantile_levels]
            assert all(q[i] <= q[i + 1] for i in range(len(q) - 1))

    def test_batch_matches_single(self):
        cfg = preset("eicu-default", d_model=16, n_layers=2, n_heads=2)
        model = NormaModel.init(cfg, seed=4)
        rng = np.random.default_rng(0)
        series = [_series(rng.uniform(70, 99, n)) for n in (3, 5, 7)]
        toks = [build_tokens(s, "normal", 30, cfg) for s in series]
        batched = model.predict_batch(toks)
        singles = [model.predict_tokens(t) for t in toks]
        for b, s in zip(batched, singles):
            for lvl in cfg.quantile_levels:
                assert b.quantiles[lvl] == pytest.approx(s.quantiles[lvl], abs=1e-9)


class TestLosses:
    def test_gaussian_nll_exact(self):
        assert gaussian_nll(5.0, 0.0, 5.0) == 0.0
        assert gaussian_nll(0.0, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)
        assert gaussian_nll(0.0, math.log(4.0), 2.0) == pytest.approx(
            0.5 * (math.log(4.0) + 1.0), abs=1e-12)

    def test_pinball_exact(self):
        assert pinball_loss({0.5: 10.0}, 10.0) == 0.0
        assert pinball_loss({0.5: 8.0}, 10.0) == pytest.approx(1.0, abs=1e-12)
        assert pinball_loss({0.975: 8.0}, 10.0) == pytest.approx(1.95, abs=1e-12)
        assert pinball_loss({0.025: 12.0}, 10.0) == pytest.approx(1.95, abs=1e-12)

    def test_gaussian_nll_minimized_at_target(self):
        # gradient in mu flips sign across mu = x
        y = np.array([3.0])
        for mu, sign in ((2.5, -1.0), (3.5, 1.0)):
            out = ad.Tensor(np.array([[mu, 0.2]]), requires_grad=True)
            ad.backward(gaussian_nll_graph(out, y))
            assert math.copysign(1.0, out.grad[0, 0]) == sign

    def test_pinball_graph_matches_pure(self):
        levels = (0.025, 0.25, 0.5, 0.75, 0.975)
        rng = np.random.default_rng(8)
        q = np.sort(rng.normal(0, 1, (4, 5)), axis=1)
        y = rng.normal(0, 1, 4)
        graph = pinball_loss_graph(ad.Tensor(q), y, levels)
        pure = np.mean([pinball_loss(dict(zip(levels, qi)), yi) for qi, yi in zip(q, y)])
        assert float(graph.data) == pytest.approx(pure, abs=1e-12)

    def test_pinball_kink_subgradient_uses_tau_minus_1(self):
        q = ad.Tensor(np.array([[2.0]]), requires_grad=True)
        loss = pinball_loss_graph(q, np.array([2.0]), (0.3,))
        ad.backward(loss)
        # residual exactly 0: d/dq = -(tau - 1) = 0.7
        assert q.grad[0, 0] == pytest.approx(0.7)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50),
           st.sampled_from([0.025, 0.25, 0.5, 0.75, 0.975]))
    def test_pinball_convex_in_q(self, q1, q2, x, tau):
        mid = (q1 + q2) / 2
        lhs = pinball_loss({tau: mid}, x)
        rhs = 0.5 * pinball_loss({tau: q1}, x) + 0.5 * pinball_loss({tau: q2}, x)
        assert lhs <= rhs + 1e-9


class TestIntervals:
    def test_gaussian_interval(self):
        pred = PredictiveDistribution(kind="gaussian", query_state="normal",
                                      mu=100.0, log_var=2 * math.log(10.0))
        iv, degenerate = norma_interval(pred)
        assert iv.lower == pytest.approx(80.4)
        assert iv.upper == pytest.approx(119.6)
        assert not degenerate

    def test_quantile_interval_direct_read(self):
        pred = PredictiveDistribution(kind="quantile", query_state="normal",
                                      quantiles={0.025: 78.0, 0.5: 100.0, 0.975: 122.0})
        iv, degenerate = norma_interval(pred)
        assert (iv.lower, iv.upper) == (78.0, 122.0)
        assert not degenerate

    def test_sigma_zero_degenerate(self):
        pred = PredictiveDistribution(kind="gaussian", query_state="normal",
                                      mu=100.0, log_var=-60.0)
        _, degenerate = norma_interval(pred)
        assert degenerate

    def test_non_normal_conditioning_rejected(self):
        pred = PredictiveDistribution(kind="gaussian", query_state="high",
                                      mu=1.0, log_var=0.0)
        with pytest.raises(ValueError):
            norma_interval(pred)


class TestPredict:
    def test_empty_history_error(self):
        cfg = preset("chs-default", d_model=8, n_layers=1, n_heads=2)
        model = NormaModel.init(cfg, seed=0)
        with pytest.raises(ValueError):
            predict(model, _series([]), 30.0)

    def test_composition(self):
        cfg = preset("eicu-default", d_model=16, n_layers=1, n_heads=2)
        model = NormaModel.init(cfg, seed=0)
        point, interval, pred, warnings = predict(model, _series([82, 85, 88]), 30.0)
        assert point == pred.quantiles[0.5]
        assert interval.lower == pred.quantiles[0.025]
        assert interval.framework == "norma"


def test_checkpoint_roundtrip(tmp_path):
    from norma.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
    cfg = preset("eicu-default", d_model=16, n_layers=1, n_heads=2)
    model = NormaModel.init(cfg, seed=9, meta={"trained": True, "preset": "eicu-default"})
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == cfg
    assert loaded.meta["preset"] == "eicu-default"
    for k in model.params:
        assert np.array_equal(loaded.params[k].data, model.params[k].data)
    # byte-stable save
    path2 = tmp_path / "m2.ckpt"
    save_checkpoint(loaded, path2)
    assert checkpoint_hash(path) == checkpoint_hash(path2)
    # inference identical
    s = _series([80, 90, 85])
    t = build_tokens(s, "normal", 30, cfg)
    p1, p2 = model.predict_tokens(t), loaded.predict_tokens(t)
    assert p1.quantiles == p2.quantiles
