import numpy as np
import pytest

import lstm_oracle
from macip.forecast import (
    ForecastModel,
    InsufficientData,
    LengthMismatch,
    TrainConfig,
    _bptt_batch,
    bptt_gradients,
    build_feature_row,
    clip_global_norm,
    deserialize_model,
    init_params,
    lstm_cell_forward,
    mape,
    predict,
    seasonal_naive,
    serialize_model,
    train,
    zero_params,
)


def random_instance(seed, hidden=8, steps=10):
    rng = np.random.default_rng(seed)
    p = init_params(hidden, 7, rng)
    xs = rng.normal(0, 1, size=(steps, 7))
    ys = rng.normal(0, 1, size=steps)
    return p, xs, ys


def param_views(p):
    views = [p.W[g] for g in "ifog"] + [p.U[g] for g in "ifog"] + [p.b[g] for g in "ifog"]
    return views + [p.w_y]


class TestCell:
    def test_zero_params_zero_state(self):
        p = zero_params(4)
        h, c, y = lstm_cell_forward(p, np.zeros(7), np.zeros(4), np.zeros(4))
        assert np.allclose(h, 0) and np.allclose(c, 0) and y == 0.0

    def test_zero_params_carry_cell_state(self):
        p = zero_params(4)
        c0 = np.array([1.0, -2.0, 0.5, 3.0])
        h, c, _ = lstm_cell_forward(p, np.zeros(7), np.zeros(4), c0)
        assert np.allclose(c, 0.5 * c0)
        assert np.allclose(h, 0.5 * np.tanh(0.5 * c0))

    def test_matches_scalar_oracle(self):
        for seed in range(5):
            p, xs, _ = random_instance(seed, hidden=16, steps=6)
            h = np.zeros(16)
            c = np.zeros(16)
            ho = [0.0] * 16
            co = [0.0] * 16
            for x in xs:
                h, c, y = lstm_cell_forward(p, x, h, c)
                ho, co, yo = lstm_oracle.cell_forward(p, x, ho, co)
                assert abs(y - yo) < 1e-12
                assert np.max(np.abs(h - np.array(ho))) < 1e-12
                assert np.max(np.abs(c - np.array(co))) < 1e-12

    def test_hidden_state_bounded(self):
        rng = np.random.default_rng(3)
        p = init_params(8, 7, rng)
        h = np.zeros(8)
        c = np.zeros(8)
        for _ in range(200):
            h, c, _ = lstm_cell_forward(p, rng.normal(0, 5, 7), h, c)
            assert np.all(np.abs(h) < 1.0)


class TestGradients:
    def test_length_one_sequence_finite(self):
        p, xs, ys = random_instance(0, steps=1)
        grads, loss = bptt_gradients(p, xs, ys)
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grads.flat()))

    def test_against_central_finite_differences(self):
        # dual route: analytic BPTT vs finite differences of the scalar oracle
        eps = 1e-5
        for seed in range(3):
            p, xs, ys = random_instance(seed)
            grads, _ = bptt_gradients(p, xs, ys)
            analytic = grads.flat()
            views = param_views(p)
            idx = 0
            worst = 0.0
            for arr in views:
                flat = arr.reshape(-1)
                for k in range(flat.size):
                    keep = flat[k]
                    flat[k] = keep + eps
                    up = lstm_oracle.sequence_loss(p, xs, ys)
                    flat[k] = keep - eps
                    down = lstm_oracle.sequence_loss(p, xs, ys)
                    flat[k] = keep
                    fd = (up - down) / (2 * eps)
                    a = analytic[idx]
                    rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                    if abs(a - fd) > 1e-8:
                        worst = max(worst, rel)
                    idx += 1
            # bias b_y
            keep = p.b_y
            p.b_y = keep + eps
            up = lstm_oracle.sequence_loss(p, xs, ys)
            p.b_y = keep - eps
            down = lstm_oracle.sequence_loss(p, xs, ys)
            p.b_y = keep
            fd = (up - down) / (2 * eps)
            rel = abs(analytic[-1] - fd) / max(abs(fd), 1e-8)
            worst = max(worst, rel)
            assert worst < 1e-4, f"seed {seed}: worst rel err {worst}"

    def test_duplicated_sequence_leaves_gradients_unchanged(self):
        p, xs, ys = random_instance(1)
        single, _ = bptt_gradients(p, xs, ys)
        X = np.stack([xs, xs], axis=1)
        Y = np.stack([ys, ys], axis=1)
        double, _, _ = _bptt_batch(p, X, Y)
        assert np.allclose(single.flat(), double.flat(), atol=1e-12)

    def test_clip_global_norm(self):
        p, xs, ys = random_instance(2)
        grads, _ = bptt_gradients(p, xs, ys * 100)
        norm = grads.global_norm()
        assert norm > 5.0
        clip_global_norm(grads, 5.0)
        assert grads.global_norm() == pytest.approx(5.0)


def constant_series(n=168, value=50.0):
    targets = np.full(n, value)
    feats = np.stack([build_feature_row(t * 3600, 0.5, 0.5, False) for t in range(n)])
    return targets, feats


class TestTrain:
    def test_constant_series_learned_within_5pct(self):
        targets, feats = constant_series()
        model = train(targets, feats, TrainConfig(seed=0))
        assert model.meta["final_mse"] < model.meta["initial_mse"]
        preds = predict(model, feats[-24:], horizon=24, last_time_s=119 * 3600)
        for p_ in preds:
            assert abs(p_ - 50.0) / 50.0 < 0.05

    def test_same_seed_bit_identical(self):
        targets, feats = constant_series(n=96)
        cfg = TrainConfig(seed=7, epochs=3)
        m1 = train(targets, feats, cfg)
        m2 = train(targets, feats, cfg)
        assert np.array_equal(m1.params.flat(), m2.params.flat())
        assert m1.y_max == m2.y_max

    def test_insufficient_data(self):
        targets, feats = constant_series(n=10)
        with pytest.raises(InsufficientData):
            train(targets, feats, TrainConfig())


class TestPredict:
    def test_horizon_1_is_single_cell_step(self):
        targets, feats = constant_series(n=96)
        model = train(targets, feats, TrainConfig(seed=1, epochs=2))
        ctx = feats[-24:]
        one = predict(model, ctx, horizon=1, last_time_s=95 * 3600)
        two = predict(model, ctx, horizon=2, last_time_s=95 * 3600)
        assert one[0] == two[0]

    def test_zero_model_outputs_clamped_bias(self):
        model = ForecastModel(zero_params(16), y_max=100.0, window_len=24)
        ctx = np.stack([build_feature_row(t * 3600, 0.5, 0.5, False) for t in range(24)])
        assert predict(model, ctx, horizon=3, last_time_s=23 * 3600) == [0.0, 0.0, 0.0]
        model.params.b_y = -5.0
        assert predict(model, ctx, horizon=2, last_time_s=23 * 3600) == [0.0, 0.0]
        model.params.b_y = 0.25
        preds = predict(model, ctx, horizon=2, last_time_s=23 * 3600)
        assert preds == [pytest.approx(25.0), pytest.approx(25.0)]

    def test_predictions_nonnegative(self):
        rng = np.random.default_rng(5)
        model = ForecastModel(init_params(16, 7, rng), y_max=10.0, window_len=24)
        ctx = rng.uniform(-1, 1, size=(24, 7))
        assert all(v >= 0 for v in predict(model, ctx, horizon=48, last_time_s=0))


class TestBaselineAndMape:
    def test_periodic_series_exact(self):
        series = np.tile(np.arange(24.0), 3)
        assert seasonal_naive(series, 24, 24) == list(np.arange(24.0))

    def test_horizon_one_takes_value_period_back(self):
        series = np.arange(50.0)
        assert seasonal_naive(series, 24, 1) == [26.0]

    def test_short_series_rejected(self):
        with pytest.raises(InsufficientData):
            seasonal_naive(np.arange(10.0), 24, 1)

    def test_mape_examples(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mape([100.0, 200.0], [110.0, 180.0]) == pytest.approx(0.10)
        assert mape([0.0], [0.0]) == 0.0

    def test_mape_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mape([1.0], [1.0, 2.0])


class TestSerialization:
    def test_roundtrip(self):
        targets, feats = constant_series(n=96)
        model = train(targets, feats, TrainConfig(seed=3, epochs=2),
                      feature_stats={"ped_max": 40.0, "temp_min": -5.0, "temp_max": 30.0})
        blob = serialize_model(model)
        back = deserialize_model(blob)
        assert np.array_equal(back.params.flat(), model.params.flat())
        assert back.y_max == model.y_max
        assert back.window_len == model.window_len
        assert back.feature_stats["ped_max"] == 40.0

    def test_corruption_detected(self):
        targets, feats = constant_series(n=96)
        blob = bytearray(serialize_model(train(targets, feats, TrainConfig(seed=3, epochs=1))))
        blob[40] ^= 0xFF
        with pytest.raises(ValueError):
            deserialize_model(bytes(blob))
