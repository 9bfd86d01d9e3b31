"""Tests for gbdt module."""

import math

import numpy as np
import pytest

from src.errors import SchemaMismatchError, ValidationError
from src.gbdt import (
    Ensemble,
    TrainConfig,
    fit,
    goss_sample,
    inverse_transform,
    log_transform,
    predict,
)


def regression_data(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 3))
    y = 1.0 + 3.0 * x[:, 0] + 2.0 * (x[:, 1] > 0.5) + rng.normal(0.0, 0.1, size=n)
    return x, y


def test_log_transform_constant():
    """Test ln(0 + 1e-7) and the inverse round trip."""
    assert log_transform([0.0])[0] == pytest.approx(-16.1181, abs=1e-4)
    assert inverse_transform(log_transform([37.5]))[0] == pytest.approx(37.5, rel=1e-9)
    with pytest.raises(ValidationError):
        log_transform([-0.1])


def test_inverse_never_negative():
    """Test the clamp over a million random log values."""
    rng = np.random.default_rng(0)
    out = inverse_transform(rng.normal(-20.0, 10.0, size=1_000_000))
    assert (out >= 0).all()


def test_goss_weights():
    """Test the small-gradient weight (1 - a) / b."""
    rng = np.random.default_rng(1)
    indices, weights = goss_sample(rng.normal(size=100), 0.2, 0.1, rng)
    assert len(indices) == 30
    assert (weights == 1.0).sum() == 20
    assert weights[weights != 1.0] == pytest.approx(np.full(10, 8.0))
    assert (np.diff(indices) > 0).all()


def test_goss_identity():
    """Test a = 1, b = 0 keeps every row with weight 1."""
    indices, weights = goss_sample(np.arange(7.0), 1.0, 0.0, np.random.default_rng(0))
    assert indices.tolist() == list(range(7))
    assert (weights == 1.0).all()


def test_goss_always_keeps_largest():
    """Test the three largest |g| are kept for every seed."""
    gradients = np.array([0.1, -5.0, 0.3, 2.0, -0.2, 0.05, 4.0, 0.0, -0.4, 0.6])
    for seed in range(1000):
        indices, _ = goss_sample(gradients, 0.3, 0.2, np.random.default_rng(seed))
        assert {1, 3, 6} <= set(indices.tolist())


def test_config_validation():
    """Test invalid hyperparameters are rejected."""
    with pytest.raises(ValidationError):
        TrainConfig(num_leaves=1)
    with pytest.raises(ValidationError):
        TrainConfig(goss_top_rate=0.8, goss_other_rate=0.3)
    with pytest.raises(ValidationError):
        TrainConfig(goss_top_rate=0.0)


def test_constant_target():
    """Test a constant target is predicted exactly."""
    x = np.random.default_rng(2).normal(size=(200, 2))
    y = np.full(200, 12.5)
    model = fit(x, y, x, y, TrainConfig(max_trees=5))
    assert predict(model, x) == pytest.approx(np.full(200, 12.5), rel=1e-9)


def test_synthetic_regression_r2():
    """Test held-out R^2 >= 0.95 on y = 1 + 3 x1 + 2 [x2 > 0.5] + noise."""
    x, y = regression_data(3000, 3)
    config = TrainConfig(max_trees=300, num_leaves=31, min_data_in_leaf=20, learning_rate=0.1)
    model = fit(x[:2000], y[:2000], x[2000:2500], y[2000:2500], config)
    pred = predict(model, x[2500:])
    actual = y[2500:]
    r2 = 1 - np.sum((pred - actual) ** 2) / np.sum((actual - actual.mean()) ** 2)
    assert r2 >= 0.95
    importance = model.feature_importance()
    assert importance["f0"] > importance["f2"]


def test_full_gradient_train_loss_non_increasing():
    """Test train loss never increases when GOSS keeps every row."""
    x, y = regression_data(600, 4)
    config = TrainConfig(goss_top_rate=1.0, goss_other_rate=0.0, max_trees=40, early_stopping_rounds=40)
    model = fit(x, y, x, y, config)
    loss = model.train_loss
    assert all(b <= a + 1e-12 for a, b in zip(loss, loss[1:]))


def test_goss_full_rate_equals_plain_boosting():
    """Test a = 1 reproduces plain gradient boosting bitwise."""
    x, y = regression_data(400, 5)
    goss = fit(x, y, x, y, TrainConfig(goss_top_rate=1.0, goss_other_rate=0.0, max_trees=15))
    plain = fit(x, y, x, y, TrainConfig(boosting="gbdt", max_trees=15))
    np.testing.assert_array_equal(predict(goss, x), predict(plain, x))


def test_empty_and_stump_ensembles():
    """Test zero trees predict the base score and a stump gives two outputs."""
    x, y = regression_data(300, 6)
    empty = fit(x, y, x, y, TrainConfig(max_trees=0))
    expected = math.exp(np.mean(np.log(y + 1e-7))) - 1e-7
    assert predict(empty, x) == pytest.approx(np.full(300, expected))

    stump = fit(x, y, x, y, TrainConfig(max_trees=1, num_leaves=2, goss_top_rate=1.0, goss_other_rate=0.0))
    assert stump.best_iteration == 1
    assert len(np.unique(predict(stump, x))) == 2


def test_text_round_trip(tmp_path):
    """Test save/load keeps predictions and text bitwise."""
    x, y = regression_data(500, 7)
    x[::17, 2] = np.nan
    model = fit(x[:400], y[:400], x[400:], y[400:], TrainConfig(max_trees=20), feature_names=["a", "b", "c"])
    path = tmp_path / "model.txt"
    model.save(path)
    loaded = Ensemble.load(path)
    assert loaded.to_text() == model.to_text()
    assert loaded.feature_names == ("a", "b", "c")
    assert loaded.config == model.config
    np.testing.assert_array_equal(predict(loaded, x), predict(model, x))


def test_corrupted_schema_hash(tmp_path):
    """Test a model whose names do not match its hash is rejected."""
    x, y = regression_data(200, 8)
    model = fit(x, y, x, y, TrainConfig(max_trees=2))
    text = model.to_text().replace("feature_names=f0|f1|f2", "feature_names=f0|f1|zz")
    with pytest.raises(SchemaMismatchError):
        Ensemble.from_text(text)


def test_prediction_chunking_bitwise():
    """Test predicting in chunks equals one call."""
    x, y = regression_data(1000, 9)
    model = fit(x, y, x, y, TrainConfig(max_trees=10))
    rows = np.random.default_rng(10).uniform(size=(10_000, 3))
    whole = predict(model, rows)
    parts = np.concatenate([predict(model, rows[i : i + 777]) for i in range(0, 10_000, 777)])
    np.testing.assert_array_equal(whole, parts)


def test_schema_and_input_errors():
    """Test wrong widths, infinite values and empty sets."""
    x, y = regression_data(100, 11)
    model = fit(x, y, x, y, TrainConfig(max_trees=1))
    with pytest.raises(SchemaMismatchError):
        predict(model, np.ones((3, 4)))
    bad = x.copy()
    bad[0, 0] = np.inf
    with pytest.raises(ValidationError):
        fit(bad, y, x, y)
    with pytest.raises(ValidationError):
        fit(x, y, x[:0], y[:0])
