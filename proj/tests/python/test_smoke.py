import math

import numpy as np
import pytest

import svecchia


def test_fit_and_predict_borehole():
    X = svecchia.lhs(400, 8, seed=1)
    y = svecchia.test_function("borehole", X)
    model = svecchia.fit(X, y, m_est=20, seed=3)
    Xt = svecchia.uniform_design(100, 8, seed=2)
    out = model.predict(Xt, m_pred=40, level=0.95)
    yt = svecchia.test_function("borehole", Xt)
    rmse = float(np.sqrt(np.mean((out["mean"] - yt) ** 2)))
    assert rmse < 0.2 * float(np.std(y))
    assert np.all(out["variance"] >= 0)
    assert np.all(out["lo"] <= out["hi"])
    assert model.params["iterations"] > 0
    assert len(model.trace) == model.params["iterations"]


def test_interpolates_training_points():
    X = svecchia.lhs(60, 2, seed=5)
    y = np.sin(4 * X[:, 0]) + X[:, 1]
    model = svecchia.fit(X, y, vcf=False, m_est=10)
    out = model.predict(X[:5], m_pred=20)
    np.testing.assert_allclose(out["mean"], y[:5], atol=1e-4)


def test_save_load_roundtrip(tmp_path):
    X = svecchia.lhs(80, 3, seed=2)
    y = X.sum(axis=1) ** 2
    model = svecchia.fit(X, y, vcf=False, m_est=10)
    path = tmp_path / "model.json"
    model.save(str(path))
    again = svecchia.Model.load(str(path))
    Xt = svecchia.uniform_design(10, 3, seed=9)
    a = model.predict(Xt, m_pred=20)
    b = again.predict(Xt, m_pred=20)
    assert np.array_equal(a["mean"], b["mean"])
    assert np.array_equal(a["variance"], b["variance"])


def test_samples_are_seeded():
    X = svecchia.lhs(50, 2, seed=1)
    y = np.cos(3 * X[:, 0]) * X[:, 1]
    model = svecchia.fit(X, y, vcf=False, m_est=10)
    Xt = svecchia.uniform_design(6, 2, seed=4)
    s1 = model.sample(Xt, 3, seed=7, m_pred=20)
    s2 = model.sample(Xt, 3, seed=7, m_pred=20)
    assert s1.shape == (3, 6)
    assert np.array_equal(s1, s2)


def test_scores_and_errors():
    z = svecchia.crps_gaussian(0.0, 1.0, 0.0)
    assert z == pytest.approx(math.sqrt(2 / math.pi) - 1 / math.sqrt(math.pi), abs=1e-12)
    assert svecchia.log_score(0.0, 1.0, 0.0) == pytest.approx(0.5 * math.log(2 * math.pi))
    with pytest.raises(ValueError):
        svecchia.test_function("borehole", np.full((1, 8), 2.0))
    with pytest.raises(ValueError):
        svecchia.fit(np.zeros((3, 2)), np.zeros(4))


def test_simulate_gp_reproducible():
    X = svecchia.lhs(100, 2, seed=1)
    a = svecchia.simulate_gp(X, 1.0, [0.3, 0.3], seed=4)
    b = svecchia.simulate_gp(X, 1.0, [0.3, 0.3], seed=4)
    assert np.array_equal(a, b)
    assert a.shape == (100,)
