import json
import math

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

import marginlab as ml


def fig1(seed=0, d=30, n=120, rho=0.9):
    return ml.sample_dataset(rho, 10.0, d, n, seed)


def test_dataset_layout():
    ds = fig1()
    X, y, z = ds["X"], ds["y"], ds["z"]
    assert X.shape == (120, 30)
    np.testing.assert_array_equal(X[:, 0], 10.0 * z)
    np.testing.assert_array_equal(X[:, 1], y)
    again = fig1()
    np.testing.assert_array_equal(X, again["X"])


def test_losses_against_scipy():
    spec = ml.LossSpec()
    assert ml.eval_loss(spec, 0.0, 1) == pytest.approx(math.log(2.0))
    assert ml.grad_output(spec, 0.0, 1) == pytest.approx(-0.5)
    sd = ml.LossSpec("sd", lam=0.1)
    for f in np.linspace(-4, 4, 17):
        ref = -math.log(expit(f)) + 0.1 * f * f
        assert ml.eval_loss(sd, float(f), 1) == pytest.approx(ref, rel=1e-12)
    m_star, peak = ml.damp_peak(1.0)
    assert round(peak, 3) == 0.278
    assert ml.damp_peak(2.0)[1] == pytest.approx(2 * peak, rel=1e-12)
    with pytest.raises(ml.DomainError):
        ml.eval_loss(spec, float("nan"), 1)


def test_linear_backward_at_zero():
    ds = fig1()
    loss, grad = ml.linear_backward(np.zeros(30), ds["X"], ds["y"], ml.LossSpec())
    assert loss == pytest.approx(math.log(2.0))
    np.testing.assert_allclose(grad, -(ds["X"].T @ ds["y"]) / (2 * 120), atol=1e-13)


def test_max_margin_two_constraints():
    X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    y = np.array([1.0, -1.0])
    # rows y_i x_i are (1, 0, 0) and (0, -1, 0)
    sol = ml.solve_max_margin({"X": X, "y": y, "z": np.array([1.0, 1.0]), "B": 1.0})
    np.testing.assert_allclose(sol["w"], [1.0, -1.0, 0.0], atol=1e-8)
    assert sol["primal_value"] == pytest.approx(2.0, rel=1e-8)


def test_uniform_margin_and_leftover_accuracy():
    ds = ml.sample_dataset(0.9, 10.0, 50, 200, 3)
    w = ml.solve_uniform_margin(ds["X"], ds["y"], ds["z"], ds["B"], 1.0)
    assert abs(w[1] - 1) <= 1e-8 and abs(w[0]) <= 1e-8 and np.linalg.norm(w[2:]) <= 1e-8
    v = np.array([0.05, 1.0, 0.3, 0.4, 0.0])
    assert ml.leftover_accuracy(v, 10.0) == pytest.approx(norm.cdf(1.0), abs=1e-10)


def test_bound_formulas():
    assert ml.stable_bound_formula(100, 5, 5, 1) == pytest.approx(1 / 6.42)
    W, gamma, beta = ml.shortcut_bound_formula(100, 1, 10, 1)
    assert gamma == pytest.approx(2 / 60)
    assert W == pytest.approx(137 / 900)


def test_train_and_flow():
    tr, te = fig1(0), fig1(1, rho=0.1)
    w, snaps = ml.train_linear(tr, te, ml.LossSpec(), lr=1e-2, epochs=200, eval_every=100)
    assert [s["epoch"] for s in snaps] == [0, 100, 200]
    assert snaps[-1]["train"]["all"]["loss"] < snaps[0]["train"]["all"]["loss"]
    traj = ml.integrate_flow(10.0, 50, 0.5, 1.0, 0.1)
    assert traj.shape == (11, 3)
    np.testing.assert_allclose(traj[:, 2], 0.0, atol=1e-14)


def test_concentration_and_prop1():
    r = ml.check_concentration("norm", 400, 1.0, trials=2000, seed=1)
    assert r["pass"]
    formula, direct = ml.prop1_check(1000, 100, 0.9, 0.1, 0.1, 0)
    assert formula == pytest.approx(0.1)


def test_run_command(tmp_path):
    cfg = {"dgp": {"rho": 0.9, "B": 10, "d": 20, "n": 60, "seed": 2, "test": {"rho": 0.1}},
           "train": {"lr": 0.01, "epochs": 50, "eval_every": 25}}
    summary = ml.run("train", cfg, tmp_path)
    assert summary["command"] == "train"
    assert (tmp_path / "metrics.csv").exists()
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["manifest"] == summary["manifest"]
    bad = dict(cfg, train={"lr": 0.01, "epoch": 5})
    with pytest.raises(ml.ConfigError):
        ml.run("train", bad, tmp_path / "bad")
