import csv
import math

import numpy as np
import pytest

import offirl


def test_names():
    assert {"chain5", "gridworld4x4", "pointmass2d"} <= set(offirl.env_names())
    assert set(offirl.algorithm_names()) == {"cameron", "oril", "tgr", "bc", "combo"}


@pytest.mark.parametrize("gamma", [0.0, 0.5, 0.9, 0.99])
def test_occupancy_mass(gamma):
    pi = np.full((5, 2), 0.5)
    rho = offirl.occupancy("chain5", pi, gamma)
    assert rho.shape == (5, 10)
    np.testing.assert_allclose(rho.sum(axis=1), 1.0 / (1.0 - gamma), rtol=1e-9)
    mu = offirl.mu("chain5", pi, gamma, 0.5)
    np.testing.assert_allclose(mu.sum(axis=1), 1.0 / ((1.0 - gamma) * 0.5), rtol=1e-9)


def test_mmd_closed_form():
    x = np.zeros((2, 10))
    y = np.ones((2, 10))
    assert offirl.mmd_unbiased(x, y) == pytest.approx(2 * (1 - math.exp(-1.0)), abs=1e-12)
    with pytest.raises(offirl.InvalidParameter):
        offirl.mmd_unbiased(x[:, :1], y)


def test_normalized_return():
    assert offirl.normalized_return(2.0, 10.0, 2.0) == pytest.approx(100.0)
    assert offirl.normalized_return(6.0, 10.0, 2.0) == pytest.approx(50.0)


def test_config_errors_name_the_field():
    with pytest.raises(offirl.ConfigError, match="cameron.gamma"):
        offirl.resolve_config("", ["cameron.gamma=oops"])
    with pytest.raises(offirl.ConfigError, match="idle.nope"):
        offirl.resolve_config("[idle]\nnope = 1\n")
    text = offirl.resolve_config("[run]\nenv = gridworld4x4\n", ["combo.beta=1"])
    assert "env = gridworld4x4" in text and "beta = 1" in text


def test_train_and_report(tmp_path):
    overrides = ["cameron.iterations=2", "cameron.eval_every=1", "cameron.idle_updates=5"]
    out = offirl.train("", overrides, "cameron", 3, tmp_path / "run")
    assert out["iterations"] == 2
    for name in ["config.ini", "metrics.csv", "policy.json", "cost.json", "run.json"]:
        assert (tmp_path / "run" / name).exists()
    rows = offirl.report([tmp_path], str(tmp_path / "report.csv"))
    assert len(rows) == 1 and rows[0]["algorithm"] == "cameron"
    with open(tmp_path / "report.csv") as f:
        kinds = [r["kind"] for r in csv.DictReader(f)]
    assert kinds == ["run", "aggregate"]
