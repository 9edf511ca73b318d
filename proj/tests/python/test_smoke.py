import math
import os

import pytest

import riskrl

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def test_empirical_risk_measures():
    xs = [1.0, 2.0, 3.0, 4.0]
    assert riskrl.empirical_var(xs, 0.5) == 2.0
    assert riskrl.empirical_cvar(xs, 0.5) == pytest.approx(1.5)
    assert riskrl.empirical_cvar(xs, 1.0) == pytest.approx(2.5)


def test_losses():
    assert riskrl.quantile_loss(2.0, 0.25) == pytest.approx(0.5)
    assert riskrl.quantile_loss(-2.0, 0.25) == pytest.approx(1.5)
    assert riskrl.soft_loss_grad(0.0, 0.3, kappa=0.5, epsilon=0.05) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        riskrl.soft_quantile_loss(1.0, 0.5, kappa=-1.0)


def test_grid_and_head():
    assert riskrl.grid_levels(2) == [0.25, 0.75]
    assert riskrl.project_level(0.1, 10) == 0
    assert riskrl.project_level(0.16, 10) == 1
    out = riskrl.monotone_head([0.0, -3.0, 5.0])
    assert all(b >= a for a, b in zip(out, out[1:]))


def test_dp_matches_brute_force_on_corridor():
    sol = riskrl.dp_solve("noisy_corridor", 10, "hard")
    assert sol["converged"]
    brute = riskrl.brute_force_var("noisy_corridor", 0.05)
    assert sol["initial_values"][0] == pytest.approx(brute["value"], abs=1e-9)
    with pytest.raises(ValueError):
        riskrl.dp_solve("noisy_corridor", 10, "median")


def test_path_returns():
    r = riskrl.path_returns()
    assert r["long"] < r["short"]


def test_train_short_run(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(
        "[experiment]\nalgorithm = var_ac\nseeds = 0\n"
        "[environment]\nname = noisy_corridor\n"
        "[train]\nn_iterations = 5\nn_trajectories = 4\npolicy_repr = tabular\nvalue_repr = tabular\n"
    )
    logs = riskrl.train(str(cfg), seeds=[0, 1])
    assert len(logs) == 2
    assert logs[0]["algorithm"] == "var_ac"
    assert len(logs[0]["mean_return"]) == 5
    assert all(math.isfinite(x) for x in logs[1]["mean_return"])
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.ini"
        bad.write_text("[train]\npolicy_lr = -1\n")
        riskrl.train(str(bad))


def test_audit_scope():
    results = riskrl.audit("metrics")
    assert results and all(r["passed"] for r in results)
    with pytest.raises(ValueError):
        riskrl.audit("nonsense")
