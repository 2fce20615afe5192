import json
import math

import numpy as np
import pytest

import transfer_budget as tb


def test_single_source_optimum():
    n1, regime, loc = tb.optimal_single(100, 1000, 0.01)
    assert n1 == 100
    assert regime == tb.Regime.InteriorMinimum
    assert loc == pytest.approx(100.0)
    assert tb.optimal_single(100, 1000, 0.004)[0] == 1000


def test_proxy_matches_formula():
    assert tb.proxy_single(100, 50, 0.02) == pytest.approx(0.5 * (1 / 150 + 2500 * 0.02 / 150**2))
    assert tb.proxy_single_high_dim(100, 50, 0.02, 3) == pytest.approx(3 * tb.proxy_single(100, 50, 0.02))


def test_plan_and_qp():
    plan = tb.plan_multi(100, 1, [1000], np.array([[0.01]]))
    assert plan["s_star"] == 100
    assert plan["n_star"] == [100]
    alpha, obj = tb.solve_alpha_qp(np.diag([4.0, 1.0]), 10, [10, 10])
    assert alpha.sum() == pytest.approx(1.0)
    assert alpha[1] == pytest.approx(0.8)
    assert obj == pytest.approx(alpha @ np.diag([4.0, 1.0]) @ alpha)


def test_regime_curve():
    n1, proxy, regime = tb.regime_curve(100, 1000, 0.004, 11)
    assert n1[0] == 0 and n1[-1] == 1000
    assert all(b < a for a, b in zip(proxy, proxy[1:]))
    assert regime == tb.Regime.MonotoneDecreasing


def test_families_and_kl():
    fam = tb.Family.gaussian(2.0, 2)
    assert fam.dim == 2
    value, err, approx = tb.kl_divergence(fam, np.zeros(2), np.ones(2))
    assert value == pytest.approx(2 / 8)
    assert not approx
    assert np.allclose(tb.fisher_analytic(tb.Family.bernoulli(), np.zeros(1)), [[0.25]])


def test_monte_carlo_matches_gaussian_proxy():
    mean, se = tb.mc_expected_kl(tb.Family.gaussian(), np.zeros(1), [(np.full(1, 0.1), 100)], 100, 2000, 7)
    assert abs(mean - tb.proxy_single(100, 100, 0.01)) < 4 * se


def test_run_command(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"family": {"kind": "gaussian"}, "N0": 100,
                               "sources": [{"name": "s", "delta": 0.1, "cap": 1000}]}))
    code, out, err = tb.run_command("plan", cfg, tmp_path / "out")
    assert code == 0, err
    lines = (tmp_path / "out" / "plan.csv").read_text().splitlines()
    assert lines[1] == "s,1000,1,100"
    cfg.write_text("{}")
    code, _, err = tb.run_command("plan", cfg, tmp_path / "out")
    assert code == 2
    assert "family" in err


def test_compare_strategies_small():
    rows = tb.compare_strategies([0.0], [50], 5, [tb.TrainStrategy.TargetOnly], [1])
    assert len(rows) == 1
    assert 0.0 <= rows[0]["mean_test_acc"] <= 1.0
    assert not math.isnan(rows[0]["mean_samples"])
