"""Backtest tests: top-k selection, the hand fixture, naive-oracle equality,
metric formulas and their invariants."""

import numpy as np
import pytest

from rankfolio.backtest import (
    BacktestConfig,
    max_drawdown,
    portfolio_metrics,
    run_backtest,
    select_topk,
    sharpe_ratio,
)

from _oracles import naive_backtest, naive_topk


class TestSelectTopk:
    def test_basic_sort(self):
        np.testing.assert_array_equal(select_topk([0.3, 0.1, 0.5], 2), [2, 0])

    def test_all_equal_tie_break(self):
        np.testing.assert_array_equal(select_topk([0.2, 0.2, 0.2], 2), [0, 1])

    def test_k_equals_n(self):
        np.testing.assert_array_equal(sorted(select_topk([0.3, 0.1, 0.5], 3)), [0, 1, 2])

    def test_k_too_large(self):
        with pytest.raises(ValueError, match="exceeds"):
            select_topk([0.1, 0.2], 3)

    def test_matches_naive_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scores = rng.choice([0.1, 0.2, 0.3, 0.4], size=8)
            k = int(rng.integers(1, 9))
            np.testing.assert_array_equal(select_topk(scores, k), naive_topk(scores, k))


HAND_PREDICTIONS = np.array(
    [[0.9, 0.1, 0.5, 0.3], [0.2, 0.8, 0.7, 0.1], [0.05, 0.05, 0.05, 0.05]]
)
HAND_REALIZED = np.array(
    [[0.10, -0.05, 0.02, 0.00], [0.01, 0.03, -0.02, 0.04], [0.00, 0.02, -0.01, 0.05]]
)


class TestRunBacktest:
    def test_hand_fixture(self):
        # day 1 holds {0, 2}, day 2 holds {1, 2}, day 3 ties break to {0, 1}
        cfg = BacktestConfig(k=2)
        res = run_backtest(HAND_PREDICTIONS, HAND_REALIZED, cfg)
        np.testing.assert_allclose(res.daily_returns, [0.06, 0.005, 0.01], atol=1e-15)
        np.testing.assert_allclose(
            res.equity_curve, [1.0, 1.06, 1.0653, 1.075953], atol=1e-12
        )
        assert [list(h) for h in res.holdings] == [[0, 2], [1, 2], [0, 1]]
        m = res.metrics
        assert m["CR"] == pytest.approx(0.075953, abs=1e-12)
        assert m["AR"] == pytest.approx(467.4219821923317, rel=1e-12)
        assert m["AV"] == pytest.approx(0.48280430818293246, rel=1e-12)
        assert m["SR"] == pytest.approx(968.0505626624273, rel=1e-12)
        assert m["MDD"] == 0.0

    def test_all_zero_returns(self):
        preds = np.random.default_rng(1).normal(size=(4, 5))
        res = run_backtest(preds, np.zeros((4, 5)), BacktestConfig(k=2))
        m = res.metrics
        assert m["CR"] == 0.0
        assert m["AR"] == 0.0
        assert m["AV"] == 0.0
        assert m["MDD"] == 0.0
        assert np.isnan(m["SR"])  # undefined sentinel at zero volatility

    def test_strictly_positive_returns_no_drawdown(self):
        rng = np.random.default_rng(2)
        preds = rng.normal(size=(6, 4))
        realized = rng.uniform(0.001, 0.02, size=(6, 4))
        res = run_backtest(preds, realized, BacktestConfig(k=2))
        assert res.metrics["MDD"] == 0.0

    def test_matches_naive_reference_exactly(self):
        rng = np.random.default_rng(3)
        for trial in range(25):
            days = int(rng.integers(1, 6))
            n = int(rng.integers(2, 7))
            k = int(rng.integers(1, n + 1))
            preds = rng.normal(size=(days, n))
            realized = rng.normal(0.0, 0.02, size=(days, n))
            cfg = BacktestConfig(k=k)
            res = run_backtest(preds, realized, cfg)
            ref = naive_backtest(preds.tolist(), realized.tolist(), k)
            assert [list(h) for h in res.holdings] == ref["holdings"]
            np.testing.assert_array_equal(res.daily_returns, ref["daily_returns"])
            np.testing.assert_array_equal(res.equity_curve, ref["equity_curve"])
            for key in ("CR", "AR", "AV", "MDD"):
                assert res.metrics[key] == ref[key], key
            if np.isnan(ref["SR"]):
                assert np.isnan(res.metrics["SR"])
            else:
                assert res.metrics["SR"] == ref["SR"]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            run_backtest(np.zeros((2, 3)), np.zeros((2, 4)), BacktestConfig(k=1))

    def test_non_finite_realized(self):
        realized = np.zeros((2, 3))
        realized[1, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            run_backtest(np.zeros((2, 3)), realized, BacktestConfig(k=1))


class TestPortfolioMetrics:
    def test_sharpe_reproduces_published_style_pairs(self):
        # SR = (AR - rf) / AV with rf = 4.3%
        assert sharpe_ratio(0.1478, 0.1579, 0.043) == pytest.approx(0.6637, abs=5e-4)
        assert sharpe_ratio(0.1623, 0.1585, 0.043) == pytest.approx(0.7529, abs=5e-4)

    def test_constant_daily_return_closed_form(self):
        r = 0.001
        daily = np.full(252, r)
        m = portfolio_metrics(daily, BacktestConfig(k=1))
        assert m["CR"] == pytest.approx((1 + r) ** 252 - 1, rel=1e-12)
        assert m["AR"] == pytest.approx((1 + r) ** 252 - 1, rel=1e-12)
        assert m["AV"] == pytest.approx(0.0, abs=1e-12)

    def test_arithmetic_annualization_option(self):
        daily = np.array([0.01, -0.005, 0.002])
        m = portfolio_metrics(daily, BacktestConfig(k=1, annualization="arithmetic"))
        assert m["AR"] == pytest.approx(np.mean(daily) * 252, rel=1e-12)

    def test_sr_linearity(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            daily = rng.normal(0.0005, 0.01, size=30)
            cfg = BacktestConfig(k=1)
            m = portfolio_metrics(daily, cfg)
            if m["AV"] > 0:
                assert m["SR"] * m["AV"] + cfg.risk_free_rate == pytest.approx(
                    m["AR"], abs=1e-12
                )

    def test_single_day_av_zero_sr_undefined(self):
        m = portfolio_metrics([0.01], BacktestConfig(k=1))
        assert m["AV"] == 0.0
        assert np.isnan(m["SR"])


class TestDrawdownProperties:
    def test_new_high_never_worsens_mdd(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            equity = np.cumprod(1 + rng.normal(0, 0.02, size=15))
            equity = np.concatenate([[1.0], equity])
            base = max_drawdown(equity)
            extended = np.concatenate([equity, [equity.max() * 1.01]])
            assert max_drawdown(extended) >= base - 1e-15

    def test_crash_never_improves_mdd(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            equity = np.cumprod(1 + rng.normal(0, 0.02, size=15))
            equity = np.concatenate([[1.0], equity])
            base = max_drawdown(equity)
            crashed = np.concatenate([equity, [equity[-1] * 0.5]])
            assert max_drawdown(crashed) <= base + 1e-15

    def test_equity_reconstruction_bit_for_bit(self):
        rng = np.random.default_rng(7)
        preds = rng.normal(size=(10, 5))
        realized = rng.normal(0, 0.02, size=(10, 5))
        res = run_backtest(preds, realized, BacktestConfig(k=2))
        rebuilt = np.concatenate([[1.0], np.cumprod(1.0 + res.daily_returns)])
        np.testing.assert_array_equal(res.equity_curve, rebuilt)
