import math

import numpy as np
import pytest

from smalltime.dpe import PdeGrid, greeks, solve_dpe
from smalltime.hedge import (STRATEGY_CATALOG, StrategySpec, replication_gap,
                             simulate_hedge, strategy_from_catalog)
from smalltime.market import MarketParams, bs_price, call, simulate_gbm
from smalltime.matcore import GammaBand
from smalltime.paths import BundleSpec, sample_bundle, uniform_grid

PARAMS = MarketParams(sigma=0.2, horizon=1.0)
BAND = GammaBand.upper_only(0.5)


def _bundle(paths=500, steps=200, seed=101):
    return sample_bundle(1, uniform_grid(1.0, steps), paths, seed=seed)


def test_zero_strategy_keeps_capital():
    b = _bundle()
    rep = simulate_hedge(b, 100.0, 7.0, StrategySpec.zero(), call(100.0),
                         BAND, PARAMS)
    s_t = simulate_gbm(b, 100.0, PARAMS)[:, -1]
    assert np.allclose(rep.x_terminal, 7.0)
    assert np.allclose(rep.shortfall, 7.0 - np.maximum(s_t - 100.0, 0.0))


def test_buy_and_hold_telescopes_exactly():
    b = _bundle()
    strat = strategy_from_catalog("buy_and_hold", y0=1.0)
    rep = simulate_hedge(b, 100.0, 5.0, strat, call(100.0), BAND, PARAMS)
    s_t = simulate_gbm(b, 100.0, PARAMS)[:, -1]
    assert np.allclose(rep.x_terminal, 5.0 + s_t - 100.0, atol=1e-9)


def test_wealth_is_a_discrete_martingale():
    spec = BundleSpec(1, uniform_grid(1.0, 200), 40_000, seed=7, chunk_size=10_000)
    for strat in (StrategySpec.zero(),
                  strategy_from_catalog("buy_and_hold", y0=0.7),
                  strategy_from_catalog("constant_gamma", y0=0.3, gamma=2e-5)):
        rep = simulate_hedge(spec, 100.0, 10.0, strat, call(100.0), BAND, PARAMS)
        se = float(np.std(rep.x_terminal, ddof=1)) / math.sqrt(rep.x_terminal.size)
        assert abs(float(np.mean(rep.x_terminal)) - 10.0) <= 4.0 * se + 1e-12


def test_funding_shift_is_pathwise_additive():
    b = _bundle()
    strat = strategy_from_catalog("buy_and_hold", y0=0.5)
    r1 = simulate_hedge(b, 100.0, 5.0, strat, call(100.0), BAND, PARAMS)
    r2 = simulate_hedge(b, 100.0, 6.5, strat, call(100.0), BAND, PARAMS)
    assert np.allclose(r2.shortfall - r1.shortfall, 1.5, atol=1e-9)


def test_gamma_clamp_counts_events():
    b = _bundle(paths=100, steps=50)
    # cash gamma = gamma * S^2 ~ 2.0 at S=100, far above the 0.5 bound
    strat = strategy_from_catalog("constant_gamma", y0=0.0, gamma=2e-4)
    rep = simulate_hedge(b, 100.0, 5.0, strat, call(100.0), BAND, PARAMS)
    assert rep.clamp_events > 0
    assert 0.0 < rep.clamp_rate <= 1.0


def test_dpe_strategy_clamp_rate_low():
    sol = solve_dpe(call(100.0), BAND, PARAMS, PdeGrid.around_spot(100.0, PARAMS, nx=400))
    strat = StrategySpec.from_dpe(sol)
    spec = BundleSpec(1, uniform_grid(1.0, 500), 2000, seed=11, chunk_size=1000)
    rep = simulate_hedge(spec, 100.0, 50.0, strat, call(100.0), BAND, PARAMS)
    assert rep.clamp_rate < 0.05
    assert math.isfinite(rep.alpha_max)


def test_dpe_strategy_super_replicates_with_cushion():
    sol = solve_dpe(call(100.0), BAND, PARAMS, PdeGrid.around_spot(100.0, PARAMS, nx=400))
    v0 = float(greeks(sol, 0.0, 100.0)[0])
    strat = StrategySpec.from_dpe(sol)
    spec = BundleSpec(1, uniform_grid(1.0, 1000), 2000, seed=13, chunk_size=1000)
    rep = simulate_hedge(spec, 100.0, 1.01 * v0, strat, call(100.0), BAND, PARAMS)
    assert rep.frac_nonnegative >= 0.99
    assert rep.y0 == pytest.approx(float(greeks(sol, 0.0, 100.0)[1]))


def test_strategy_bounds_must_be_finite():
    with pytest.raises(ValueError):
        StrategySpec(kind="constant", y0=0.0, alpha_bound=math.inf)


def test_strategy_catalog_contents():
    assert set(STRATEGY_CATALOG) == {"zero", "buy_and_hold", "constant_gamma",
                                     "dpe_tracker"}
    with pytest.raises(KeyError):
        strategy_from_catalog("nope")
    with pytest.raises(ValueError):
        strategy_from_catalog("dpe_tracker")  # needs a surface


def test_replication_gap_inactive_constraints():
    band = GammaBand.unbounded()
    spec = BundleSpec(1, uniform_grid(1.0, 400), 1000, seed=17, chunk_size=1000)
    rep = replication_gap(call(100.0), band, PARAMS, 100.0, spec,
                          grid=PdeGrid.around_spot(100.0, PARAMS, nx=400))
    assert abs(rep.price_gap) / rep.bs_price < 5e-3


def test_replication_gap_binding_upper_bound():
    spec = BundleSpec(1, uniform_grid(1.0, 500), 2000, seed=19, chunk_size=1000)
    rep = replication_gap(call(100.0), BAND, PARAMS, 100.0, spec,
                          grid=PdeGrid.around_spot(100.0, PARAMS, nx=400))
    assert rep.price_gap > 0.01 * rep.bs_price
    assert rep.run_bs_funded.frac_negative >= 0.2


def test_lower_constraint_gap_on_concave_payoff():
    # capped payoff min(s, K): the lower bound binds where v_ss < 0
    from smalltime.market import piecewise_linear
    capped = piecewise_linear([1e-4, 100.0], [1.0, 0.0], value_at_first=1e-4)
    band = GammaBand.lower_only(0.0)
    spec = BundleSpec(1, uniform_grid(1.0, 400), 1000, seed=23, chunk_size=1000)
    rep = replication_gap(capped, band, PARAMS, 100.0, spec,
                          grid=PdeGrid.around_spot(100.0, PARAMS, nx=400))
    assert rep.price_gap > 0.0


def test_hedge_report_csv(tmp_path):
    rep = simulate_hedge(_bundle(paths=5, steps=10), 100.0, 5.0,
                         StrategySpec.zero(), call(100.0), BAND, PARAMS)
    f = tmp_path / "shortfall.csv"
    rep.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "path,S_T,X_T,shortfall"
    assert len(lines) == 6


def test_workers_do_not_change_hedge_results():
    spec = BundleSpec(1, uniform_grid(1.0, 100), 2000, seed=29, chunk_size=500)
    strat = strategy_from_catalog("buy_and_hold", y0=0.4)
    r1 = simulate_hedge(spec, 100.0, 5.0, strat, call(100.0), BAND, PARAMS, workers=1)
    r2 = simulate_hedge(spec, 100.0, 5.0, strat, call(100.0), BAND, PARAMS, workers=3)
    assert np.array_equal(r1.shortfall, r2.shortfall)
