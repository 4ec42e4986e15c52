"""Simulation of gamma-constrained trading strategies and super-replication
shortfall analysis.

Wealth and share count follow the discrete left-point updates
X += Y dS and Y += alpha dt + gamma dS, with the cash gamma S^2 gamma
clamped into the band before use (clamp events are counted).  The surface-
driven strategy reads delta and cash gamma off a solved value surface; its
drift is the discrete time derivative of the delta field plus the
curvature correction needed for the share count to track the delta along
the simulated path, and its boundedness on the grid is checked, not
assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dpe import DpeSolution, PdeGrid, greeks, solve_dpe
from .market import MarketParams, Payoff, bs_price, simulate_gbm
from .matcore import GammaBand
from .paths import as_chunks, map_chunks_ordered


def _dpe_drift_field(sol: DpeSolution) -> np.ndarray:
    """Drift alpha(t, x) = d(delta)/dt + sigma^2/2 * s^2 * v_sss.

    The third derivative comes from the stored cash gamma G = s^2 v_ss via
    sigma^2/2 * (G_x - 2 G) / s.
    """
    delta, g = sol.delta, sol.cash_gamma
    t, x = sol.t_nodes, sol.x_nodes
    s = np.exp(x)
    out = np.empty_like(delta)
    if t.size > 1:
        dt = t[1] - t[0]
        out[:-1] = (delta[1:] - delta[:-1]) / dt
        out[-1] = out[-2]
    else:
        out[:] = 0.0
    dx = x[1] - x[0]
    gx = np.empty_like(g)
    gx[:, 1:-1] = (g[:, 2:] - g[:, :-2]) / (2.0 * dx)
    gx[:, 0] = (g[:, 1] - g[:, 0]) / dx
    gx[:, -1] = (g[:, -1] - g[:, -2]) / dx
    out += 0.5 * sol.params.sigma ** 2 * (gx - 2.0 * g) / s[None, :]
    return out


@dataclass
class StrategySpec:
    """Trading strategy: initial shares plus drift and gamma sources.

    kind "constant" uses fixed alpha and gamma values; kind "dpe" reads
    them off the attached value surface.  Declared bounds must be finite
    (admissibility); for surface strategies they are measured on the grid.
    """

    kind: str
    y0: float | None = None
    alpha_value: float = 0.0
    gamma_value: float = 0.0
    solution: DpeSolution | None = None
    alpha_bound: float = 0.0
    gamma_bound: float = 0.0
    name: str = "constant"
    _drift_field: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.alpha_bound) and math.isfinite(self.gamma_bound)):
            raise ValueError("declared strategy bounds must be finite")

    @classmethod
    def zero(cls, y0: float = 0.0) -> "StrategySpec":
        return cls(kind="constant", y0=y0, name="zero")

    @classmethod
    def constant(cls, y0: float, alpha: float = 0.0, gamma: float = 0.0,
                 name: str = "constant") -> "StrategySpec":
        return cls(kind="constant", y0=y0, alpha_value=alpha, gamma_value=gamma,
                   alpha_bound=abs(alpha), gamma_bound=abs(gamma), name=name)

    @classmethod
    def from_dpe(cls, solution: DpeSolution, name: str = "dpe_tracker") -> "StrategySpec":
        drift = _dpe_drift_field(solution)
        if not np.all(np.isfinite(drift)):
            raise ValueError("surface drift is not finite on the grid")
        s = solution.s_nodes
        gamma_bound = float(np.max(np.abs(solution.cash_gamma) / (s * s)[None, :]))
        spec = cls(kind="dpe", y0=None, solution=solution,
                   alpha_bound=float(np.max(np.abs(drift))),
                   gamma_bound=gamma_bound, name=name)
        spec._drift_field = drift
        return spec


STRATEGY_CATALOG = {
    "zero": "hold nothing; terminal wealth equals the initial capital",
    "buy_and_hold": "constant share count, no rebalancing; wealth moves "
                    "one-for-one with the underlying",
    "constant_gamma": "fixed gamma with zero drift, clamped into the band",
    "dpe_tracker": "delta, gamma and drift read off the solved value "
                   "surface; the super-replication strategy",
}


def strategy_from_catalog(name: str, y0: float = 0.0, alpha: float = 0.0,
                          gamma: float = 0.0, solution: DpeSolution | None = None
                          ) -> StrategySpec:
    if name == "zero":
        return StrategySpec.zero(y0=0.0)
    if name == "buy_and_hold":
        return StrategySpec.constant(y0=y0, name="buy_and_hold")
    if name == "constant_gamma":
        return StrategySpec.constant(y0=y0, alpha=alpha, gamma=gamma,
                                     name="constant_gamma")
    if name == "dpe_tracker":
        if solution is None:
            raise ValueError("dpe_tracker needs a solved surface")
        return StrategySpec.from_dpe(solution)
    raise KeyError(f"unknown strategy catalog entry {name!r}")


@dataclass
class HedgeReport:
    """Terminal shortfall distribution of a simulated strategy."""

    shortfall: np.ndarray
    s_terminal: np.ndarray
    x_terminal: np.ndarray
    x0: float
    y0: float
    clamp_events: int
    clamp_rate: float
    alpha_max: float
    quantiles: dict

    @property
    def frac_nonnegative(self) -> float:
        return float(np.mean(self.shortfall >= 0.0))

    @property
    def frac_negative(self) -> float:
        return float(np.mean(self.shortfall < 0.0))

    def to_csv(self, path) -> None:
        from .reports import write_csv
        rows = [[i, float(s), float(x), float(sf)] for i, (s, x, sf) in
                enumerate(zip(self.s_terminal, self.x_terminal, self.shortfall))]
        write_csv(path, ["path", "S_T", "X_T", "shortfall"], rows)


def _summary_quantiles(shortfall: np.ndarray) -> dict:
    return {
        "q01": float(np.quantile(shortfall, 0.01)),
        "q05": float(np.quantile(shortfall, 0.05)),
        "q25": float(np.quantile(shortfall, 0.25)),
        "median": float(np.median(shortfall)),
        "mean": float(np.mean(shortfall)),
        "frac_nonnegative": float(np.mean(shortfall >= 0.0)),
    }


def simulate_hedge(source, s0: float, x0: float, strategy: StrategySpec,
                   payoff: Payoff, band: GammaBand, params: MarketParams,
                   workers: int = 1) -> HedgeReport:
    """Run the strategy over the bundle and report terminal shortfalls.

    The bundle must be one-dimensional on a grid starting at 0 and ending
    at the horizon.  Queries off the solved surface clamp the price into
    the surface's range (exits are vanishingly rare on the default grids).
    """
    sol = strategy.solution
    drift_field = strategy._drift_field
    if strategy.y0 is not None:
        y0_used = float(strategy.y0)
    else:
        y0_used = float(greeks(sol, 0.0, s0)[1])

    def one(chunk):
        if chunk.dim != 1:
            raise ValueError("hedging needs a one-dimensional bundle")
        t = chunk.grid.points
        if t[0] != 0.0 or abs(t[-1] - params.horizon) > 1e-12 * max(1.0, params.horizon):
            raise ValueError("hedging grid must span [0, horizon]")
        s_paths = simulate_gbm(chunk, s0, params)
        p = s_paths.shape[0]
        y = np.full(p, y0_used)
        x = np.full(p, float(x0))
        clamps = 0
        steps = 0
        a_max = 0.0
        if sol is not None:
            s_lo, s_hi = float(sol.s_nodes[0]), float(sol.s_nodes[-1])
        for k in range(t.size - 1):
            t_k = t[k]
            dt = t[k + 1] - t[k]
            s_k = s_paths[:, k]
            ds = s_paths[:, k + 1] - s_k
            if strategy.kind == "dpe":
                s_q = np.clip(s_k, s_lo, s_hi)
                cash = sol.interp(sol.cash_gamma, t_k, s_q)
                alpha = sol.interp(drift_field, t_k, s_q)
            else:
                cash = strategy.gamma_value * s_k * s_k
                alpha = np.full(p, strategy.alpha_value)
            outside = (cash < band.lower) | (cash > band.upper)
            clamps += int(np.sum(outside))
            gamma = band.clamp(cash) / (s_k * s_k)
            x = x + y * ds
            y = y + alpha * dt + gamma * ds
            a_max = max(a_max, float(np.max(np.abs(alpha))))
            steps += p
        s_t = s_paths[:, -1]
        return x - payoff(s_t), s_t, x, clamps, steps, a_max

    shortfalls, s_terms, x_terms = [], [], []
    clamp_events = 0
    total_steps = 0
    alpha_max = 0.0
    for sf, s_t, x_t, clamps, steps, a_max in map_chunks_ordered(
            one, as_chunks(source), workers):
        shortfalls.append(sf)
        s_terms.append(s_t)
        x_terms.append(x_t)
        clamp_events += clamps
        total_steps += steps
        alpha_max = max(alpha_max, a_max)
    shortfall = np.concatenate(shortfalls)
    return HedgeReport(shortfall=shortfall,
                       s_terminal=np.concatenate(s_terms),
                       x_terminal=np.concatenate(x_terms),
                       x0=float(x0), y0=y0_used,
                       clamp_events=clamp_events,
                       clamp_rate=clamp_events / max(total_steps, 1),
                       alpha_max=alpha_max,
                       quantiles=_summary_quantiles(shortfall))


@dataclass
class GapReport:
    """Price gap between the constrained and unconstrained prices, with the
    shortfall distributions of the surface strategy under both fundings."""

    price_gap: float
    constrained_price: float
    bs_price: float
    run_constrained: HedgeReport
    run_bs_funded: HedgeReport


def replication_gap(payoff: Payoff, band: GammaBand, params: MarketParams,
                    s0: float, source, grid: PdeGrid | None = None) -> GapReport:
    """Simulate the surface strategy funded at the constrained price and at
    the unconstrained lognormal price, and report both shortfall
    distributions together with the price gap."""
    if grid is None:
        grid = PdeGrid.around_spot(s0, params)
    sol = solve_dpe(payoff, band, params, grid)
    v0 = float(greeks(sol, 0.0, s0)[0])
    bs0 = float(bs_price(payoff, s0, 0.0, params))
    strategy = StrategySpec.from_dpe(sol)
    run_v = simulate_hedge(source, s0, v0, strategy, payoff, band, params)
    run_bs = simulate_hedge(source, s0, bs0, strategy, payoff, band, params)
    return GapReport(price_gap=v0 - bs0, constrained_price=v0, bs_price=bs0,
                     run_constrained=run_v, run_bs_funded=run_bs)
