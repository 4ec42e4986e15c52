"""Explicit finite-difference solver for the gamma-constrained pricing
equation on a log-price grid.

The lower bound enters the stepping operator (the clamp A -> max(A, lower)
is the closed-form optimizer of the sup over added curvature); the upper
bound enters through the face-lifted terminal condition plus a clamp
min(., upper) in the step.  The clamp alone is not a proof-grade treatment
of the upper constraint: nodes where the measured cash gamma exceeds the
bound are flagged and reported, and correctness is established against the
face-lift pricing oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .market import MarketParams, Payoff, face_lift
from .matcore import GammaBand

ACTIVE_NONE, ACTIVE_LOWER, ACTIVE_UPPER = 0, 1, 2
_ACTIVE_NAMES = {ACTIVE_NONE: "none", ACTIVE_LOWER: "lower", ACTIVE_UPPER: "upper"}


class StabilityError(ValueError):
    """The grid violates the explicit-scheme stability bound."""


class OutOfGridError(ValueError):
    """A query point lies outside the solved surface."""


@dataclass
class PdeGrid:
    """Log-price grid bounds and resolution.

    The explicit scheme needs dt <= dx^2 / sigma^2 (diffusion number at
    most one half with the sigma^2/2 coefficient); solve_dpe enforces it.
    """

    x_min: float
    x_max: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.nx < 16:
            raise ValueError("need at least 16 space nodes")
        if self.nt < 1:
            raise ValueError("need at least one time step")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @classmethod
    def around_spot(cls, s0: float, params: MarketParams, nx: int = 400,
                    width_sigmas: float = 6.0, safety: float = 0.9) -> "PdeGrid":
        """Grid of nx nodes spanning +/- width_sigmas * sigma * sqrt(T)
        around log s0, with nt chosen from the stability bound."""
        half = width_sigmas * params.sigma * math.sqrt(params.horizon)
        x0 = math.log(s0)
        dx = 2.0 * half / (nx - 1)
        dt_max = safety * dx * dx / params.sigma ** 2
        nt = max(1, int(math.ceil(params.horizon / dt_max)))
        return cls(x_min=x0 - half, x_max=x0 + half, nx=nx, nt=nt)


@dataclass
class DpeSolution:
    """Value surface v(t, s) with discrete derivatives and constraint flags.

    Arrays are indexed [time, space] with time ascending from 0 to the
    horizon.  delta holds dv/ds, cash_gamma holds s^2 v_ss = v_xx - v_x.
    active marks which clamp branch bound at each node; breach_count and
    residual_max report where the measured cash gamma exceeded the upper
    bound (see the module docstring).
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    cash_gamma: np.ndarray
    active: np.ndarray
    band: GammaBand
    params: MarketParams
    terminal: np.ndarray
    residual_max: float
    breach_count: int
    breach_tol: float
    meta: dict = field(default_factory=dict)

    @property
    def s_nodes(self) -> np.ndarray:
        return np.exp(self.x_nodes)

    def interp(self, arr: np.ndarray, t, s):
        """Bilinear interpolation of a stored [time, space] field."""
        t_arr = np.asarray(t, dtype=float)
        s_arr = np.asarray(s, dtype=float)
        x_arr = np.log(s_arr)
        tn, xn = self.t_nodes, self.x_nodes
        eps_t = 1e-9 * max(1.0, tn[-1])
        eps_x = 1e-12 * max(1.0, abs(xn[-1]), abs(xn[0]))
        if (np.any(t_arr < tn[0] - eps_t) or np.any(t_arr > tn[-1] + eps_t)
                or np.any(x_arr < xn[0] - eps_x) or np.any(x_arr > xn[-1] + eps_x)):
            raise OutOfGridError("query point outside the solved surface")
        dt = tn[1] - tn[0] if tn.size > 1 else 1.0
        dx = xn[1] - xn[0]
        it = np.clip(((t_arr - tn[0]) / dt).astype(int), 0, tn.size - 2) if tn.size > 1 else 0
        ix = np.clip(((x_arr - xn[0]) / dx).astype(int), 0, xn.size - 2)
        wt = np.clip((t_arr - tn[it]) / dt, 0.0, 1.0) if tn.size > 1 else 0.0
        wx = np.clip((x_arr - xn[ix]) / dx, 0.0, 1.0)
        v00 = arr[it, ix]
        v01 = arr[it, ix + 1]
        v10 = arr[it + 1, ix] if tn.size > 1 else v00
        v11 = arr[it + 1, ix + 1] if tn.size > 1 else v01
        return ((1 - wt) * ((1 - wx) * v00 + wx * v01)
                + wt * ((1 - wx) * v10 + wx * v11))

    def to_csv(self, path, t_stride: int = 1, x_stride: int = 1) -> None:
        from .reports import write_csv
        rows = []
        s = self.s_nodes
        for m in range(0, self.t_nodes.size, t_stride):
            for i in range(0, self.x_nodes.size, x_stride):
                rows.append([float(self.t_nodes[m]), float(s[i]), float(self.v[m, i]),
                             float(self.delta[m, i]), float(self.cash_gamma[m, i]),
                             _ACTIVE_NAMES[int(self.active[m, i])]])
        write_csv(path, ["t", "s", "v", "v_s", "s2_v_ss", "active_constraint"], rows)


def _space_operators(v_slice: np.ndarray, dx: float):
    """Central v_x and the cash gamma v_xx - v_x; linear extrapolation
    (v_xx = 0) at the boundary nodes."""
    vx = np.empty_like(v_slice)
    vx[1:-1] = (v_slice[2:] - v_slice[:-2]) / (2.0 * dx)
    vx[0] = (v_slice[1] - v_slice[0]) / dx
    vx[-1] = (v_slice[-1] - v_slice[-2]) / dx
    a = np.empty_like(v_slice)
    a[1:-1] = ((v_slice[2:] - 2.0 * v_slice[1:-1] + v_slice[:-2]) / (dx * dx)
               - vx[1:-1])
    a[0] = -vx[0]
    a[-1] = -vx[-1]
    return vx, a


def solve_dpe(payoff: Payoff, band: GammaBand, params: MarketParams,
              grid: PdeGrid) -> DpeSolution:
    """Backward explicit solve of the constrained pricing equation.

    Terminal data is the face-lifted payoff (a band with no upper bound
    leaves the payoff unchanged).  Each step measures A = v_xx - v_x by
    central differences, applies the lower clamp max(A, lower), the upper
    clamp min(., upper), and advances v by dt * sigma^2/2 times the result.
    Boundary nodes extrapolate linearly in x.
    """
    sigma = params.sigma
    dx = grid.dx
    dt = params.horizon / grid.nt
    if dt > dx * dx / sigma ** 2 * (1.0 + 1e-9):
        raise StabilityError(
            f"dt={dt:.3e} exceeds the stability bound dx^2/sigma^2={dx * dx / sigma ** 2:.3e}")
    if grid.x_max - grid.x_min < 8.0 * sigma * math.sqrt(params.horizon):
        warnings.warn("log grid narrower than 4 sigma sqrt(T) on each side of "
                      "its center; boundary effects may pollute the interior",
                      stacklevel=2)
    if payoff.terminal_slope() < 0.0 or not math.isfinite(payoff.terminal_slope()):
        raise ValueError("payoff must grow at most linearly in s")

    x = grid.x_nodes
    s = np.exp(x)
    lifted = face_lift(payoff, band, s)
    g_t = lifted(s)

    nt = grid.nt
    v = np.empty((nt + 1, grid.nx))
    v[nt] = g_t
    t_nodes = np.linspace(0.0, params.horizon, nt + 1)
    half_sig2 = 0.5 * sigma * sigma
    breach_tol = 5.0 * (dx + dt) * sigma ** 2
    breach_count = 0
    residual_max = 0.0
    for m in range(nt - 1, -1, -1):
        vn = v[m + 1]
        _, a = _space_operators(vn, dx)
        a_clamped = a
        if band.has_lower:
            a_clamped = np.maximum(a_clamped, band.lower)
        if band.has_upper:
            over = a - band.upper
            n_over = int(np.sum(over > breach_tol))
            if n_over:
                breach_count += n_over
                residual_max = max(residual_max, half_sig2 * float(over.max()))
            a_clamped = np.minimum(a_clamped, band.upper)
        v[m] = vn + dt * half_sig2 * a_clamped
        v[m, 0] = 2.0 * v[m, 1] - v[m, 2]
        v[m, -1] = 2.0 * v[m, -2] - v[m, -3]

    delta = np.empty_like(v)
    cash_gamma = np.empty_like(v)
    active = np.zeros(v.shape, dtype=np.int8)
    for m in range(nt + 1):
        vx, a = _space_operators(v[m], dx)
        delta[m] = vx / s
        cash_gamma[m] = a
        if band.has_lower:
            active[m][a < band.lower] = ACTIVE_LOWER
        if band.has_upper:
            active[m][a > band.upper] = ACTIVE_UPPER

    return DpeSolution(t_nodes=t_nodes, x_nodes=x, v=v, delta=delta,
                       cash_gamma=cash_gamma, active=active, band=band,
                       params=params, terminal=g_t,
                       residual_max=residual_max, breach_count=breach_count,
                       breach_tol=breach_tol,
                       meta={"nx": grid.nx, "nt": nt, "dx": dx, "dt": dt})


def greeks(sol: DpeSolution, t, s):
    """Bilinear interpolation of (v, dv/ds, s^2 v_ss) at (t, s)."""
    return (sol.interp(sol.v, t, s),
            sol.interp(sol.delta, t, s),
            sol.interp(sol.cash_gamma, t, s))
