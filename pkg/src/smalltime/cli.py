"""Batch front end: experiment configuration, orchestration, reports.

Configuration is a key = value text file; every numeric parameter can be
overridden with --key=value flags.  Each run writes a JSON summary
(parameters echoed, analytic references, statistics, pass/fail per check)
plus CSV artifacts, all byte-identical across reruns and --workers values.
Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dpe import PdeGrid, greeks, solve_dpe
from .hedge import STRATEGY_CATALOG, StrategySpec, replication_gap, simulate_hedge
from .lilab import (ergodic_liminf, example36_diag, moment_dominance,
                    ratio_sup, tail_bound_check)
from .market import MarketParams, bs_price, call, face_lift, put
from .matcore import GammaBand, SymMatrix
from .paths import (BundleSpec, ergodic_grid, geometric_grid, sample_bundle,
                    uniform_grid)
from .reports import config_hash, write_csv, write_json
from .stochint import (INTEGRAND_CATALOG, VectorSpec, catalog_integrand,
                       drift_integral, integrate_double)

REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _parse_value(kind: str, text):
    if isinstance(text, str):
        text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if isinstance(text, bool):
                return text
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind == "floats":
            if isinstance(text, (list, tuple)):
                return [float(v) for v in text]
            return [float(v) for v in text.split(",") if v.strip()]
        return str(text)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse value {text!r} as {kind}", key=None) from None


_COMMON = {
    "seed": ("int", 20240),
    "workers": ("int", 1),
    "out": ("str", ""),
}

_SCHEMAS = {
    "moment": {
        "d": ("int", 1), "lam": ("float", 0.5), "horizon": ("float", 0.5),
        "paths": ("int", 100_000), "steps": ("int", 400),
        "integrand": ("str", "identity"), "chunk": ("int", 10_000),
        "max_sigmas": ("float", 3.0),
    },
    "tail-bound": {
        "d": ("int", 1), "horizon": ("float", 0.1),
        "alphas": ("floats", [0.5, 1.0, 2.0, 4.0]),
        "paths": ("int", 100_000), "steps": ("int", 400),
        "integrand": ("str", "identity"), "rule": ("str", "optimized"),
        "eta": ("float", 0.1), "chunk": ("int", 10_000),
    },
    "lil-sup": {
        "integrand": ("str", "identity"), "d": ("int", 1),
        "kind": ("str", "h"), "absolute": ("bool", True),
        "theta": ("float", 0.5), "levels": ("int", 34), "t0": ("float", 1e-2),
        "paths": ("int", 10_000), "eta": ("float", 0.3),
        "violation_limit": ("float", 0.01),
    },
    "ergodic": {
        "d": ("int", 1), "beta": ("float", 1.0), "delta": ("float", 0.1),
        "levels": ("int", 60), "paths": ("int", 10_000), "tol": ("float", 0.02),
    },
    "example36": {
        "theta": ("float", 0.5), "levels": ("int", 94), "t0": ("float", 1e-2),
        "paths": ("int", 10_000), "refinements": ("int", 4),
        "chunk": ("int", 2000), "consistency_max": ("float", 0.25),
        # golden interval around the fixed-seed calibration median 1.4053
        "golden_lo": ("float", 1.26), "golden_hi": ("float", 1.55),
    },
    "prop39": {
        "eps": ("float", 0.5), "theta": ("float", 0.5), "levels": ("int", 60),
        "t0": ("float", 1e-4), "paths": ("int", 10_000), "window": ("int", 10),
        "shrink": ("float", 0.8),
    },
    "dpe-price": {
        "payoff": ("str", "call"), "strike": ("float", 100.0),
        "sigma": ("float", 0.2), "horizon": ("float", 1.0),
        "s0": ("float", 100.0), "lower": ("float", -math.inf),
        "upper": ("float", math.inf), "nx": ("int", 400),
        "bs_tol": ("float", 0.005),
    },
    "bs-price": {
        "payoff": ("str", "call"), "strike": ("float", 100.0),
        "sigma": ("float", 0.2), "horizon": ("float", 1.0),
        "s": ("float", 100.0), "t": ("float", 0.0),
    },
    "hedge": {
        "payoff": ("str", "call"), "strike": ("float", 100.0),
        "sigma": ("float", 0.2), "horizon": ("float", 1.0),
        "s0": ("float", 100.0), "lower": ("float", -math.inf),
        "upper": ("float", 0.5), "nx": ("int", 400),
        "paths": ("int", 10_000), "steps": ("int", 2000),
        "cushion": ("float", 0.01), "funding": ("str", "dpe"),
        "target_nonneg": ("float", 0.99), "chunk": ("int", 2500),
    },
    "gap": {
        "payoff": ("str", "call"), "strike": ("float", 100.0),
        "sigma": ("float", 0.2), "horizon": ("float", 1.0),
        "s0": ("float", 100.0), "lower": ("float", -math.inf),
        "upper": ("float", 0.5), "nx": ("int", 400),
        "paths": ("int", 10_000), "steps": ("int", 2000),
        "gap_min": ("float", 0.0), "bs_frac_neg_min": ("float", 0.0),
        "chunk": ("int", 2500),
    },
}


@dataclass
class RunConfig:
    experiment: str
    params: dict
    seed: int
    workers: int
    out: str

    def echo(self) -> dict:
        """Computational parameters recorded in artifacts (execution knobs
        like workers and the output directory are excluded so artifacts stay
        byte-identical across them)."""
        return {"experiment": self.experiment, "seed": self.seed, **self.params}


def load_config(path: str | None, overrides) -> RunConfig:
    raw = {}
    if path:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
            key, val = stripped.split("=", 1)
            raw[key.strip()] = val.strip()
    for item in overrides or ():
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"override must look like --key=value, got {item!r}")
        key, val = item[2:].split("=", 1)
        raw[key.strip()] = val.strip()
    experiment = raw.pop("experiment", None)
    if experiment is None:
        raise ConfigError("missing required key 'experiment'", key="experiment")
    if experiment not in _SCHEMAS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {sorted(_SCHEMAS)}",
            key="experiment")
    schema = {**_SCHEMAS[experiment], **_COMMON}
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for experiment {experiment!r}",
                              key=key)
        kind, _ = schema[key]
        try:
            params[key] = _parse_value(kind, value)
        except ConfigError as err:
            raise ConfigError(f"key {key!r}: {err}", key=key) from None
    for key, (kind, default) in schema.items():
        if key not in params:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {key!r}", key=key)
            params[key] = default
    seed = params.pop("seed")
    workers = params.pop("workers")
    out = params.pop("out")
    if not out:
        root = os.environ.get("SMALLTIME_OUT", "runs")
        out = str(Path(root) / experiment)
    return RunConfig(experiment=experiment, params=params, seed=seed,
                     workers=workers, out=out)


def _band(p) -> GammaBand:
    return GammaBand(p["lower"], p["upper"])


def _payoff(p):
    if p["payoff"] == "call":
        return call(p["strike"])
    if p["payoff"] == "put":
        return put(p["strike"])
    raise ConfigError(f"unknown payoff {p['payoff']!r}", key="payoff")


def _run_moment(cfg: RunConfig):
    p = cfg.params
    grid = uniform_grid(p["horizon"], p["steps"])
    spec = BundleSpec(p["d"], grid, p["paths"], cfg.seed, chunk_size=p["chunk"])
    b = catalog_integrand(p["integrand"], p["d"])
    rep = moment_dominance(spec, b, p["lam"], p["horizon"], workers=cfg.workers)
    z = (rep.mc_mean - rep.closed_form) / rep.std_err if rep.std_err > 0 else 0.0
    results = {"mc_mean": rep.mc_mean, "std_err": rep.std_err, "z": z,
               "dominance_margin": rep.dominance_margin, "n_paths": rep.n_paths}
    references = {"closed_form": rep.closed_form}
    checks = {"mc_within_tolerance": {"pass": abs(z) <= p["max_sigmas"],
                                      "z": z, "limit": p["max_sigmas"]}}
    csvs = {"moment.csv": (["d", "lam", "horizon", "mc_mean", "std_err",
                            "closed_form", "dominance_margin"],
                           [[p["d"], p["lam"], p["horizon"], rep.mc_mean,
                             rep.std_err, rep.closed_form, rep.dominance_margin]])}
    return results, references, checks, csvs


def _run_tail(cfg: RunConfig):
    p = cfg.params
    grid = uniform_grid(p["horizon"], p["steps"])
    spec = BundleSpec(p["d"], grid, p["paths"], cfg.seed, chunk_size=p["chunk"])
    b = catalog_integrand(p["integrand"], p["d"])
    rep = tail_bound_check(spec, b, p["horizon"], p["alphas"], rule=p["rule"],
                           eta=p["eta"], workers=cfg.workers)
    rows = [[r.alpha, r.lam, r.bound, r.empirical, r.std_err, r.violation]
            for r in rep.rows]
    results = {"rows": [{"alpha": r.alpha, "lam": r.lam, "bound": r.bound,
                         "empirical": r.empirical, "std_err": r.std_err,
                         "violation": r.violation} for r in rep.rows],
               "n_paths": rep.n_paths}
    checks = {"no_exceedance_above_bound": {"pass": not rep.any_violation}}
    csvs = {"tail_bound.csv": (["alpha", "lam", "bound", "empirical",
                                "std_err", "violation"], rows)}
    return results, {}, checks, csvs


def _run_lil_sup(cfg: RunConfig):
    p = cfg.params
    grid = geometric_grid(p["t0"], p["theta"], p["levels"])
    bundle = sample_bundle(p["d"], grid, p["paths"], cfg.seed)
    b = catalog_integrand(p["integrand"], p["d"])
    trace = integrate_double(bundle, b)
    est = ratio_sup(trace, kind=p["kind"], absolute=p["absolute"])
    envelope = (1.0 + p["eta"]) ** 2 / p["theta"]
    viol = float(np.mean(est.per_path_sup > envelope))
    results = {"summary": est.summary, "violation_rate": viol}
    references = {"envelope": envelope}
    enveloped = (b.bound is not None and b.bound <= 1.0 + 1e-12
                 and p["kind"] == "h" and p["absolute"])
    checks = {}
    if enveloped:
        checks["envelope_violation_rate"] = {
            "pass": viol < p["violation_limit"],
            "violation_rate": viol, "limit": p["violation_limit"]}
    csvs = {"lil_sup.csv": (["path", "sup"],
                            [[i, float(v)] for i, v in enumerate(est.per_path_sup)])}
    return results, references, checks, csvs


def _run_ergodic(cfg: RunConfig):
    p = cfg.params
    bundle = sample_bundle(p["d"], ergodic_grid(p["levels"]), p["paths"], cfg.seed)
    beta = SymMatrix(p["beta"] * np.eye(p["d"]))
    rep = ergodic_liminf(bundle, beta, p["delta"])
    err = abs(rep.final_freq - rep.reference)
    results = {"final_freq": rep.final_freq, "freq_error": err,
               "min_quantiles": {"q50": float(np.median(rep.per_path_min)),
                                 "q99": float(np.quantile(rep.per_path_min, 0.99))}}
    references = {"limit_probability": rep.reference}
    checks = {"frequency_matches_limit": {"pass": err <= p["tol"],
                                          "error": err, "tol": p["tol"]}}
    csvs = {
        "ergodic_paths.csv": (["path", "min_level_value"],
                              [[i, float(v)] for i, v in enumerate(rep.per_path_min)]),
        "ergodic_freq.csv": (["n", "avg_freq"],
                             [[j + 1, float(v)] for j, v in enumerate(rep.freq_by_n)]),
    }
    return results, references, checks, csvs


def _run_example36(cfg: RunConfig):
    p = cfg.params
    grid = geometric_grid(p["t0"], p["theta"], p["levels"])
    spec = BundleSpec(1, grid, p["paths"], cfg.seed, chunk_size=p["chunk"])
    rep = example36_diag(spec, refinements=p["refinements"])
    med = rep.proxy_summary["median"]
    results = {"full_summary": rep.full.summary, "proxy_summary": rep.proxy_summary,
               "consistency_median": rep.consistency_median, "t_min": rep.t_min}
    checks = {
        "sup_consistency": {"pass": rep.consistency_median <= p["consistency_max"],
                            "median": rep.consistency_median,
                            "limit": p["consistency_max"]},
        "proxy_median_golden": {"pass": p["golden_lo"] <= med <= p["golden_hi"],
                                "median": med,
                                "lo": p["golden_lo"], "hi": p["golden_hi"]},
    }
    rows = [[i, float(a), float(b_)] for i, (a, b_) in
            enumerate(zip(rep.full.per_path_sup, rep.proxy_sup))]
    csvs = {"example36.csv": (["path", "full_sup", "proxy_sup"], rows)}
    return results, {}, checks, csvs


def _run_prop39(cfg: RunConfig):
    p = cfg.params
    grid = geometric_grid(p["t0"], p["theta"], p["levels"])
    bundle = sample_bundle(1, grid, p["paths"], cfg.seed)
    a = VectorSpec.constant([1.0])
    m = catalog_integrand("identity", 1)
    dtr = drift_integral(bundle, a, m, eps=p["eps"])
    stat = np.abs(dtr.scaled)
    t = dtr.times
    w = p["window"]
    meds = []
    lo = 0
    while lo + w <= t.size:
        meds.append((float(t[lo + w - 1]), float(np.median(stat[:, lo:lo + w].max(axis=1)))))
        lo += w
    first_med = meds[0][1]   # smallest-time window
    last_med = meds[-1][1]   # largest-time window
    results = {"window_medians": [{"t_hi": a_, "median": b_} for a_, b_ in meds]}
    checks = {"scaled_statistic_shrinks": {
        "pass": first_med < p["shrink"] * last_med,
        "smallest_window_median": first_med, "largest_window_median": last_med,
        "shrink": p["shrink"]}}
    csvs = {"prop39.csv": (["t_hi", "median"], [[a_, b_] for a_, b_ in meds])}
    return results, {}, checks, csvs


def _run_dpe_price(cfg: RunConfig):
    p = cfg.params
    params = MarketParams(sigma=p["sigma"], horizon=p["horizon"])
    band = _band(p)
    payoff = _payoff(p)
    grid = PdeGrid.around_spot(p["s0"], params, nx=p["nx"])
    sol = solve_dpe(payoff, band, params, grid)
    v0 = float(greeks(sol, 0.0, p["s0"])[0])
    bs0 = float(bs_price(payoff, p["s0"], 0.0, params))
    results = {"price": v0, "gap": v0 - bs0, "breach_count": sol.breach_count,
               "residual_max": sol.residual_max}
    references = {"bs_price": bs0}
    checks = {"dominates_bs": {"pass": v0 >= bs0 - 1e-6 * max(1.0, bs0)}}
    if not (band.has_lower or band.has_upper):
        rel = abs(v0 - bs0) / bs0
        checks["matches_bs"] = {"pass": rel < p["bs_tol"], "rel_error": rel,
                                "tol": p["bs_tol"]}
    nt = sol.t_nodes.size - 1
    stride = max(1, nt // 20)
    rows = []
    s = sol.s_nodes
    for mi in range(0, nt + 1, stride):
        for xi in range(sol.x_nodes.size):
            rows.append([float(sol.t_nodes[mi]), float(s[xi]), float(sol.v[mi, xi]),
                         float(sol.delta[mi, xi]), float(sol.cash_gamma[mi, xi]),
                         int(sol.active[mi, xi])])
    csvs = {"surface.csv": (["t", "s", "v", "v_s", "s2_v_ss", "active_constraint"], rows)}
    return results, references, checks, csvs


def _run_bs_price(cfg: RunConfig):
    p = cfg.params
    params = MarketParams(sigma=p["sigma"], horizon=p["horizon"])
    price = float(bs_price(_payoff(p), p["s"], p["t"], params))
    return {"price": price}, {}, {}, {}


def _run_hedge(cfg: RunConfig):
    p = cfg.params
    params = MarketParams(sigma=p["sigma"], horizon=p["horizon"])
    band = _band(p)
    payoff = _payoff(p)
    grid = PdeGrid.around_spot(p["s0"], params, nx=p["nx"])
    sol = solve_dpe(payoff, band, params, grid)
    v0 = float(greeks(sol, 0.0, p["s0"])[0])
    bs0 = float(bs_price(payoff, p["s0"], 0.0, params))
    x0 = (v0 if p["funding"] == "dpe" else bs0) * (1.0 + p["cushion"])
    strategy = StrategySpec.from_dpe(sol)
    spec = BundleSpec(1, uniform_grid(p["horizon"], p["steps"]), p["paths"],
                      cfg.seed, chunk_size=p["chunk"])
    rep = simulate_hedge(spec, p["s0"], x0, strategy, payoff, band, params,
                         workers=cfg.workers)
    results = {"x0": rep.x0, "y0": rep.y0, "quantiles": rep.quantiles,
               "clamp_events": rep.clamp_events, "clamp_rate": rep.clamp_rate,
               "alpha_max": rep.alpha_max,
               "frac_nonnegative": rep.frac_nonnegative}
    references = {"constrained_price": v0, "bs_price": bs0}
    checks = {}
    if p["funding"] == "dpe":
        checks["super_replication"] = {
            "pass": rep.frac_nonnegative >= p["target_nonneg"],
            "frac_nonnegative": rep.frac_nonnegative,
            "target": p["target_nonneg"]}
    rows = [[i, float(s_), float(x_), float(sf)] for i, (s_, x_, sf) in
            enumerate(zip(rep.s_terminal, rep.x_terminal, rep.shortfall))]
    csvs = {"shortfall.csv": (["path", "S_T", "X_T", "shortfall"], rows)}
    return results, references, checks, csvs


def _run_gap(cfg: RunConfig):
    p = cfg.params
    params = MarketParams(sigma=p["sigma"], horizon=p["horizon"])
    band = _band(p)
    payoff = _payoff(p)
    grid = PdeGrid.around_spot(p["s0"], params, nx=p["nx"])
    spec = BundleSpec(1, uniform_grid(p["horizon"], p["steps"]), p["paths"],
                      cfg.seed, chunk_size=p["chunk"])
    rep = replication_gap(payoff, band, params, p["s0"], spec, grid=grid)
    results = {"price_gap": rep.price_gap,
               "constrained_price": rep.constrained_price,
               "bs_price": rep.bs_price,
               "constrained_run": rep.run_constrained.quantiles,
               "bs_funded_run": rep.run_bs_funded.quantiles,
               "bs_funded_frac_negative": rep.run_bs_funded.frac_negative}
    checks = {"positive_gap": {"pass": rep.price_gap > p["gap_min"],
                               "gap": rep.price_gap, "min": p["gap_min"]}}
    if p["bs_frac_neg_min"] > 0.0:
        checks["bs_funding_fails"] = {
            "pass": rep.run_bs_funded.frac_negative >= p["bs_frac_neg_min"],
            "frac_negative": rep.run_bs_funded.frac_negative,
            "min": p["bs_frac_neg_min"]}
    csvs = {}
    for tag, run in (("constrained", rep.run_constrained),
                     ("bs_funded", rep.run_bs_funded)):
        rows = [[i, float(s_), float(x_), float(sf)] for i, (s_, x_, sf) in
                enumerate(zip(run.s_terminal, run.x_terminal, run.shortfall))]
        csvs[f"shortfall_{tag}.csv"] = (["path", "S_T", "X_T", "shortfall"], rows)
    return results, references_gap(rep), checks, csvs


def references_gap(rep):
    return {"constrained_price": rep.constrained_price, "bs_price": rep.bs_price}


_RUNNERS = {
    "moment": _run_moment,
    "tail-bound": _run_tail,
    "lil-sup": _run_lil_sup,
    "ergodic": _run_ergodic,
    "example36": _run_example36,
    "prop39": _run_prop39,
    "dpe-price": _run_dpe_price,
    "bs-price": _run_bs_price,
    "hedge": _run_hedge,
    "gap": _run_gap,
}


def run(cfg: RunConfig) -> int:
    """Execute the experiment, write artifacts, return the exit status."""
    runner = _RUNNERS[cfg.experiment]
    results, references, checks, csvs = runner(cfg)
    all_pass = all(c["pass"] for c in checks.values())
    summary = {
        "experiment": cfg.experiment,
        "version": __version__,
        "config_hash": config_hash(cfg.echo()),
        "params": cfg.echo(),
        "references": references,
        "results": results,
        "checks": checks,
        "pass": all_pass,
    }
    out = Path(cfg.out)
    write_json(out / "summary.json", summary)
    for name, (header, rows) in csvs.items():
        write_csv(out / name, header, rows)
    return 0 if all_pass else 1


def list_catalog() -> str:
    """Stable, sorted listing of the integrand and strategy catalogs."""
    lines = []
    for name in sorted(INTEGRAND_CATALOG):
        entry = INTEGRAND_CATALOG[name]
        lines.append(f"integrand {name} [{entry.kind}]: {entry.anchor}")
    for name in sorted(STRATEGY_CATALOG):
        lines.append(f"strategy {name}: {STRATEGY_CATALOG[name]}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smalltime",
        description="Small-time double-integral diagnostics and "
                    "gamma-constrained pricing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment and write artifacts")
    p_run.add_argument("--config", help="key = value configuration file")
    p_val = sub.add_parser("validate-config", help="validate a configuration")
    p_val.add_argument("--config", help="key = value configuration file")
    sub.add_parser("list-catalog", help="list integrand and strategy catalogs")

    args, extra = parser.parse_known_args(argv)
    if args.command == "list-catalog":
        if extra:
            print(f"config error: unexpected arguments {extra!r}", file=sys.stderr)
            return 2
        print(list_catalog())
        return 0
    try:
        cfg = load_config(getattr(args, "config", None), extra)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        print(f"experiment: {cfg.experiment}")
        for key in sorted(cfg.params):
            print(f"{key} = {cfg.params[key]}")
        print(f"seed = {cfg.seed}")
        print("config ok")
        return 0
    try:
        return run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
