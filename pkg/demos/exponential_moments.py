"""Exponential moments of V(T) and the tail bound they imply.

The identity integrand admits the closed form
E[exp(2 lam V)] = exp(-lam d T) (1 - 2 lam T)^(-d/2); every integrand with
operator norm at most one sits below it, and Doob's inequality turns the
moment into a sup-tail bound that the simulations respect.
"""

from smalltime import (BundleSpec, catalog_integrand, moment_dominance,
                       moment_identity, tail_bound_check, uniform_grid)

LAM, HORIZON, PATHS = 0.5, 0.5, 50_000
grid = uniform_grid(HORIZON, 400)

print(f"lam = {LAM}, T = {HORIZON}, 2 lam T = {2 * LAM * HORIZON} < 1")
print(f"closed form (d=1): {moment_identity(LAM, HORIZON, 1):.6f}\n")

print("Monte Carlo means of exp(2 lam V(T)) vs the identity closed form (d=2):")
print(f"{'integrand':>16s} {'mc mean':>10s} {'margin (SE)':>12s}")
for name in ("zero", "scaled_identity", "rotation", "tanh_w", "identity"):
    spec = BundleSpec(2, grid, PATHS, seed=7, chunk_size=10_000)
    rep = moment_dominance(spec, catalog_integrand(name, 2), LAM, HORIZON)
    print(f"{name:>16s} {rep.mc_mean:10.5f} {rep.dominance_margin:+12.2f}")
print("positive margins: the identity integrand is the extreme case.\n")

print("tail of sup 2V on [0, 0.1] for the scalar identity integrand:")
spec = BundleSpec(1, uniform_grid(0.1, 400), PATHS, seed=8, chunk_size=10_000)
rep = tail_bound_check(spec, catalog_integrand("identity", 1), 0.1,
                       [0.5, 1.0, 2.0], rule="optimized")
print(f"{'alpha':>6s} {'empirical':>10s} {'bound':>10s} {'lam*':>8s}")
for row in rep.rows:
    print(f"{row.alpha:6.1f} {row.empirical:10.5f} {row.bound:10.5f} {row.lam:8.3f}")
print("\nthe optimized-lambda analytic bound dominates every empirical tail.")
