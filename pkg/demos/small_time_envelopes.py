"""Small-time behavior of the double integral V(t): normalized sups.

Walks through the central diagnostic: on a geometric grid reaching tiny
times, the running sup of 2V(t) / (2t loglog(1/t)) stays under a universal
envelope for unit-norm integrands, and ordering by the top eigenvalue shows
up directly in the medians.
"""

import numpy as np

from smalltime import (catalog_integrand, closed_form_trace, geometric_grid,
                       integrate_double, ratio_sup, sample_bundle)

PATHS = 4000
GRID = geometric_grid(t0=1e-2, theta=0.5, levels=34)  # t_min ~ 5.8e-13

print(f"geometric grid: {GRID.size} levels, t in [{GRID.points[0]:.2e}, {GRID.points[-1]:.2e}]")
print(f"{PATHS} paths, two driving dimensions\n")

bundle = sample_bundle(2, GRID, PATHS, seed=2024)

# constant symmetric integrands evaluate exactly through the closed form
print("normalized sup of 2V/h, constant integrands (exact closed form):")
for name, beta in [("diag(1,-1)", np.diag([1.0, -1.0])),
                   ("diag(2,-1)", np.diag([2.0, -1.0]))]:
    est = ratio_sup(closed_form_trace(bundle, beta), kind="h")
    s = est.summary
    print(f"  {name:11s} median {s['median']:.3f}   q99 {s['q99']:.3f}")
print("the larger top eigenvalue lifts the whole distribution.\n")

# bounded integrands, discrete integration, absolute sups vs the envelope
envelope = (1.0 + 0.3) ** 2 / 0.5
print(f"|2V|/h sups for unit-bound integrands vs envelope {envelope:.2f}:")
for name in ("identity", "rotation", "tanh_w"):
    trace = integrate_double(bundle, catalog_integrand(name, 2))
    est = ratio_sup(trace, kind="h", absolute=True)
    viol = float(np.mean(est.per_path_sup > envelope))
    print(f"  {name:11s} q99 {est.summary['q99']:.3f}   exceedance rate {viol:.4f}")
print("\nno integrand with |b| <= 1 escapes the envelope at desk scale;")
print("convergence of the medians to the top eigenvalue itself is a loglog")
print("effect and is not observable at reachable times.")
