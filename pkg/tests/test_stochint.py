import math

import numpy as np
import pytest

from smalltime.matcore import DomainError, SymMatrix
from smalltime.paths import (BrownianBundle, TimeGrid, geometric_grid,
                             refine_bisect, sample_bundle, uniform_grid)
from smalltime.stochint import (INTEGRAND_CATALOG, IntegrandSpec, VectorSpec,
                                catalog_integrand, closed_form_constant,
                                closed_form_trace, drift_integral,
                                integrate_double, integrate_double_martingale,
                                unit_bound_names)


def _hand_bundle():
    """Single path W = (0, 1, 0) on times (0, 0.5, 1)."""
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]), kind="uniform")
    return BrownianBundle(dim=1, grid=grid, paths=np.array([[[0.0, 1.0, 0.0]]]),
                          seed=0)


def test_zero_integrand_gives_zero():
    b = sample_bundle(2, uniform_grid(1.0, 16), 5, seed=1)
    tr = integrate_double(b, catalog_integrand("zero", 2))
    assert np.all(tr.outer == 0.0) and np.all(tr.inner == 0.0)
    assert np.all(tr.qv_inner == 0.0) and np.all(tr.qv_outer == 0.0)


def test_hand_computed_two_step_path():
    tr = integrate_double(_hand_bundle(), IntegrandSpec.constant([[1.0]]))
    assert np.allclose(tr.inner[0, :, 0], [0.0, 1.0, 0.0])
    assert np.allclose(tr.outer[0], [0.0, 0.0, -1.0])
    # bracket bookkeeping: qv_inner = t, qv_outer = sum |Y|^2 dt
    assert np.allclose(tr.qv_inner[0, :, 0], [0.0, 0.5, 1.0])
    assert np.allclose(tr.qv_outer[0], [0.0, 0.0, 0.5])


def test_traces_start_at_zero():
    b = sample_bundle(1, uniform_grid(1.0, 8), 3, seed=2)
    tr = integrate_double(b, IntegrandSpec.constant([[0.7]]))
    assert np.all(tr.outer[:, 0] == 0.0) and np.all(tr.inner[:, 0] == 0.0)
    assert np.all(np.diff(tr.qv_outer, axis=1) >= 0.0)
    assert np.all(np.diff(tr.qv_inner[:, :, 0], axis=1) >= 0.0)


# ---------------------------------------------------------------- closed form

def test_closed_form_substitution():
    grid = TimeGrid(np.array([0.5]))
    w = np.array([[[1.0], [-1.0]]])
    b = BrownianBundle(dim=2, grid=grid, paths=w, seed=0)
    v = closed_form_constant(b, np.diag([1.0, 2.0]))
    assert v[0, 0] == pytest.approx((1.0 + 2.0 - 1.5) / 2.0)


def test_closed_form_zero_matrix():
    b = sample_bundle(2, uniform_grid(1.0, 4), 3, seed=3)
    assert np.all(closed_form_constant(b, np.zeros((2, 2))) == 0.0)


def test_closed_form_scalar_case():
    # one-dimensional constant integrand: V(t) = (W(t)^2 - t) / 2
    b = sample_bundle(1, uniform_grid(1.0, 4), 6, seed=4)
    v = closed_form_constant(b, [[1.0]])
    w = b.paths[:, 0, :]
    assert np.allclose(v, 0.5 * (w * w - b.grid.points[None, :]))


def test_closed_form_requires_symmetry():
    b = sample_bundle(2, uniform_grid(1.0, 2), 2, seed=5)
    with pytest.raises(ValueError):
        closed_form_constant(b, [[0.0, 1.0], [0.0, 0.0]])


def test_closed_form_trace_matches_closed_form():
    b = sample_bundle(2, geometric_grid(1e-3, 0.5, 12), 4, seed=6)
    beta = SymMatrix(np.array([[1.0, 0.5], [0.5, -0.5]]))
    tr = closed_form_trace(b, beta)
    assert np.allclose(tr.outer, closed_form_constant(b, beta))
    assert np.allclose(tr.inner, np.einsum("ij,pjn->pni", beta.entries, b.paths))


# --------------------------------------------------------------- convergence

def test_discrete_vs_closed_form_rms_halves_on_refinement():
    # RMS error of the left-point sums shrinks like sqrt(dt): refining the
    # same paths by 4x in steps should halve it, twice over
    beta = np.array([[2.0, 1.0], [1.0, -1.0]])
    spec = IntegrandSpec.constant(beta)
    b0 = sample_bundle(2, uniform_grid(1.0, 64), 1000, seed=99)
    b1 = refine_bisect(refine_bisect(b0))
    b2 = refine_bisect(refine_bisect(b1))
    rms = []
    for b in (b0, b1, b2):
        tr = integrate_double(b, spec)
        err = tr.final_outer() - closed_form_constant(b, beta)[:, -1]
        rms.append(math.sqrt(float(np.mean(err * err))))
    for coarse, fine in zip(rms, rms[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.25)


def test_rms_magnitude_matches_theory():
    # Var(V_disc - V) = Tr[beta^2] T^2 / (2 n) for constant symmetric beta
    beta = np.array([[2.0, 1.0], [1.0, -1.0]])
    n = 256
    b = sample_bundle(2, uniform_grid(1.0, n), 4000, seed=41)
    tr = integrate_double(b, IntegrandSpec.constant(beta))
    err = tr.final_outer() - closed_form_constant(b, beta)[:, -1]
    predicted = math.sqrt(np.trace(beta @ beta) / (2.0 * n))
    assert math.sqrt(np.mean(err ** 2)) == pytest.approx(predicted, rel=0.15)


# ----------------------------------------------------------------- invariants

def test_linearity_of_discrete_sums():
    b = sample_bundle(2, uniform_grid(1.0, 32), 50, seed=7)
    m1 = np.array([[1.0, 0.2], [0.4, -0.3]])
    m2 = np.array([[0.5, -1.0], [0.1, 0.8]])
    t1 = integrate_double(b, IntegrandSpec.constant(m1))
    t2 = integrate_double(b, IntegrandSpec.constant(m2))
    t12 = integrate_double(b, IntegrandSpec.constant(m1 + m2))
    assert np.allclose(t12.outer, t1.outer + t2.outer, atol=1e-12)


def test_sign_flip_antisymmetry_exact():
    b = sample_bundle(2, uniform_grid(1.0, 32), 20, seed=8)
    m = np.array([[1.0, 0.2], [0.4, -0.3]])
    plus = integrate_double(b, IntegrandSpec.constant(m))
    minus = integrate_double(b, IntegrandSpec.constant(-m))
    # IEEE negation is exact, so the flip holds bit for bit
    assert np.array_equal(minus.outer, -plus.outer)
    assert np.array_equal(minus.inner, -plus.inner)


def test_ito_isometry_at_desk_scale():
    m = np.array([[0.6, 0.3], [0.1, -0.5]])
    b = sample_bundle(2, uniform_grid(1.0, 100), 20_000, seed=9)
    tr = integrate_double(b, IntegrandSpec.constant(m))
    v_t = tr.final_outer()
    var = float(np.var(v_t, ddof=1))
    qv_mean = float(np.mean(tr.qv_outer[:, -1]))
    se = var * math.sqrt(2.0 / v_t.size) + qv_mean * math.sqrt(2.0 / v_t.size)
    assert abs(var - qv_mean) < 5.0 * se


# ------------------------------------------------------- martingale variant

def test_martingale_constant_identity_m():
    b = sample_bundle(1, uniform_grid(1.0, 32), 10, seed=10)
    spec_b = IntegrandSpec.constant([[1.0]])
    dec = integrate_double_martingale(b, spec_b, IntegrandSpec.constant([[1.0]]))
    assert np.array_equal(dec.r1, np.zeros_like(dec.r1))
    assert np.array_equal(dec.r2, np.zeros_like(dec.r2))
    plain = integrate_double(b, spec_b)
    assert np.array_equal(dec.x, plain.outer)


def test_martingale_scaling_two_i():
    b = sample_bundle(1, uniform_grid(1.0, 32), 10, seed=11)
    spec_b = IntegrandSpec.constant([[1.0]])
    dec = integrate_double_martingale(b, spec_b, IntegrandSpec.constant([[2.0]]))
    plain = integrate_double(b, spec_b)
    # powers of two keep the bilinear scaling exact in floating point
    assert np.array_equal(dec.x, 4.0 * plain.outer)


def test_martingale_decomposition_reconstructs():
    b = sample_bundle(2, geometric_grid(1e-2, 0.5, 20), 200, seed=12)
    spec_b = catalog_integrand("tanh_w", 2)
    spec_m = catalog_integrand("linear_time", 2)
    dec = integrate_double_martingale(b, spec_b, spec_m)
    assert dec.recon_error < 1e-10


def test_martingale_residuals_vanish_at_small_times():
    # R_i(t)/t -> 0: compare windowed maxima of |R_i|/t at the small end
    # of a deep geometric grid against the large end
    b = sample_bundle(1, geometric_grid(1e-2, 0.5, 40), 2000, seed=13)
    dec = integrate_double_martingale(b, IntegrandSpec.constant([[1.0]]),
                                      catalog_integrand("linear_time", 1))
    t = dec.times
    for resid in (dec.r1, dec.r2):
        stat = np.abs(resid) / t[None, :]
        low = np.median(stat[:, :10].max(axis=1))
        high = np.median(stat[:, -10:].max(axis=1))
        assert low < 0.5 * high


# -------------------------------------------------------------- drift variant

def test_drift_integral_zero():
    b = sample_bundle(1, uniform_grid(1.0, 16), 4, seed=14)
    tr = drift_integral(b, VectorSpec.constant([0.0]),
                        IntegrandSpec.constant([[1.0]]), eps=0.5)
    assert np.all(tr.x == 0.0) and np.all(tr.scaled == 0.0)


def test_drift_integral_variance_t_cubed_over_three():
    # X(t) = int r dW has variance t^3/3
    b = sample_bundle(1, uniform_grid(1.0, 400), 100_000, seed=15)
    tr = drift_integral(b, VectorSpec.constant([1.0]),
                        IntegrandSpec.constant([[1.0]]), eps=0.5)
    var = float(np.var(tr.x[:, -1], ddof=1))
    se = (1.0 / 3.0) * math.sqrt(2.0 / tr.x.shape[0])
    assert abs(var - 1.0 / 3.0) < 5.0 * se


def test_drift_integral_scaled_statistic_shrinks():
    b = sample_bundle(1, geometric_grid(1e-4, 0.5, 60), 2000, seed=16)
    tr = drift_integral(b, VectorSpec.constant([1.0]),
                        IntegrandSpec.constant([[1.0]]), eps=0.5)
    stat = np.abs(tr.scaled)
    low = np.median(stat[:, :10].max(axis=1))
    high = np.median(stat[:, -10:].max(axis=1))
    assert low < 0.5 * high


def test_drift_integral_eps_validation():
    b = sample_bundle(1, uniform_grid(1.0, 4), 2, seed=17)
    with pytest.raises(ValueError):
        drift_integral(b, VectorSpec.constant([1.0]),
                       IntegrandSpec.constant([[1.0]]), eps=1.5)


# -------------------------------------------------------------------- catalog

def test_example36_integrand_domain():
    spec = catalog_integrand("example36", 1)
    # logloglog collapses to 1 at t = e^{-e^e}
    t_collapse = math.exp(-math.exp(math.e))
    assert spec.eval(t_collapse, None)[0, 0] == pytest.approx(1.0, rel=1e-12)
    assert spec.eval(0.0, None)[0, 0] == 0.0
    with pytest.raises(DomainError):
        spec.eval(math.exp(-math.e), None)


def test_time_function_domain_error_propagates():
    grid = geometric_grid(0.06, 0.5, 3)  # crosses above e^-e? no: check eval at top
    b = sample_bundle(1, geometric_grid(0.06, 0.5, 3), 2, seed=18)
    # 0.06 < e^-e ~ 0.0659, fine; a grid reaching beyond the window fails
    integrate_double(b, catalog_integrand("example36", 1))
    bad = sample_bundle(1, geometric_grid(0.5, 0.5, 3), 2, seed=18)
    with pytest.raises(DomainError):
        integrate_double(bad, catalog_integrand("example36", 1))


def test_path_functionals_are_bounded():
    b = sample_bundle(2, uniform_grid(1.0, 64), 100, seed=19)
    for name in ("tanh_w", "clamp_w"):
        spec = catalog_integrand(name, 2)
        assert spec.bound <= 1.0
        tr = integrate_double(b, spec)
        assert np.all(np.isfinite(tr.outer))


def test_unit_bound_catalog_contents():
    names = unit_bound_names(2)
    assert "identity" in names and "zero" in names and "sign_flip" in names
    assert "rotation" in names and "tanh_w" in names and "clamp_w" in names
    assert "example36" not in names and "linear_time" not in names
    assert "rotation" not in unit_bound_names(1)


def test_catalog_unknown_name():
    with pytest.raises(KeyError):
        catalog_integrand("not_there", 1)


def test_trace_csv_export(tmp_path):
    b = sample_bundle(2, uniform_grid(1.0, 2), 2, seed=20)
    tr = integrate_double(b, catalog_integrand("identity", 2))
    out = tmp_path / "trace.csv"
    tr.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,time,V,Y_1,Y_2,qv"
    assert len(lines) == 1 + 2 * 3
