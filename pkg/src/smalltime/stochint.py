"""Discrete Ito integration of double stochastic integrals.

Everything is left-point (Ito) Riemann summation on the bundle's grid:
the inner integral advances as Y += b(t_k) dW_k, the outer one as
V += Y_k . dW_k.  Quadratic variation is accumulated from the integrand
(predictable bracket), not from realized squared increments.  The outer
accumulators use compensated summation because small-time diagnostics
divide the results by times as small as 1e-30.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matcore import DomainError, SymMatrix, operator_norm
from .paths import BrownianBundle

EXP_MINUS_E = math.exp(-math.e)


def _lll_inverse(t: float) -> float:
    """1 / logloglog(1/t) on (0, e^-e), extended by its limit 0 at t = 0."""
    if t == 0.0:
        return 0.0
    l3 = math.log(math.log(-math.log(t)))
    return 1.0 / l3


@dataclass
class IntegrandSpec:
    """Declarative description of the matrix process b(t).

    Three variants: a constant matrix, a deterministic function of time
    from the catalog, or a progressively measurable functional of the path
    evaluated as b(t) = f(t, W(t)).  Path functionals only ever see the
    current path value, so lookahead is impossible by construction.
    """

    kind: str
    dim: int
    name: str = "constant"
    matrix: np.ndarray | None = None
    time_fn: object = None
    path_fn: object = None
    bound: float | None = None
    t_max: float | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, matrix, name: str = "constant") -> "IntegrandSpec":
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("constant integrand must be a square matrix")
        return cls(kind="constant", dim=m.shape[0], name=name, matrix=m,
                   bound=operator_norm(m))

    def eval(self, t: float, w: np.ndarray):
        """Value of b at time t given current path values w of shape (P, d).

        Returns (d, d) for deterministic variants, (P, d, d) for path
        functionals.
        """
        if self.kind == "constant":
            return self.matrix
        if self.kind == "time":
            if self.t_max is not None and t >= self.t_max:
                raise DomainError(
                    f"integrand {self.name!r} evaluated at t={t!r}, outside its "
                    f"validity window t < {self.t_max!r}")
            return self.time_fn(t)
        return self.path_fn(t, w)


@dataclass
class VectorSpec:
    """Bounded vector process a(t) for the drift-integral diagnostics."""

    kind: str
    dim: int
    vector: np.ndarray | None = None
    time_fn: object = None
    bound: float | None = None
    name: str = "constant"

    @classmethod
    def constant(cls, vector) -> "VectorSpec":
        v = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(kind="constant", dim=v.size, vector=v,
                   bound=float(np.linalg.norm(v)))

    def eval(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.vector
        return self.time_fn(t)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str
    anchor: str
    build: object  # (dim, params) -> IntegrandSpec


def _build_zero(dim, params):
    return IntegrandSpec.constant(np.zeros((dim, dim)), name="zero")


def _build_identity(dim, params):
    return IntegrandSpec.constant(np.eye(dim), name="identity")


def _build_sign_flip(dim, params):
    return IntegrandSpec.constant(-np.eye(dim), name="sign_flip")


def _build_rotation(dim, params):
    if dim < 2:
        raise ValueError("rotation integrand needs dim >= 2")
    angle = float(params.get("angle", math.pi / 4.0))
    m = np.eye(dim)
    c, s = math.cos(angle), math.sin(angle)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    spec = IntegrandSpec.constant(m, name="rotation")
    spec.params = {"angle": angle}
    spec.bound = 1.0
    return spec


def _build_scaled_identity(dim, params):
    c = float(params.get("c", 0.5))
    spec = IntegrandSpec.constant(c * np.eye(dim), name="scaled_identity")
    spec.params = {"c": c}
    return spec


def _build_example36(dim, params):
    eye = np.eye(dim)

    def fn(t):
        return _lll_inverse(t) * eye

    return IntegrandSpec(kind="time", dim=dim, name="example36", time_fn=fn,
                         bound=None, t_max=EXP_MINUS_E)


def _build_linear_time(dim, params):
    rate = float(params.get("rate", 1.0))
    eye = np.eye(dim)

    def fn(t):
        return (1.0 + rate * t) * eye

    return IntegrandSpec(kind="time", dim=dim, name="linear_time", time_fn=fn,
                         bound=None, params={"rate": rate})


def _build_tanh_w(dim, params):
    scale = float(params.get("scale", 1.0))
    eye = np.eye(dim)

    def fn(t, w):
        return np.tanh(scale * w[:, 0])[:, None, None] * eye[None, :, :]

    return IntegrandSpec(kind="path", dim=dim, name="tanh_w", path_fn=fn,
                         bound=1.0, params={"scale": scale})


def _build_clamp_w(dim, params):
    lo = float(params.get("lo", -1.0))
    hi = float(params.get("hi", 1.0))
    eye = np.eye(dim)

    def fn(t, w):
        return np.clip(w[:, 0], lo, hi)[:, None, None] * eye[None, :, :]

    return IntegrandSpec(kind="path", dim=dim, name="clamp_w", path_fn=fn,
                         bound=max(abs(lo), abs(hi)), params={"lo": lo, "hi": hi})


INTEGRAND_CATALOG = {
    "zero": CatalogEntry(
        "zero", "constant",
        "vanishing integrand; the double integral is identically zero",
        _build_zero),
    "identity": CatalogEntry(
        "identity", "constant",
        "unit-matrix integrand; extreme case of the exponential-moment "
        "comparison, with chi-square closed forms",
        _build_identity),
    "sign_flip": CatalogEntry(
        "sign_flip", "constant",
        "negated unit matrix; maps liminf statements to limsup statements",
        _build_sign_flip),
    "rotation": CatalogEntry(
        "rotation", "constant",
        "orthogonal nonsymmetric matrix of unit operator norm; stresses the "
        "moment dominance beyond symmetric integrands",
        _build_rotation),
    "scaled_identity": CatalogEntry(
        "scaled_identity", "constant",
        "c times the unit matrix; exercises linear scaling of the ratio "
        "diagnostics",
        _build_scaled_identity),
    "example36": CatalogEntry(
        "example36", "time",
        "slowly varying scalar integrand 1/logloglog(1/t) with the anomalous "
        "small-time rate t loglog(1/t)/logloglog(1/t)",
        _build_example36),
    "linear_time": CatalogEntry(
        "linear_time", "time",
        "(1 + rate*t) times the unit matrix; drives the residual terms of "
        "the martingale-driven decomposition",
        _build_linear_time),
    "tanh_w": CatalogEntry(
        "tanh_w", "path",
        "smooth clamp of the first coordinate; bounded progressively "
        "measurable path functional",
        _build_tanh_w),
    "clamp_w": CatalogEntry(
        "clamp_w", "path",
        "hard clamp of the first coordinate; bounded progressively "
        "measurable path functional",
        _build_clamp_w),
}


def catalog_integrand(name: str, dim: int, **params) -> IntegrandSpec:
    try:
        entry = INTEGRAND_CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown integrand catalog entry {name!r}") from None
    spec = entry.build(dim, params)
    return spec


def unit_bound_names(dim: int) -> list:
    """Catalog entries whose declared bound is <= 1 at the given dimension."""
    out = []
    for name in sorted(INTEGRAND_CATALOG):
        if name == "rotation" and dim < 2:
            continue
        spec = catalog_integrand(name, dim)
        if spec.bound is not None and spec.bound <= 1.0 + 1e-12:
            out.append(name)
    return out


@dataclass
class DoubleIntegralTrace:
    """Per-path inner and outer integral values along the grid.

    qv_inner[j] tracks the bracket of the j-th inner component,
    sum_l b_jl^2 dt; qv_outer tracks |Y|^2 dt.
    """

    times: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    qv_inner: np.ndarray
    qv_outer: np.ndarray
    grid_meta: dict = field(default_factory=dict)

    @property
    def path_count(self) -> int:
        return self.outer.shape[0]

    @property
    def dim(self) -> int:
        return self.inner.shape[2]

    def final_outer(self) -> np.ndarray:
        return self.outer[:, -1]

    def to_csv(self, path) -> None:
        from .reports import write_csv
        d = self.dim
        header = ["path", "time", "V"] + [f"Y_{j + 1}" for j in range(d)] + ["qv"]
        rows = []
        for i in range(self.path_count):
            for k, t in enumerate(self.times):
                rows.append([i, t, self.outer[i, k]]
                            + list(self.inner[i, k]) + [self.qv_outer[i, k]])
        write_csv(path, header, rows)


def _with_origin(bundle: BrownianBundle):
    t = bundle.grid.points
    w = bundle.paths
    if t[0] == 0.0:
        return t, w, True
    t_full = np.concatenate(([0.0], t))
    w_full = np.concatenate((np.zeros(w.shape[:2] + (1,)), w), axis=2)
    return t_full, w_full, False


def _apply(mat, vec):
    """mat @ vec for mat of shape (d, d) or (P, d, d) and vec of shape (P, d)."""
    if mat.ndim == 2:
        return vec @ mat.T
    return np.einsum("pij,pj->pi", mat, vec)


def _row_sq(mat):
    return (mat * mat).sum(axis=-1)


def _kahan(acc, comp, inc):
    y = inc - comp
    t = acc + y
    comp = (t - acc) - y
    return t, comp


def integrate_double(bundle: BrownianBundle, b: IntegrandSpec) -> DoubleIntegralTrace:
    """Left-point double integral V(t) of (integral of b dW)^T dW.

    Grids that do not contain 0 get an implicit origin with W(0) = 0 and
    Y(0) = V(0) = 0; output arrays align with the bundle's grid points.
    """
    if b.dim != bundle.dim:
        raise ValueError("integrand dimension does not match the bundle")
    t_full, w_full, has_origin = _with_origin(bundle)
    n_out = bundle.grid.size
    p, d = bundle.path_count, bundle.dim
    inner = np.zeros((p, n_out, d))
    outer = np.zeros((p, n_out))
    qv_in = np.zeros((p, n_out, d))
    qv_out = np.zeros((p, n_out))

    y = np.zeros((p, d))
    v = np.zeros(p)
    v_comp = np.zeros(p)
    qi = np.zeros((p, d))
    qo = np.zeros(p)
    qo_comp = np.zeros(p)
    offset = 0 if has_origin else -1
    for k in range(t_full.size - 1):
        t_k = t_full[k]
        dt = t_full[k + 1] - t_full[k]
        dw = w_full[:, :, k + 1] - w_full[:, :, k]
        mat = b.eval(t_k, w_full[:, :, k])
        v, v_comp = _kahan(v, v_comp, np.einsum("pi,pi->p", y, dw))
        qo, qo_comp = _kahan(qo, qo_comp, (y * y).sum(axis=1) * dt)
        y = y + _apply(mat, dw)
        qi = qi + _row_sq(mat) * dt
        out = k + 1 + offset
        outer[:, out] = v
        inner[:, out] = y
        qv_in[:, out] = qi
        qv_out[:, out] = qo
    meta = {"kind": bundle.grid.kind, **bundle.grid.meta}
    return DoubleIntegralTrace(times=bundle.grid.points.copy(), inner=inner,
                               outer=outer, qv_inner=qv_in, qv_outer=qv_out,
                               grid_meta=meta)


def closed_form_constant(bundle: BrownianBundle, beta) -> np.ndarray:
    """Exact V(t) = (W(t)^T beta W(t) - Tr[beta] t) / 2 for constant symmetric beta."""
    mat = beta.entries if isinstance(beta, SymMatrix) else np.asarray(beta, dtype=float)
    mat = np.atleast_2d(mat)
    if np.abs(mat - mat.T).max() > 1e-12 * max(1.0, np.abs(mat).max()):
        raise ValueError("closed form requires a symmetric matrix")
    w = bundle.paths
    quad = np.einsum("pin,ij,pjn->pn", w, mat, w)
    return 0.5 * (quad - np.trace(mat) * bundle.grid.points[None, :])


def closed_form_trace(bundle: BrownianBundle, beta) -> DoubleIntegralTrace:
    """Trace built from the constant-integrand closed form.

    V and Y = beta W are exact at grid times; the outer bracket is still
    the discrete left-point accumulation.
    """
    mat = beta.entries if isinstance(beta, SymMatrix) else np.atleast_2d(np.asarray(beta, dtype=float))
    outer = closed_form_constant(bundle, mat)
    inner = np.einsum("ij,pjn->pni", mat, bundle.paths)
    t = bundle.grid.points
    row_sq = _row_sq(mat)
    qv_in = row_sq[None, None, :] * t[None, :, None]
    y_sq = (inner * inner).sum(axis=2)
    t_full = t if t[0] == 0.0 else np.concatenate(([0.0], t))
    dt = np.diff(t_full)
    y_prev = np.zeros_like(y_sq)
    if t[0] == 0.0:
        y_prev[:, 1:] = y_sq[:, :-1]
        qv_out = np.cumsum(y_prev * np.concatenate(([0.0], dt)), axis=1)
    else:
        y_prev[:, 1:] = y_sq[:, :-1]
        qv_out = np.cumsum(y_prev * dt[None, :], axis=1)
    meta = {"kind": bundle.grid.kind, **bundle.grid.meta}
    return DoubleIntegralTrace(times=t.copy(), inner=inner, outer=outer,
                               qv_inner=np.broadcast_to(qv_in, inner.shape).copy(),
                               qv_outer=qv_out, grid_meta=meta)


@dataclass
class MartingaleDecomposition:
    """X(t) = int (int b dM)^T dM with dM = m dW, plus its split into the
    c-driven double integral and the two residual terms.

    The three pieces sum back to X within accumulation tolerance; the
    maximum relative reconstruction error is reported.
    """

    times: np.ndarray
    x: np.ndarray
    c_piece: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    recon_error: float
    grid_meta: dict = field(default_factory=dict)


def integrate_double_martingale(bundle: BrownianBundle, b: IntegrandSpec,
                                m: IntegrandSpec) -> MartingaleDecomposition:
    """Martingale-driven double integral and its residual decomposition.

    With c(t) = m(0)^T b(t) m(0), X splits into the c-driven double
    integral plus R1 (inner integrand b (m - m(0)), outer m(0) dW) and R2
    (inner b m, outer (m - m(0)) dW).
    """
    if b.dim != bundle.dim or m.dim != bundle.dim:
        raise ValueError("integrand dimensions must match the bundle")
    t_full, w_full, has_origin = _with_origin(bundle)
    p, d = bundle.path_count, bundle.dim
    n_out = bundle.grid.size

    m0 = m.eval(0.0, np.zeros((1, d)))
    if m0.ndim == 3:
        m0 = m0[0]

    x = np.zeros((p, n_out))
    cpc = np.zeros((p, n_out))
    r1 = np.zeros((p, n_out))
    r2 = np.zeros((p, n_out))

    y_x = np.zeros((p, d))      # inner of X: int b m dW
    y_c = np.zeros((p, d))      # inner of the c piece
    y_a = np.zeros((p, d))      # inner of R1: int b (m - m0) dW
    acc = {k: (np.zeros(p), np.zeros(p)) for k in ("x", "c", "r1", "r2")}
    offset = 0 if has_origin else -1
    for k in range(t_full.size - 1):
        t_k = t_full[k]
        dw = w_full[:, :, k + 1] - w_full[:, :, k]
        bk = b.eval(t_k, w_full[:, :, k])
        mk = m.eval(t_k, w_full[:, :, k])
        dm = _apply(mk, dw)
        dm0 = _apply(m0, dw)
        ddev = dm - dm0

        acc["x"] = _kahan(*acc["x"], np.einsum("pi,pi->p", y_x, dm))
        acc["c"] = _kahan(*acc["c"], np.einsum("pi,pi->p", y_c, dw))
        acc["r1"] = _kahan(*acc["r1"], np.einsum("pi,pi->p", y_a, dm0))
        acc["r2"] = _kahan(*acc["r2"], np.einsum("pi,pi->p", y_x, ddev))

        if bk.ndim == 2:
            ck = m0.T @ bk @ m0
        else:
            ck = np.einsum("ij,pjk,kl->pil", m0.T, bk, m0)
        y_x = y_x + _apply(bk, dm)
        y_c = y_c + _apply(ck, dw)
        y_a = y_a + _apply(bk, ddev)

        out = k + 1 + offset
        x[:, out] = acc["x"][0]
        cpc[:, out] = acc["c"][0]
        r1[:, out] = acc["r1"][0]
        r2[:, out] = acc["r2"][0]

    recon = np.abs(x - (cpc + r1 + r2)) / (1.0 + np.abs(x))
    meta = {"kind": bundle.grid.kind, **bundle.grid.meta}
    return MartingaleDecomposition(times=bundle.grid.points.copy(), x=x,
                                   c_piece=cpc, r1=r1, r2=r2,
                                   recon_error=float(recon.max()),
                                   grid_meta=meta)


@dataclass
class DriftIntegralTrace:
    """X(t) = int (int a du)^T m dW plus the scaled statistic t^(-3/2+eps) X(t)."""

    times: np.ndarray
    x: np.ndarray
    scaled: np.ndarray
    eps: float


def drift_integral(bundle: BrownianBundle, a: VectorSpec, m: IntegrandSpec,
                   eps: float = 0.5) -> DriftIntegralTrace:
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if a.dim != bundle.dim or m.dim != bundle.dim:
        raise ValueError("process dimensions must match the bundle")
    t_full, w_full, has_origin = _with_origin(bundle)
    p = bundle.path_count
    n_out = bundle.grid.size
    x = np.zeros((p, n_out))
    ia = np.zeros((p, bundle.dim))
    v = np.zeros(p)
    v_comp = np.zeros(p)
    offset = 0 if has_origin else -1
    for k in range(t_full.size - 1):
        t_k = t_full[k]
        dt = t_full[k + 1] - t_full[k]
        dw = w_full[:, :, k + 1] - w_full[:, :, k]
        mk = m.eval(t_k, w_full[:, :, k])
        dm = _apply(mk, dw)
        v, v_comp = _kahan(v, v_comp, np.einsum("pi,pi->p", ia, dm))
        ia = ia + a.eval(t_k)[None, :] * dt
        x[:, k + 1 + offset] = v
    t = bundle.grid.points
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(t > 0.0, t ** (-1.5 + eps), 0.0)
    scaled = x * power[None, :]
    scaled[:, t == 0.0] = 0.0
    return DriftIntegralTrace(times=t.copy(), x=x, scaled=scaled, eps=float(eps))
