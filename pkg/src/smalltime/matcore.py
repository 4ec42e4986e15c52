"""Symmetric-matrix helpers, the small-time rate normalizer, and the scalar
pieces of the gamma-constrained pricing operator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INV_E = math.exp(-1.0)


class DomainError(ValueError):
    """An argument lies outside a function's stated domain."""


def lil_normalizer(t):
    """Small-time normalizer 2*t*log(log(1/t)).

    Valid for 0 < t < 1/e, where the inner logarithm is positive.  The
    evaluation goes through log(-log(t)), so times down to 1e-300 stay
    finite.  Accepts scalars or arrays.
    """
    arr = np.asarray(t, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= INV_E)):
        raise DomainError("lil_normalizer requires 0 < t < 1/e")
    out = 2.0 * arr * np.log(-np.log(arr))
    return float(out) if np.ndim(t) == 0 else out


@dataclass
class SymMatrix:
    """Symmetric d x d matrix; entries are symmetrized on construction."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 1:
            raise ValueError("SymMatrix requires a square d x d array with d >= 1")
        if not np.all(np.isfinite(e)):
            raise ValueError("SymMatrix entries must be finite")
        self.entries = 0.5 * (e + e.T)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries))


def _as_symmetric(m, tol=1e-12):
    if isinstance(m, SymMatrix):
        return m.entries
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def jacobi_eigensystem(m, tol=1e-13, max_sweeps=100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, U) with the eigenvalues sorted descending and
    U @ m @ U.T diagonal (rows of U are eigenvectors).  Dimensions stay
    small here (d <= 8), so plain rotation sweeps are plenty; convergence
    is declared when the off-diagonal Frobenius mass drops below `tol`
    times the input Frobenius norm.
    """
    m0 = _as_symmetric(m)
    a = m0.copy()
    d = a.shape[0]
    rot = np.eye(d)
    scale = math.sqrt(float((a * a).sum()))
    if scale == 0.0:
        return np.zeros(d), rot
    thresh = tol * scale

    def off_mass(mat):
        # measured directly; total minus diagonal cancels catastrophically
        off = mat.copy()
        np.fill_diagonal(off, 0.0)
        return math.sqrt(float((off * off).sum()))

    for _ in range(max_sweeps):
        if off_mass(a) < thresh:
            # accumulated rotation roundoff can leave rot @ m0 @ rot.T less
            # diagonal than the working copy; re-sync and polish if needed
            a = rot @ m0 @ rot.T
            a = 0.5 * (a + a.T)
            if off_mass(a) < thresh:
                break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= thresh / (d * d):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                t = sgn / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                rp, rq = rot[p, :].copy(), rot[q, :].copy()
                rot[p, :] = c * rp - s * rq
                rot[q, :] = s * rp + c * rq
    else:
        raise RuntimeError("Jacobi sweep did not converge")
    evals = np.diag(a).copy()
    order = np.argsort(-evals)
    return evals[order], rot[order]


def eigen_extremes(m):
    """Smallest and largest eigenvalue of a symmetric matrix, plus the
    orthogonal U with U @ m @ U.T diagonal.

    The extremes equal min/max of the quadratic form y.T @ m @ y over unit
    vectors y.
    """
    evals, u = jacobi_eigensystem(m)
    return float(evals[-1]), float(evals[0]), u


def operator_norm(m) -> float:
    """Largest singular value, sup |m y| over unit y.

    For symmetric m this equals max(|lambda_min|, |lambda_max|); the general
    case goes through the Gram matrix m.T @ m.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    gram = a.T @ a
    evals, _ = jacobi_eigensystem(0.5 * (gram + gram.T))
    return math.sqrt(max(float(evals[0]), 0.0))


@dataclass
class GammaBand:
    """Band [lower, upper] constraining the cash gamma S^2 * gamma.

    Either bound may be disabled with the explicit sentinel -inf / +inf;
    never substitute a large finite float.
    """

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        lo, up = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(up):
            raise ValueError("GammaBand bounds must not be NaN")
        if not lo < up:
            raise ValueError("GammaBand requires lower < upper")
        self.lower, self.upper = lo, up

    @property
    def has_lower(self) -> bool:
        return math.isfinite(self.lower)

    @property
    def has_upper(self) -> bool:
        return math.isfinite(self.upper)

    @classmethod
    def unbounded(cls) -> "GammaBand":
        return cls(-math.inf, math.inf)

    @classmethod
    def upper_only(cls, upper: float) -> "GammaBand":
        return cls(-math.inf, upper)

    @classmethod
    def lower_only(cls, lower: float) -> "GammaBand":
        return cls(lower, math.inf)

    def clamp(self, x):
        return np.clip(x, self.lower, self.upper)


def support_function(u: float, band: GammaBand) -> float:
    """sup of u*c over c in the band: u*upper for u >= 0, u*lower for u < 0.

    u = 0 returns 0 regardless of the band; otherwise the needed bound must
    be finite.
    """
    if u == 0.0:
        return 0.0
    if u > 0.0:
        if not band.has_upper:
            raise ValueError("support_function needs a finite upper bound for u > 0")
        return u * band.upper
    if not band.has_lower:
        raise ValueError("support_function needs a finite lower bound for u < 0")
    return u * band.lower


def dpe_operator_f(p: float, a: float, sigma: float, band: GammaBand) -> float:
    """min(-p - sigma^2/2 * a, upper - a, a - lower); disabled bounds drop out."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    val = -p - 0.5 * sigma * sigma * a
    if band.has_upper:
        val = min(val, band.upper - a)
    if band.has_lower:
        val = min(val, a - band.lower)
    return val


def dpe_operator_fhat(p: float, a: float, sigma: float, band: GammaBand) -> float:
    """sup over beta >= 0 of dpe_operator_f(p, a + beta, ...), in closed form.

    The first two branches of F decrease in a while the third increases, so
    the envelope over a + beta is either F itself (when a is already past
    the crossing point of the decreasing and increasing parts) or the value
    at that crossing.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if not band.has_lower:
        # without a lower bound the third branch never binds and F decreases
        # in a, so beta = 0 is optimal
        return dpe_operator_f(p, a, sigma, band)
    b1 = (band.lower - p) / (1.0 + 0.5 * sigma * sigma)
    b2 = 0.5 * (band.upper + band.lower) if band.has_upper else math.inf
    bstar = min(b1, b2)
    if a >= bstar:
        return dpe_operator_f(p, a, sigma, band)
    return bstar - band.lower
