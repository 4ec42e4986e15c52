"""Time grids and reproducible d-dimensional Brownian path generation.

Normal draws come from a stateless counter-based hash of
(seed, path, stream tag, step, coordinate), so a path's values depend only
on its global index and the grid, never on how work was chunked or
parallelized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .matcore import DomainError

_T_FLOOR = 1e-300

# stream tags keep the draw spaces of the three sampling schemes disjoint
_TAG_FORWARD = 1
_TAG_GEOMETRIC = 2
_TAG_BISECT = 3

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)


def _mix64(z):
    # uint64 arithmetic wraps mod 2^64 by design
    z = (z ^ (z >> _SHIFT30)) * _M1
    z = (z ^ (z >> _SHIFT27)) * _M2
    return z ^ (z >> _SHIFT31)


def _normals(seed, tag, path_idx, step_idx, coord_idx):
    """Standard normals keyed by (seed, tag, path, step, coord).

    The component arrays broadcast against each other; the result has the
    broadcast shape.  Uniform bits go through the inverse normal CDF, which
    is deterministic for a fixed math library.
    """
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) + _GOLD)
        for comp in (tag, path_idx, step_idx, coord_idx):
            word = np.asarray(comp, dtype=np.uint64)
            h = _mix64(h ^ (word * _GOLD + _M2))
        h = _mix64(h + _GOLD)
    u = ((h >> _SHIFT11).astype(np.float64) + 0.5) * (2.0 ** -53)
    return ndtri(u)


@dataclass
class TimeGrid:
    """Strictly increasing evaluation times.

    Uniform grids carry an explicit leading zero; geometric grids hold the
    points t0 * theta^k for k = levels..0 (ascending) and stay strictly
    positive.
    """

    points: np.ndarray
    kind: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("TimeGrid needs a 1-d array of times")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError("TimeGrid points must be strictly increasing")
        if pts[0] < 0.0 or (pts.size > 1 and np.any(pts[1:] <= 0.0)):
            raise ValueError("TimeGrid points must be positive apart from a leading 0")
        self.points = pts

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def horizon(self) -> float:
        return float(self.points[-1])


def uniform_grid(horizon: float, steps: int) -> TimeGrid:
    if horizon <= 0.0 or steps < 1:
        raise ValueError("uniform grid needs horizon > 0 and steps >= 1")
    pts = np.linspace(0.0, horizon, steps + 1)
    return TimeGrid(pts, kind="uniform", meta={"horizon": float(horizon), "steps": int(steps)})


def geometric_grid(t0: float, theta: float, levels: int) -> TimeGrid:
    """Points t0 * theta^k for k = levels..0, ascending.

    theta must lie in (0, 1).  Points are generated in log space; the
    generator refuses grids that would dip below 1e-300 rather than letting
    times flush to zero.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("geometric grid needs theta in (0, 1)")
    if t0 <= 0.0 or levels < 0:
        raise ValueError("geometric grid needs t0 > 0 and levels >= 0")
    ks = np.arange(levels, -1, -1, dtype=float)
    log_pts = math.log(t0) + ks * math.log(theta)
    if log_pts[0] < math.log(_T_FLOOR):
        raise ValueError("geometric grid would go below the 1e-300 time floor")
    pts = np.exp(log_pts)
    return TimeGrid(pts, kind="geometric",
                    meta={"t0": float(t0), "theta": float(theta), "levels": int(levels)})


def ergodic_grid(n_levels: int) -> TimeGrid:
    """Times e^-n for n = 1..n_levels, the clock of the ergodic diagnostics."""
    if n_levels < 1:
        raise ValueError("ergodic grid needs at least one level")
    return geometric_grid(t0=math.exp(-1.0), theta=math.exp(-1.0), levels=n_levels - 1)


def union_grid(a: TimeGrid, b: TimeGrid) -> TimeGrid:
    pts = np.union1d(a.points, b.points)
    return TimeGrid(pts, kind="union", meta={"parents": (a.kind, b.kind)})


def make_grid(kind: str, **params) -> TimeGrid:
    """Descriptor-driven construction, used by the batch front end."""
    if kind == "uniform":
        return uniform_grid(params["horizon"], params["steps"])
    if kind == "geometric":
        return geometric_grid(params["t0"], params["theta"], params["levels"])
    if kind == "ergodic":
        return ergodic_grid(params["n_levels"])
    raise ValueError(f"unknown grid kind {kind!r}")


@dataclass
class BrownianBundle:
    """A reproducible collection of d-dimensional Brownian paths.

    paths has shape (path_count, dim, len(grid.points)); path i of the
    bundle is the globally indexed path first_path + i for the given seed,
    so chunked generation reproduces exactly the paths of one big call.
    """

    dim: int
    grid: TimeGrid
    paths: np.ndarray
    seed: int
    first_path: int = 0
    note: str = ""

    @property
    def path_count(self) -> int:
        return self.paths.shape[0]

    def increment_variance_zscore(self) -> float:
        """z-score of the pooled variance of normalized increments.

        Increments over disjoint intervals, divided by sqrt(dt), should be
        standard normal; the pooled squared mean has standard error
        sqrt(2/n).
        """
        t = self.grid.points
        w = self.paths
        if t[0] > 0.0:
            t = np.concatenate(([0.0], t))
            w = np.concatenate((np.zeros(w.shape[:2] + (1,)), w), axis=2)
        dt = np.diff(t)
        dw = np.diff(w, axis=2)
        z = dw / np.sqrt(dt)
        n = z.size
        s2 = float(np.mean(z * z))
        return (s2 - 1.0) / math.sqrt(2.0 / n)

    def to_csv(self, path) -> None:
        from .reports import write_csv
        header = ["path", "time"] + [f"W_{j + 1}" for j in range(self.dim)]
        rows = []
        for i in range(self.path_count):
            pid = self.first_path + i
            for k, t in enumerate(self.grid.points):
                rows.append([pid, t] + list(self.paths[i, :, k]))
        write_csv(path, header, rows)


def sample_bundle(dim: int, grid: TimeGrid, path_count: int, seed: int,
                  first_path: int = 0) -> BrownianBundle:
    """Generate Brownian paths on the grid.

    Geometric grids are sampled coarsest-time-first with bridge
    conditioning toward zero, so extending the grid with more levels
    extends existing paths instead of resampling them.  All other grids use
    forward increments.
    """
    if dim < 1 or path_count < 1:
        raise ValueError("need dim >= 1 and path_count >= 1")
    pids = np.arange(first_path, first_path + path_count, dtype=np.uint64)
    t = grid.points
    if grid.kind == "geometric":
        w = _sample_geometric(dim, t, pids, seed)
    else:
        w = _sample_forward(dim, t, pids, seed)
    return BrownianBundle(dim=dim, grid=grid, paths=w, seed=int(seed),
                          first_path=int(first_path))


def _sample_forward(dim, t, pids, seed):
    has_origin = t[0] == 0.0
    t_full = t if has_origin else np.concatenate(([0.0], t))
    n_steps = t_full.size - 1
    z = _normals(seed, np.uint64(_TAG_FORWARD),
                 pids[:, None, None],
                 np.arange(n_steps, dtype=np.uint64)[None, None, :],
                 np.arange(dim, dtype=np.uint64)[None, :, None])
    dw = z * np.sqrt(np.diff(t_full))[None, None, :]
    w_full = np.concatenate((np.zeros((pids.size, dim, 1)), np.cumsum(dw, axis=2)), axis=2)
    return w_full if has_origin else w_full[:, :, 1:]


def _sample_geometric(dim, t, pids, seed):
    # level k corresponds to time t0 * theta^k, i.e. array index n-1-k
    n = t.size
    w = np.empty((pids.size, dim, n))
    coords = np.arange(dim, dtype=np.uint64)[None, :]
    z0 = _normals(seed, np.uint64(_TAG_GEOMETRIC), pids[:, None], np.uint64(0), coords)
    w[:, :, n - 1] = math.sqrt(t[n - 1]) * z0
    for level in range(1, n):
        idx = n - 1 - level
        t_prev, t_cur = t[idx + 1], t[idx]
        zl = _normals(seed, np.uint64(_TAG_GEOMETRIC), pids[:, None], np.uint64(level), coords)
        ratio = t_cur / t_prev
        std = math.sqrt(t_cur * (t_prev - t_cur) / t_prev)
        w[:, :, idx] = ratio * w[:, :, idx + 1] + std * zl
    return w


def rotate_bundle(bundle: BrownianBundle, u) -> BrownianBundle:
    """Apply an orthogonal rotation W -> U W to every path value."""
    mat = np.asarray(u, dtype=float)
    d = bundle.dim
    if mat.shape != (d, d):
        raise ValueError("rotation matrix shape must match the bundle dimension")
    if np.abs(mat @ mat.T - np.eye(d)).max() > 1e-12:
        raise ValueError("rotation matrix must be orthogonal within 1e-12")
    rotated = np.einsum("ij,pjk->pik", mat, bundle.paths)
    return BrownianBundle(dim=d, grid=bundle.grid, paths=rotated, seed=bundle.seed,
                          first_path=bundle.first_path,
                          note=(bundle.note + "|rotated").lstrip("|"))


def refine_bisect(bundle: BrownianBundle) -> BrownianBundle:
    """Insert Brownian-bridge midpoints into every grid interval.

    Values at the original times are reused unchanged, so refined and
    coarse bundles are coupled realizations of the same paths.  Each call
    draws from a fresh bisection stream, making repeated refinement
    deterministic.
    """
    t = bundle.grid.points
    w = bundle.paths
    has_origin = t[0] == 0.0
    t_full = t if has_origin else np.concatenate(([0.0], t))
    w_full = w if has_origin else np.concatenate((np.zeros(w.shape[:2] + (1,)), w), axis=2)
    depth = int(bundle.grid.meta.get("bisections", 0))
    n_int = t_full.size - 1
    pids = np.arange(bundle.first_path, bundle.first_path + bundle.path_count, dtype=np.uint64)
    z = _normals(bundle.seed, np.uint64(_TAG_BISECT * 1000 + depth),
                 pids[:, None, None],
                 np.arange(n_int, dtype=np.uint64)[None, None, :],
                 np.arange(bundle.dim, dtype=np.uint64)[None, :, None])
    mid_t = 0.5 * (t_full[:-1] + t_full[1:])
    mid_std = 0.5 * np.sqrt(np.diff(t_full))
    mid_w = 0.5 * (w_full[:, :, :-1] + w_full[:, :, 1:]) + mid_std[None, None, :] * z
    new_t = np.empty(t_full.size + n_int)
    new_t[0::2] = t_full
    new_t[1::2] = mid_t
    new_w = np.empty(w_full.shape[:2] + (new_t.size,))
    new_w[:, :, 0::2] = w_full
    new_w[:, :, 1::2] = mid_w
    if not has_origin:
        new_t, new_w = new_t[1:], new_w[:, :, 1:]
    meta = dict(bundle.grid.meta)
    meta["bisections"] = depth + 1
    grid = TimeGrid(new_t, kind=bundle.grid.kind, meta=meta)
    return BrownianBundle(dim=bundle.dim, grid=grid, paths=new_w, seed=bundle.seed,
                          first_path=bundle.first_path, note=bundle.note)


@dataclass
class BundleSpec:
    """Lazy description of a bundle, realized chunk by chunk.

    Statistical routines accept either a concrete BrownianBundle or a
    BundleSpec; the spec form keeps memory bounded when path counts reach
    1e5 and leaves results bit-identical to a single big realization.
    """

    dim: int
    grid: TimeGrid
    path_count: int
    seed: int
    chunk_size: int = 10_000

    def chunks(self):
        done = 0
        while done < self.path_count:
            take = min(self.chunk_size, self.path_count - done)
            yield sample_bundle(self.dim, self.grid, take, self.seed, first_path=done)
            done += take


def as_chunks(source):
    """Iterate path chunks of a BrownianBundle or BundleSpec."""
    if isinstance(source, BrownianBundle):
        return iter((source,))
    if isinstance(source, BundleSpec):
        return source.chunks()
    raise TypeError("expected a BrownianBundle or BundleSpec")


def map_chunks_ordered(fn, chunk_iter, workers: int = 1):
    """Apply fn to each chunk, yielding results in chunk order.

    With workers > 1 the chunks run on a thread pool (the kernels are numpy
    code that releases the GIL) with a bounded number in flight; the yield
    order stays the submission order, so downstream reductions are
    independent of the worker count.
    """
    if workers <= 1:
        for chunk in chunk_iter:
            yield fn(chunk)
        return
    from collections import deque
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        for chunk in chunk_iter:
            pending.append(pool.submit(fn, chunk))
            if len(pending) > workers + 1:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
