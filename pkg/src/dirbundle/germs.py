"""Pointed sets (A, p): representations, the example catalog, shell sampling
and distance oracles."""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import sympy
from scipy.spatial import cKDTree

from .core import as_points, random_unit
from .lipschitz import LipschitzMap, oscillator
from .pompeiu import pompeiu_f, pompeiu_nodes

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
RETRY_FACTOR = 20
SYMBOLS = sympy.symbols("x y z")


@dataclass(frozen=True)
class ScaleSchedule:
    """Radii r_k = r0 * gamma**k, k < count, each with shell [r_k(1-w), r_k(1+w)]."""

    r0: float = 0.5
    gamma: float = 0.5
    count: int = 8
    shell_width: float = 0.25

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.count < 2:
            raise ValueError("count must be at least 2")
        if not 0 < self.shell_width < 1:
            raise ValueError("shell_width must lie in (0, 1)")

    @property
    def radii(self) -> np.ndarray:
        return self.r0 * self.gamma ** np.arange(self.count)

    @property
    def finest(self) -> float:
        return float(self.radii[-1])

    def shell(self, k: int) -> tuple[float, float]:
        r = self.radii[k]
        return r * (1 - self.shell_width), r * (1 + self.shell_width)

    def scaled(self, factor: float) -> ScaleSchedule:
        return replace(self, r0=self.r0 * factor)


@dataclass
class AnnulusSample:
    scale: float
    points: np.ndarray
    residuals: np.ndarray
    empty_shell: bool = False


def _uniform_shell(rng, centers, r_lo, r_hi, per):
    """`per` uniform points in each shell; rows grouped by center."""
    q, n = centers.shape
    lo = np.repeat(r_lo, per)
    hi = np.repeat(r_hi, per)
    u = rng.uniform(0.0, 1.0, q * per)
    r = (u * (hi ** n - lo ** n) + lo ** n) ** (1.0 / n)
    return np.repeat(centers, per, axis=0) + random_unit(rng, q * per, n) * r[:, None]


class SetGerm:
    """Interface shared by every germ representation.

    Subclasses implement `_sample_round` (one batch of candidate points near
    a center, with per-point residuals), `snap` (cheap map of arbitrary
    points onto nearby points of A) and `nearest` (best available
    approximation of the closest point of A).
    """

    ambient_dim: int
    base_point: np.ndarray
    name: str
    special_curves: tuple

    def at(self, q) -> SetGerm:
        """Same set, new base point."""
        return replace(self, base_point=np.asarray(q, dtype=float))

    def sample_near(self, center, r_lo: float, r_hi: float, count: int,
                    rng: np.random.Generator, residual_tol: float = RESIDUAL_TOL) -> tuple[np.ndarray, np.ndarray]:
        """Up to `count` certified points x of A with r_lo <= |x - center| <= r_hi."""
        center = np.asarray(center, dtype=float)[None, :]
        return self.sample_many(center, r_lo, r_hi, count, rng, residual_tol)[0]

    def sample_many(self, centers, r_lo, r_hi, count: int, rng: np.random.Generator,
                    residual_tol: float = RESIDUAL_TOL) -> list[tuple[np.ndarray, np.ndarray]]:
        """Batched `sample_near` over rows of `centers` with per-row radii.

        A point is certified when it lies in its shell and its residual
        (distance-to-A estimate) is at most residual_tol * r_hi. Each center
        gets at most RETRY_FACTOR * count candidate draws.
        """
        centers = as_points(centers, self.ambient_dim)
        q = centers.shape[0]
        lo = np.broadcast_to(np.asarray(r_lo, dtype=float), (q,))
        hi = np.broadcast_to(np.asarray(r_hi, dtype=float), (q,))
        pts = [[] for _ in range(q)]
        res = [[] for _ in range(q)]
        got = np.zeros(q, dtype=int)
        drawn = np.zeros(q, dtype=int)
        budget = RETRY_FACTOR * count
        live = np.arange(q)
        while live.size:
            per = int(min(max(2 * (count - got[live].min()), 16), budget - drawn[live].max()))
            p, r, own = self._sample_round(centers[live], lo[live], hi[live], per, rng)
            drawn[live] += per
            if p.shape[0]:
                idx = live[own]
                gap = np.linalg.norm(p - centers[idx], axis=1)
                ok = (gap >= lo[idx]) & (gap <= hi[idx]) & (r <= residual_tol * hi[idx])
                order = np.argsort(idx[ok], kind="stable")
                ids, pk, rk = idx[ok][order], p[ok][order], r[ok][order]
                bounds = np.searchsorted(ids, live, side="left"), np.searchsorted(ids, live, side="right")
                for c, s0, s1 in zip(live, *bounds):
                    if s1 > s0:
                        pts[c].append(pk[s0:s1])
                        res[c].append(rk[s0:s1])
                        got[c] += s1 - s0
            live = live[(got[live] < count) & (drawn[live] < budget)]
        out = []
        for c in range(q):
            if pts[c]:
                pc, rc = np.concatenate(pts[c]), np.concatenate(res[c])
            else:
                pc, rc = np.zeros((0, self.ambient_dim)), np.zeros(0)
            if pc.shape[0] > count:
                keep = np.sort(rng.choice(pc.shape[0], count, replace=False))
                pc, rc = pc[keep], rc[keep]
            out.append((pc, rc))
        return out

    def distance(self, x, scale_hint: float) -> np.ndarray:
        x = as_points(x, self.ambient_dim)
        y = self.nearest(x, scale_hint)
        d = np.linalg.norm(x - y, axis=1)
        d[~np.isfinite(d) | (d > 10.0 * scale_hint)] = np.inf
        return d

    def curve_points(self, scale: float, per_curve: int, rng: np.random.Generator) -> np.ndarray:
        """Points on the declared special curves with |q - p| near `scale`."""
        out = []
        for curve in self.special_curves:
            s = scale * rng.uniform(0.8, 1.2, per_curve)
            out.append(curve(s))
        if not out:
            return np.zeros((0, self.ambient_dim))
        return np.concatenate(out)

    # subclass hooks
    def _sample_round(self, centers, r_lo, r_hi, per, rng):
        """Draw `per` candidates near each center: (points, residuals, owner row)."""
        raise NotImplementedError

    def snap(self, x: np.ndarray, scale: np.ndarray | float) -> np.ndarray:
        raise NotImplementedError

    def nearest(self, x: np.ndarray, scale_hint: float) -> np.ndarray:
        raise NotImplementedError


# --- implicit germs ----------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _compile(exprs: tuple[str, ...], dim: int):
    syms = SYMBOLS[:dim]
    parsed = [sympy.sympify(e, locals={str(s): s for s in syms}) for e in exprs]
    fn = [sympy.lambdify(syms, e, "numpy") for e in parsed]
    grad = [[sympy.lambdify(syms, sympy.diff(e, s), "numpy") for s in syms] for e in parsed]

    def values(x):
        cols = [x[:, i] for i in range(dim)]
        return np.column_stack([np.broadcast_to(np.asarray(f(*cols), dtype=float), (x.shape[0],)) for f in fn]) \
            if fn else np.zeros((x.shape[0], 0))

    def jacobian(x):
        cols = [x[:, i] for i in range(dim)]
        out = np.empty((x.shape[0], len(grad), dim))
        for a, row in enumerate(grad):
            for b, g in enumerate(row):
                out[:, a, b] = np.broadcast_to(np.asarray(g(*cols), dtype=float), (x.shape[0],))
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    return values, jacobian


@dataclass
class ImplicitGerm(SetGerm):
    """A = {F_i(x) = 0, G_j(x) >= 0} with F, G given as expressions in x, y, z."""

    ambient_dim: int
    base_point: np.ndarray
    equalities: tuple[str, ...]
    inequalities: tuple[str, ...] = ()
    name: str = "implicit"
    special_curves: tuple = ()
    extras: dict = field(default_factory=dict, compare=False)
    max_iter: int = 200
    restarts: int = 8
    _f: Callable = field(init=False, repr=False, compare=False)
    _j: Callable = field(init=False, repr=False, compare=False)
    _g: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.base_point = np.asarray(self.base_point, dtype=float)
        self.equalities = tuple(self.equalities)
        self.inequalities = tuple(self.inequalities)
        self._f, self._j = _compile(self.equalities, self.ambient_dim)
        self._g, _ = _compile(self.inequalities, self.ambient_dim)

    def residual(self, x) -> np.ndarray:
        """Raw equality residuals F(x), shape (m, #equalities)."""
        return self._f(as_points(x, self.ambient_dim))

    def feasible(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        if not self.inequalities:
            return np.ones(x.shape[0], dtype=bool)
        return np.all(self._g(x) >= -tol, axis=1)

    def _newton_step(self, x):
        f = self._f(x)
        j = self._j(x)
        if j.shape[1] == 1:
            g2 = np.sum(j[:, 0] ** 2, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                step = j[:, 0] * np.where(g2 > 0, f[:, 0] / g2, 0.0)[:, None]
            return step, f, j
        jjt = j @ np.transpose(j, (0, 2, 1))
        # least-norm Gauss-Newton step; pinv handles vanishing gradients
        step = np.einsum("mqn,mq->mn", j, np.einsum("mqp,mp->mq", np.linalg.pinv(jjt, rcond=1e-14), f))
        return step, f, j

    def first_order_distance(self, x: np.ndarray) -> np.ndarray:
        step, f, _ = self._newton_step(x)
        d = np.linalg.norm(step, axis=1)
        # a vanishing gradient with a nonzero residual certifies nothing
        d[(d == 0) & np.any(f != 0, axis=1)] = np.inf
        return d

    def project(self, x: np.ndarray, max_step) -> np.ndarray:
        """Damped Gauss-Newton descent on the squared residual."""
        x = np.array(x, dtype=float)
        max_step = np.broadcast_to(np.asarray(max_step, dtype=float), (x.shape[0],)).copy()
        live = np.arange(x.shape[0])
        for _ in range(self.max_iter):
            if live.size == 0:
                break
            step, _, _ = self._newton_step(x[live])
            norm = np.linalg.norm(step, axis=1)
            cap = np.minimum(1.0, max_step[live] / np.maximum(norm, 1e-300))
            x[live] -= step * cap[:, None]
            # stop at the requested accuracy or at the floating-point floor of |x|
            floor = 16 * np.finfo(float).eps * np.linalg.norm(x[live], axis=1)
            done = norm <= np.maximum(1e-12 * max_step[live], floor)
            live = live[~done & np.isfinite(norm)]
        return x

    def _sample_round(self, centers, r_lo, r_hi, per, rng):
        cand = _uniform_shell(rng, centers, r_lo, 1.25 * r_hi, per)
        y = self.project(cand, np.repeat(r_hi, per))
        res = self.first_order_distance(y)
        res[~self.feasible(y) | ~np.all(np.isfinite(y), axis=1)] = np.inf
        return y, res, np.repeat(np.arange(centers.shape[0]), per)

    def snap(self, x, scale):
        return self.project(as_points(x, self.ambient_dim), scale)

    def nearest(self, x, scale_hint):
        """Multi-start projection followed by tangential refinement toward x."""
        x = as_points(x, self.ambient_dim)
        m, n = x.shape
        rng = np.random.default_rng(12345)
        starts = np.repeat(x[:, None, :], self.restarts + 1, axis=1)
        starts[:, 1:, :] += 0.5 * scale_hint * rng.standard_normal((m, self.restarts, n))
        y = self.project(starts.reshape(-1, n), 2.0 * scale_hint)
        target = np.repeat(x, self.restarts + 1, axis=0)
        for _ in range(40):
            _, _, j = self._newton_step(y)
            v = target - y
            jv = np.einsum("mqn,mn->mq", j, v)
            jjt = j @ np.transpose(j, (0, 2, 1))
            normal = np.einsum("mqn,mq->mn", j, np.einsum("mqp,mp->mq", np.linalg.pinv(jjt, rcond=1e-14), jv))
            moved = self.project(y + (v - normal), 2.0 * scale_hint)
            gain = np.linalg.norm(target - moved, axis=1) < np.linalg.norm(target - y, axis=1)
            y = np.where(gain[:, None], moved, y)
            if not gain.any():
                break
        ok = self.feasible(y, 1e-12) & (self.first_order_distance(y) <= 1e-8 * max(scale_hint, 1e-300))
        d = np.linalg.norm(target - y, axis=1)
        d[~ok] = np.inf
        d = d.reshape(m, self.restarts + 1)
        y = y.reshape(m, self.restarts + 1, n)
        best = np.argmin(d, axis=1)
        out = y[np.arange(m), best]
        out[~np.isfinite(d[np.arange(m), best])] = np.nan
        # the base point is a known member when it satisfies the equations
        bp = self.base_point[None, :]
        if self.feasible(bp)[0] and np.all(np.abs(self._f(bp)) <= 1e-12):
            dbp = np.linalg.norm(x - bp, axis=1)
            cur = np.linalg.norm(x - out, axis=1)
            use = ~(cur <= dbp)
            out[use] = bp
        return out


# --- parametric germs --------------------------------------------------------

def _golden_min(fun, lo, hi, iters=48):
    """Row-wise golden-section minimization on brackets [lo, hi]."""
    g = (math.sqrt(5) - 1) / 2
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = fun(c) < fun(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return 0.5 * (a + b)


def _grid_then_golden(fun_grid, fun, lo, hi, grid=257):
    """Minimize fun over [lo, hi] per row: coarse grid then golden refinement."""
    u = np.linspace(lo, hi, grid)
    vals = fun_grid(u)  # (m, grid)
    i = np.argmin(vals, axis=1)
    step = (hi - lo) / (grid - 1)
    a = np.clip(lo + (i - 1) * step, lo, hi)
    b = np.clip(lo + (i + 1) * step, lo, hi)
    return _golden_min(fun, a, b)


class Patch:
    """A map from a parameter box into R^n."""

    lo: np.ndarray
    hi: np.ndarray

    def map(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        h = 1e-7 * np.maximum(1.0, np.abs(self.hi - self.lo))
        d = self.lo.shape[0]
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = h[i]
            up = np.minimum(u + e, self.hi)
            dn = np.maximum(u - e, self.lo)
            span = (up - dn)[:, i]
            cols.append((self.map(up) - self.map(dn)) / np.where(span > 0, span, 1.0)[:, None])
        return np.stack(cols, axis=2)

    def local_box(self, centers, u_c, radius):
        """Parameter boxes (lo, hi), one row per center, whose images cover
        the ball of the given radius around each center (to first order)."""
        j = self.jacobian(u_c)
        sv = np.linalg.svd(j, compute_uv=False)
        full = sv[:, -1] > 1e-10 * np.maximum(sv[:, 0], 1e-300)
        colnorm = np.linalg.norm(j, axis=1)
        with np.errstate(divide="ignore"):
            half = np.where(colnorm > 0, 1.25 * radius[:, None] / colnorm, np.inf)
        if full.any():
            half[full] = 1.25 * radius[full, None] * np.linalg.norm(np.linalg.pinv(j[full]), axis=2)
        return np.maximum(u_c - half, self.lo), np.minimum(u_c + half, self.hi)

    def measure(self, lo, hi, rng, probes=4) -> np.ndarray:
        """Monte Carlo image measure of each parameter box row."""
        m, d = lo.shape
        u = lo[:, None, :] + (hi - lo)[:, None, :] * rng.uniform(0, 1, (m, probes, d))
        j = self.jacobian(u.reshape(-1, d))
        dets = np.sqrt(np.abs(np.linalg.det(np.transpose(j, (0, 2, 1)) @ j))).reshape(m, probes)
        return np.prod(hi - lo, axis=1) * dets.mean(axis=1)


@dataclass
class AffinePatch(Patch):
    origin: np.ndarray
    axes: np.ndarray  # (d, n) orthonormal rows
    lo: np.ndarray
    hi: np.ndarray

    def map(self, u):
        return self.origin + u @ self.axes

    def project(self, x):
        u = np.clip((x - self.origin) @ self.axes.T, self.lo, self.hi)
        return u, self.map(u)


@dataclass
class CurvePatch(Patch):
    """One-parameter patch u -> curve(u)."""

    curve: Callable[[np.ndarray], np.ndarray]
    lo: np.ndarray
    hi: np.ndarray
    grid: int = 2049

    def map(self, u):
        return self.curve(u[..., 0])

    def project(self, x):
        def fgrid(u):
            return np.sum((self.curve(u.T) - x[:, None, :]) ** 2, axis=2)

        def f(u):
            return np.sum((self.curve(u) - x) ** 2, axis=1)

        lo = np.full(x.shape[0], self.lo[0])
        hi = np.full(x.shape[0], self.hi[0])
        u = _grid_then_golden(fgrid, f, lo, hi, self.grid)
        return u[:, None], self.curve(u)

    def local_box(self, centers, u_c, radius):
        # grid scan: robust where the curve has unbounded speed
        u = np.linspace(self.lo[0], self.hi[0], self.grid)
        step = u[1] - u[0]
        pts = self.curve(u)
        lo = np.empty((centers.shape[0], 1))
        hi = np.empty((centers.shape[0], 1))
        for i, c in enumerate(centers):
            gap = np.linalg.norm(pts - c, axis=1)
            near = np.flatnonzero(gap <= 1.25 * radius[i])
            if near.size == 0:
                near = np.array([np.argmin(gap)])
            lo[i, 0] = max(self.lo[0], u[near[0]] - step)
            hi[i, 0] = min(self.hi[0], u[near[-1]] + step)
        return lo, hi


@dataclass
class ConeOverCurvePatch(Patch):
    """(s, u) -> s * curve(u) for s in [0, s_max], u in [u_lo, u_hi]."""

    curve: Callable[[np.ndarray], np.ndarray]
    u_lo: float
    u_hi: float
    s_max: float = 1.5
    lo: np.ndarray = field(init=False)
    hi: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lo = np.array([0.0, self.u_lo])
        self.hi = np.array([self.s_max, self.u_hi])
        g = np.linalg.norm(self.curve(np.linspace(self.u_lo, self.u_hi, 513)), axis=-1)
        self._gmin, self._gmax = float(g.min()), float(g.max())

    def map(self, u):
        return u[..., :1] * self.curve(u[..., 1])

    def _ray_dist2(self, x, g):
        s = np.clip(np.sum(x * g, axis=-1) / np.sum(g * g, axis=-1), 0.0, self.s_max)
        return np.sum((x - s[..., None] * g) ** 2, axis=-1), s

    def project(self, x):
        def fgrid(u):
            return self._ray_dist2(x[:, None, :], self.curve(u.T))[0]

        def f(u):
            return self._ray_dist2(x, self.curve(u))[0]

        lo = np.full(x.shape[0], self.u_lo)
        hi = np.full(x.shape[0], self.u_hi)
        u = _grid_then_golden(fgrid, f, lo, hi)
        _, s = self._ray_dist2(x, self.curve(u))
        params = np.column_stack([s, u])
        return params, self.map(params)

    def local_box(self, centers, u_c, radius):
        lo, hi = super().local_box(centers, u_c, radius)
        # at the vertex the s-direction Jacobian degenerates; use the whole link
        vertex = np.linalg.norm(centers, axis=1) <= 1e-9 * radius
        lo[vertex] = [0.0, self.u_lo]
        hi[vertex, 0] = np.minimum(self.s_max, 1.25 * radius[vertex] / self._gmin)
        hi[vertex, 1] = self.u_hi
        return lo, hi


@dataclass
class ParametricGerm(SetGerm):
    ambient_dim: int
    base_point: np.ndarray
    patches: tuple[Patch, ...]
    name: str = "parametric"
    special_curves: tuple = ()
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.base_point = np.asarray(self.base_point, dtype=float)

    def _sample_round(self, centers, r_lo, r_hi, per, rng):
        q = centers.shape[0]
        boxes = []
        weights = np.zeros((q, len(self.patches)))
        for k, patch in enumerate(self.patches):
            u_c, y_c = patch.project(centers)
            gap = np.linalg.norm(y_c - centers, axis=1)
            rows = np.flatnonzero(gap <= r_hi)
            if rows.size == 0:
                boxes.append(None)
                continue
            lo, hi = patch.local_box(centers[rows], u_c[rows], r_hi[rows] + gap[rows])
            ok = np.all(hi >= lo, axis=1)
            rows, lo, hi = rows[ok], lo[ok], hi[ok]
            boxes.append((rows, lo, hi))
            if rows.size:
                weights[rows, k] = np.maximum(patch.measure(lo, hi, rng), 1e-300)
        total = weights.sum(axis=1)
        has = total > 0
        alloc = np.zeros_like(weights, dtype=int)
        if has.any():
            alloc[has] = rng.multinomial(per, weights[has] / total[has, None])
        pts, own = [], []
        for k, (patch, box) in enumerate(zip(self.patches, boxes)):
            if box is None:
                continue
            rows, lo, hi = box
            reps = alloc[rows, k]
            if reps.sum() == 0:
                continue
            lo_r = np.repeat(lo, reps, axis=0)
            hi_r = np.repeat(hi, reps, axis=0)
            pts.append(patch.map(lo_r + (hi_r - lo_r) * rng.uniform(0, 1, lo_r.shape)))
            own.append(np.repeat(rows, reps))
        if not pts:
            return np.zeros((0, self.ambient_dim)), np.zeros(0), np.zeros(0, dtype=int)
        pts = np.concatenate(pts)
        own = np.concatenate(own)
        return pts, np.zeros(pts.shape[0]), own

    def nearest(self, x, scale_hint=1.0):
        x = as_points(x, self.ambient_dim)
        best = np.full(x.shape, np.nan)
        bestd = np.full(x.shape[0], np.inf)
        for patch in self.patches:
            _, y = patch.project(x)
            d = np.linalg.norm(x - y, axis=1)
            better = d < bestd
            best[better] = y[better]
            bestd[better] = d[better]
        return best

    def snap(self, x, scale=None):
        return self.nearest(x)


# --- point clouds ------------------------------------------------------------

@dataclass
class PointCloudGerm(SetGerm):
    """Finite samples of a set, optionally grouped per scale, optionally with a
    generator that can produce fresh points of A near a center."""

    ambient_dim: int
    base_point: np.ndarray
    points: np.ndarray
    scales: tuple[float, ...] = ()
    membership: tuple[tuple[int, ...], ...] = ()
    generator: Callable | None = None
    name: str = "pointcloud"
    special_curves: tuple = ()

    def __post_init__(self):
        self.base_point = np.asarray(self.base_point, dtype=float)
        self.points = as_points(self.points, self.ambient_dim)
        self._tree = cKDTree(self.points) if self.points.shape[0] else None

    def scale_points(self, k: int) -> np.ndarray:
        return self.points[list(self.membership[k])]

    def _sample_round(self, centers, r_lo, r_hi, per, rng):
        pts, own = [], []
        for i, c in enumerate(centers):
            if self.generator is not None:
                p = self.generator(c, r_lo[i], r_hi[i], per, rng)
            elif self._tree is not None:
                idx = np.array(self._tree.query_ball_point(c, r_hi[i]), dtype=int)
                p = self.points[np.sort(idx)] if idx.size else np.zeros((0, self.ambient_dim))
                p = p[rng.permutation(p.shape[0])][:per]
            else:
                p = np.zeros((0, self.ambient_dim))
            pts.append(p)
            own.append(np.full(p.shape[0], i))
        pts = np.concatenate(pts)
        return pts, np.zeros(pts.shape[0]), np.concatenate(own)

    def sample_many(self, centers, r_lo, r_hi, count, rng, residual_tol=RESIDUAL_TOL):
        if self.generator is not None:
            return super().sample_many(centers, r_lo, r_hi, count, rng, residual_tol)
        # stored points only: take every stored point in the shell, retries add nothing
        centers = as_points(centers, self.ambient_dim)
        lo = np.broadcast_to(np.asarray(r_lo, dtype=float), (centers.shape[0],))
        hi = np.broadcast_to(np.asarray(r_hi, dtype=float), (centers.shape[0],))
        out = []
        for i, c in enumerate(centers):
            idx = np.sort(np.array(self._tree.query_ball_point(c, hi[i]), dtype=int)) \
                if self._tree is not None else np.zeros(0, dtype=int)
            p = self.points[idx] if idx.size else np.zeros((0, self.ambient_dim))
            p = p[np.linalg.norm(p - c, axis=1) >= lo[i]]
            if p.shape[0] > count:
                p = p[np.sort(rng.choice(p.shape[0], count, replace=False))]
            out.append((p, np.zeros(p.shape[0])))
        return out

    def nearest(self, x, scale_hint=1.0):
        x = as_points(x, self.ambient_dim)
        out = np.full(x.shape, np.nan)
        if self._tree is not None:
            _, i = self._tree.query(x)
            out = self.points[i].copy()
        if self.generator is not None:
            rng = np.random.default_rng(0)
            for row in range(x.shape[0]):
                local = self.generator(x[row], 0.0, scale_hint / 10.0, 64, rng)
                if local.shape[0]:
                    d = np.linalg.norm(local - x[row], axis=1)
                    if not d.min() >= np.linalg.norm(out[row] - x[row]):
                        out[row] = local[np.argmin(d)]
        return out

    def snap(self, x, scale=None):
        return self.nearest(x)


def load_point_cloud(csv_path, meta_path) -> PointCloudGerm:
    """Read a CSV (header x,y[,z]) plus a JSON sidecar with keys
    `base_point`, optional `scales` and optional `membership` (row indices per scale)."""
    import csv

    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header not in (["x", "y"], ["x", "y", "z"]):
            raise ValueError(f"unexpected CSV header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    meta = json.loads(Path(meta_path).read_text())
    pts = np.asarray(rows, dtype=float).reshape(-1, len(header))
    return PointCloudGerm(
        ambient_dim=len(header),
        base_point=np.asarray(meta["base_point"], dtype=float),
        points=pts,
        scales=tuple(meta.get("scales", ())),
        membership=tuple(tuple(m) for m in meta.get("membership", ())),
        name=meta.get("name", Path(csv_path).stem),
    )


def save_point_cloud(germ: PointCloudGerm, csv_path, meta_path) -> None:
    header = ["x", "y", "z"][: germ.ambient_dim]
    lines = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in germ.points]
    Path(csv_path).write_text("\n".join(lines) + "\n")
    meta = {"base_point": germ.base_point.tolist(), "scales": list(germ.scales),
            "membership": [list(m) for m in germ.membership], "name": germ.name}
    Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True))


# --- images under Lipschitz maps ----------------------------------------------

@dataclass
class ImageGerm(SetGerm):
    """h(A) for an inner germ A; sampling and distances go through h."""

    inner: SetGerm
    h: LipschitzMap
    base_point: np.ndarray = None
    name: str = "image"
    densify_rounds: int = 12
    densify_candidates: int = 24

    def __post_init__(self):
        if self.base_point is None:
            self.base_point = self.h(self.inner.base_point)
        self.base_point = np.asarray(self.base_point, dtype=float)

    @property
    def ambient_dim(self) -> int:
        return self.inner.ambient_dim

    @property
    def special_curves(self):
        return tuple((lambda s, c=c: self.h(c(s))) for c in self.inner.special_curves)

    def _sample_round(self, centers, r_lo, r_hi, per, rng):
        # the preimage of the shell lies in the shell [r_lo / L, r_hi * L_inv]
        lip, inv = self.h.lip_estimate, self.h.inv_lip_estimate
        inner = self.inner.sample_many(self.h.invert(centers), r_lo / lip, r_hi * inv, per, rng,
                                       RESIDUAL_TOL / (lip * inv))
        pts = [p for p, _ in inner]
        res = [r * lip for _, r in inner]
        own = [np.full(p.shape[0], i) for i, p in enumerate(pts)]
        pts = np.concatenate(pts)
        img = self.h(pts) if pts.shape[0] else pts
        return img, np.concatenate(res), np.concatenate(own)

    def snap(self, x, scale):
        x = as_points(x, self.ambient_dim)
        return self.h(self.inner.snap(self.h.invert(x), scale))

    def nearest(self, x, scale_hint):
        """Nearest mapped point, refined by shrinking random densification
        rounds in the preimage."""
        x = as_points(x, self.ambient_dim)
        m, n = x.shape
        y = self.inner.nearest(self.h.invert(x), scale_hint / self.h.lip_estimate)
        good = np.all(np.isfinite(y), axis=1)
        img = np.full_like(x, np.nan)
        if good.any():
            img[good] = self.h(y[good])
        best = np.linalg.norm(x - img, axis=1)
        best[~good] = np.inf
        radius = np.where(good, 2.0 * self.h.inv_lip_estimate * best, 0.0)
        rng = np.random.default_rng(777)
        k = self.densify_candidates
        for _ in range(self.densify_rounds):
            live = np.flatnonzero(good & (radius > 1e-12 * scale_hint))
            if live.size == 0:
                break
            offs = random_unit(rng, live.size * k, n) * (
                rng.uniform(0, 1, (live.size * k, 1)) ** (1.0 / n)) * np.repeat(radius[live], k)[:, None]
            cand_in = np.repeat(y[live], k, axis=0) + offs
            cand_in = self.inner.snap(cand_in, np.repeat(radius[live], k))
            ok = np.all(np.isfinite(cand_in), axis=1)
            cand = np.full_like(cand_in, np.nan)
            if ok.any():
                cand[ok] = self.h(cand_in[ok])
            d = np.linalg.norm(cand - np.repeat(x[live], k, axis=0), axis=1)
            d[~ok] = np.inf
            d = d.reshape(live.size, k)
            j = np.argmin(d, axis=1)
            dbest = d[np.arange(live.size), j]
            improved = dbest < best[live]
            rows = live[improved]
            y[rows] = cand_in.reshape(live.size, k, n)[improved, j[improved]]
            img[rows] = cand.reshape(live.size, k, n)[improved, j[improved]]
            best[rows] = dbest[improved]
            radius[live] *= np.where(improved, 0.7, 0.4)
        img[~np.isfinite(best)] = np.nan
        return img


def pushforward_germ(h: LipschitzMap, germ: SetGerm) -> ImageGerm:
    if h.dim != germ.ambient_dim:
        raise ValueError("map and germ dimensions differ")
    return ImageGerm(inner=germ, h=h, name=f"{h.name}[{germ.name}]")


# --- operations --------------------------------------------------------------

def sample_annulus(germ: SetGerm, schedule: ScaleSchedule, count_per_shell: int, seed: int,
                   residual_tol: float = RESIDUAL_TOL) -> list[AnnulusSample]:
    """Certified samples of A in each shell around the base point."""
    if count_per_shell < 1:
        raise ValueError("count_per_shell must be at least 1")
    out = []
    for k, r in enumerate(schedule.radii):
        lo, hi = schedule.shell(k)
        rng = np.random.default_rng(seed + k)
        pts, res = germ.sample_near(germ.base_point, lo, hi, count_per_shell, rng, residual_tol)
        empty = pts.shape[0] == 0
        if empty:
            logger.warning("%s: no certified points in shell %d (r=%.3g)", germ.name, k, r)
        out.append(AnnulusSample(float(r), pts, res, empty))
    return out


def distance_to_germ(germ: SetGerm, x, scale_hint: float) -> np.ndarray | float:
    """Upper bound on dist(x, A); +inf when nothing lies within 10 * scale_hint."""
    if not scale_hint > 0:
        raise ValueError("scale_hint must be positive")
    x = np.asarray(x, dtype=float)
    d = germ.distance(np.atleast_2d(x), scale_hint)
    return float(d[0]) if x.ndim == 1 else d


# --- catalog -----------------------------------------------------------------

P1, P2, P3, P4 = (np.array(p, dtype=float) for p in ((1, 1, 1), (1, -1, 1), (-1, -1, 1), (-1, 1, 1)))


def _segment_curve(a, b):
    return lambda u: a + np.asarray(u)[..., None] * (b - a)


def bt_arc(t: float):
    """Circle arc C_t in the plane z = 1 from P2 to P3 through the half plane y <= -1.

    Returns (curve(phi), phi_lo, phi_hi).
    """
    radius = math.sqrt(1.0 + (t + 1.0) ** 2)
    phi2 = math.atan2(-1.0 - t, 1.0)
    phi3 = math.atan2(-1.0 - t, -1.0)
    if phi3 > phi2:
        phi3 -= 2 * math.pi

    def curve(phi):
        phi = np.asarray(phi, dtype=float)
        return np.stack([radius * np.cos(phi), t + radius * np.sin(phi), np.ones_like(phi)], axis=-1)

    return curve, phi3, phi2


def _cone_over_polyline(points, closed=True):
    pts = list(points)
    pairs = list(zip(pts, pts[1:] + pts[:1])) if closed else list(zip(pts, pts[1:]))
    return [ConeOverCurvePatch(_segment_curve(a, b), 0.0, 1.0) for a, b in pairs]


def bs_height(x, y):
    """Graph function g = -(y^7 x + x^15)^(1/5) of the surface z^5 + y^7 x + x^15 = 0."""
    w = y ** 7 * x + x ** 15
    return -np.sign(w) * np.abs(w) ** 0.2


def _origin(dim):
    return np.zeros(dim)


def _gapped_patches(levels: int = 40):
    e = np.array([[1.0, 0.0]])
    return tuple(AffinePatch(np.zeros(2), e, np.array([4.0 ** -k]), np.array([2 * 4.0 ** -k]))
                 for k in range(levels))


GERM_IDS = ("line", "plane", "cone-a1", "cone-a2", "cone-a1plus", "square-cone-b", "bt-cone",
            "whitney-umbrella", "bs-graph", "flat-graph", "gapped-ray", "oscillator-image", "pompeiu")

_PARAMS = {
    "line": {"dim": 3.0, "axis": None},
    "bt-cone": {"t": 0.0},
    "flat-graph": {"e": 1.0, "C": 1.0},
    "pompeiu": {"n_terms": 12.0, "seed": 42.0},
}


def catalog_params(germ_id: str, params: dict | None = None) -> dict:
    """Resolve defaults and reject unknown parameter names."""
    if germ_id not in GERM_IDS:
        raise ValueError(f"unknown germ id {germ_id!r}")
    allowed = dict(_PARAMS.get(germ_id, {}))
    for k, v in (params or {}).items():
        if k not in allowed:
            raise ValueError(f"germ {germ_id!r} takes no parameter {k!r}")
        allowed[k] = float(v)
    return allowed


def catalog_germ(germ_id: str, params: dict | None = None) -> SetGerm:
    """Build a catalog germ based at the origin (pompeiu: at (a_1, f(a_1)))."""
    p = catalog_params(germ_id, params)
    if germ_id == "line":
        dim = int(p["dim"])
        if dim not in (2, 3):
            raise ValueError("line: dim must be 2 or 3")
        axis = dim - 1 if p["axis"] is None else int(p["axis"])
        if not 0 <= axis < dim:
            raise ValueError("line: axis out of range")
        e = np.eye(dim)[axis:axis + 1]
        return ParametricGerm(dim, _origin(dim), (AffinePatch(_origin(dim), e, np.array([-2.0]), np.array([2.0])),),
                              name=f"line(dim={dim},axis={axis})")
    if germ_id == "plane":
        return ParametricGerm(3, _origin(3), (AffinePatch(_origin(3), np.eye(3)[:2], -2.0 * np.ones(2),
                                                          2.0 * np.ones(2)),), name="plane")
    if germ_id == "cone-a1":
        return ImplicitGerm(3, _origin(3), ("x**2 + y**2 - z**2",), name="cone-a1")
    if germ_id == "cone-a2":
        return ImplicitGerm(3, _origin(3), ("x**2 + y**2 - z**4",), name="cone-a2")
    if germ_id == "cone-a1plus":
        return ImplicitGerm(3, _origin(3), ("x**2 + y**2 - z**2",), ("z",), name="cone-a1plus")
    if germ_id == "square-cone-b":
        return ParametricGerm(3, _origin(3), tuple(_cone_over_polyline([P1, P2, P3, P4])), name="square-cone-b")
    if germ_id == "bt-cone":
        t = p["t"]
        if not -3.0 <= t <= 2.0:
            raise ValueError("bt-cone: t must lie in [-3, 2]")
        curve, lo, hi = bt_arc(t)
        patches = [ConeOverCurvePatch(_segment_curve(P1, P2), 0.0, 1.0),
                   ConeOverCurvePatch(curve, lo, hi),
                   ConeOverCurvePatch(_segment_curve(P3, P4), 0.0, 1.0),
                   ConeOverCurvePatch(_segment_curve(P4, P1), 0.0, 1.0)]
        return ParametricGerm(3, _origin(3), tuple(patches), name=f"bt-cone(t={t:g})", extras={"t": t})
    if germ_id == "whitney-umbrella":
        return ImplicitGerm(3, _origin(3), ("x**2 - z*y**2",), name="whitney-umbrella")
    if germ_id == "bs-graph":
        curves = (
            lambda s: np.column_stack([np.zeros_like(s), s, np.zeros_like(s)]),
            lambda s: np.column_stack([np.zeros_like(s), -s, np.zeros_like(s)]),
            lambda s: np.column_stack([s, -s * s, np.zeros_like(s)]),
            lambda s: np.column_stack([-s, -s * s, np.zeros_like(s)]),
        )
        return ImplicitGerm(3, _origin(3), ("z**5 + y**7*x + x**15",),
                            name="bs-graph", special_curves=curves, extras={"height": bs_height})
    if germ_id == "flat-graph":
        e, c = p["e"], p["C"]
        if not (e > 0 and c > 0):
            raise ValueError("flat-graph: e and C must be positive")
        return ImplicitGerm(3, _origin(3), (f"z - {c!r}*(x**2 + y**2)**({(1 + e) / 2!r})",),
                            name=f"flat-graph(e={e:g},C={c:g})")
    if germ_id == "gapped-ray":
        return ParametricGerm(2, _origin(2), _gapped_patches(), name="gapped-ray")
    if germ_id == "oscillator-image":
        inner = catalog_germ("line", {"dim": 2})
        return ImageGerm(inner=inner, h=oscillator(2), name="oscillator-image")
    if germ_id == "pompeiu":
        n_terms, seed = int(p["n_terms"]), int(p["seed"])
        if n_terms < 1:
            raise ValueError("pompeiu: n_terms must be positive")
        nodes = pompeiu_nodes(n_terms, seed)

        def graph(u):
            u = np.asarray(u, dtype=float)
            return np.stack([u, pompeiu_f(u, nodes)], axis=-1)

        base = graph(np.array(nodes[0]))
        return ParametricGerm(2, base, (CurvePatch(graph, np.array([0.0]), np.array([1.0])),),
                              name=f"pompeiu(n={n_terms},seed={seed})", extras={"nodes": nodes})
    raise ValueError(f"unknown germ id {germ_id!r}")
