"""Bi-Lipschitz maps of (R^n, 0): container type and the map catalog."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Evaluator = Callable[[np.ndarray], np.ndarray]


def estimate_lipschitz(forward: Evaluator, dim: int, seed: int = 0, pairs: int = 4000) -> tuple[float, float]:
    """Sampled two-point bounds (L, L_inv) on the unit ball.

    Pairs are drawn at several separations, including pairs straddling the
    origin, so oscillating and piecewise-linear catalog maps are probed at
    the scales where they misbehave.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (pairs, dim))
    x /= np.maximum(1.0, np.linalg.norm(x, axis=1, keepdims=True))
    x *= 10.0 ** rng.uniform(-4, 0, (pairs, 1))
    step = rng.standard_normal((pairs, dim))
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    step *= np.linalg.norm(x, axis=1, keepdims=True) * 10.0 ** rng.uniform(-3, 0.3, (pairs, 1))
    y = x + step
    y[: pairs // 8] = -x[: pairs // 8]
    y[pairs // 8: pairs // 4] = 0.0
    fx, fy = forward(x), forward(y)
    num = np.linalg.norm(fx - fy, axis=1)
    den = np.linalg.norm(x - y, axis=1)
    ok = den > 0
    ratio = num[ok] / den[ok]
    return float(ratio.max()), float(1.0 / ratio.min())


@dataclass
class LipschitzMap:
    forward: Evaluator
    dim: int
    inverse: Evaluator | None = None
    lip_estimate: float = math.nan
    inv_lip_estimate: float = math.nan
    fixes_origin: bool = True
    name: str = "map"
    linear_part: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if math.isnan(self.lip_estimate) or math.isnan(self.inv_lip_estimate):
            lip, inv = estimate_lipschitz(self._call, self.dim)
            if math.isnan(self.lip_estimate):
                self.lip_estimate = lip
            if math.isnan(self.inv_lip_estimate):
                self.inv_lip_estimate = inv

    def _call(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.forward(x), dtype=float)
        if self.fixes_origin:
            zero = ~np.any(x != 0, axis=1)
            if zero.any():
                out = out.copy()
                out[zero] = 0.0
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._call(np.atleast_2d(x))
        return out[0] if single else out

    def invert(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y2 = np.atleast_2d(y)
        if self.inverse is not None:
            out = np.asarray(self.inverse(y2), dtype=float)
        else:
            out = _newton_inverse(self._call, y2)
        return out[0] if single else out


def _newton_inverse(f: Evaluator, y: np.ndarray, iters: int = 60) -> np.ndarray:
    """Solve f(x) = y row-wise with finite-difference Newton steps."""
    x = y.copy()
    n = y.shape[1]
    for _ in range(iters):
        r = f(x) - y
        if np.max(np.abs(r)) < 1e-14 * max(1.0, np.max(np.abs(y))):
            break
        h = 1e-7 * np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-8)
        jac = np.empty((x.shape[0], n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            jac[:, :, j] = (f(x + h * e) - f(x - h * e)) / (2 * h)
        x = x - np.linalg.solve(jac, r[..., None])[..., 0]
    return x


# --- catalog ---------------------------------------------------------------

def linear(matrix, name: str = "linear") -> LipschitzMap:
    m = np.asarray(matrix, dtype=float)
    minv = np.linalg.inv(m)
    sv = np.linalg.svd(m, compute_uv=False)
    return LipschitzMap(lambda x: x @ m.T, m.shape[0], inverse=lambda y: y @ minv.T,
                        lip_estimate=float(sv[0]), inv_lip_estimate=float(1 / sv[-1]),
                        name=name, linear_part=m)


def identity(dim: int = 3) -> LipschitzMap:
    return linear(np.eye(dim), name="identity")


def scaling(factor: float, dim: int = 3) -> LipschitzMap:
    return linear(factor * np.eye(dim), name=f"scaling({factor:g})")


def rotation(theta_deg: float, dim: int = 3) -> LipschitzMap:
    """Rotation by theta (degrees) in the (x, y) plane; other axes fixed."""
    if dim < 2:
        raise ValueError("rotation needs dim >= 2")
    t = math.radians(theta_deg)
    m = np.eye(dim)
    m[:2, :2] = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
    return linear(m, name=f"rotation({theta_deg:g})")


def shear_linear(dim: int = 3) -> LipschitzMap:
    """(x, y, ...) -> (x, y + x, ...)."""
    m = np.eye(dim)
    m[1, 0] = 1.0
    return linear(m, name="shear-linear")


def shear_abs(dim: int = 2) -> LipschitzMap:
    """(x, y, ...) -> (x, y + |x|, ...); positively homogeneous, kink along x = 0."""
    def fwd(x):
        out = x.copy()
        out[:, 1] += np.abs(x[:, 0])
        return out

    def inv(y):
        out = y.copy()
        out[:, 1] -= np.abs(y[:, 0])
        return out

    lip = (1 + math.sqrt(5)) / 2
    return LipschitzMap(fwd, dim, inverse=inv, lip_estimate=lip, inv_lip_estimate=lip, name="shear-abs")


def _sin_inv(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = np.sin(1.0 / r[nz])
    return out


def oscillator(dim: int = 2) -> LipschitzMap:
    """(x, y) -> (2x + r^2 sin(1/r), y) with r = |(x, y)|, value 0 at r = 0."""
    def fwd(x):
        r = np.linalg.norm(x, axis=1)
        out = x.copy()
        out[:, 0] = 2 * x[:, 0] + r * r * _sin_inv(r)
        return out

    def inv(y):
        # first coordinate is monotone in x on the unit ball; bisection per row
        u = y[:, 0]
        rest = y[:, 1:]
        lo = u / 2 - 1.0
        hi = u / 2 + 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            trial = np.column_stack([mid, rest])
            val = fwd(trial)[:, 0]
            above = val > u
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return np.column_stack([0.5 * (lo + hi), rest])

    return LipschitzMap(fwd, dim, inverse=inv, name="oscillator")


def log_spiral(eps: float, dim: int = 2) -> LipschitzMap:
    """Rotate the (x, y) plane by eps * sin(ln r), r = |(x, y)|; identity at 0."""
    def rot(x, sign):
        r = np.linalg.norm(x[:, :2], axis=1)
        ang = np.zeros_like(r)
        nz = r > 0
        ang[nz] = sign * eps * np.sin(np.log(r[nz]))
        c, s = np.cos(ang), np.sin(ang)
        out = x.copy()
        out[:, 0] = c * x[:, 0] - s * x[:, 1]
        out[:, 1] = s * x[:, 0] + c * x[:, 1]
        return out

    return LipschitzMap(lambda x: rot(x, 1.0), dim, inverse=lambda y: rot(y, -1.0),
                        name=f"log-spiral({eps:g})")


def composite(maps: list[LipschitzMap]) -> LipschitzMap:
    """Apply maps in list order: composite([f, g])(x) = g(f(x))."""
    if not maps:
        raise ValueError("composite needs at least one map")
    dim = maps[0].dim
    if any(m.dim != dim for m in maps):
        raise ValueError("composite maps must share a dimension")

    def fwd(x):
        for m in maps:
            x = m._call(x)
        return x

    inv = None
    if all(m.inverse is not None for m in maps):
        def inv(y):
            for m in reversed(maps):
                y = m.inverse(y)
            return y

    lin = None
    if all(m.linear_part is not None for m in maps):
        lin = np.eye(dim)
        for m in maps:
            lin = m.linear_part @ lin
    return LipschitzMap(fwd, dim, inverse=inv,
                        name="composite(" + ",".join(m.name for m in maps) + ")", linear_part=lin)


MAP_IDS = ("identity", "rotation", "shear-abs", "shear-linear", "oscillator", "log-spiral", "composite")


def _split_args(body: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def parse_map(spec: str, dim: int) -> LipschitzMap:
    """Build a catalog map from strings like 'rotation(30)', 'log-spiral(0.2)',
    'composite(shear-abs,rotation(30))'. Rotation angles are in degrees."""
    m = re.fullmatch(r"\s*([a-z\-]+)\s*(?:\((.*)\))?\s*", spec)
    if not m:
        raise ValueError(f"malformed map id: {spec!r}")
    name, body = m.group(1), m.group(2)
    args = _split_args(body) if body else []
    if name == "identity":
        return identity(dim)
    if name == "rotation":
        return rotation(float(args[0]) if args else 30.0, dim)
    if name == "shear-abs":
        return shear_abs(dim)
    if name == "shear-linear":
        return shear_linear(dim)
    if name == "oscillator":
        return oscillator(dim)
    if name == "log-spiral":
        return log_spiral(float(args[0]) if args else 0.2, dim)
    if name == "composite":
        return composite([parse_map(a, dim) for a in args])
    raise ValueError(f"unknown map id: {name!r}")
