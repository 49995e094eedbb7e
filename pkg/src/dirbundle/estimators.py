"""Direction sets, tangent cones, geometric directional bundles, the SSP
gap test, local dimension and tangent planes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (DEFAULT_ALPHA, DirectionSet, Frame, InsufficientDataError, as_points,
                   cover_count, dedup_directions, empty_direction_set, normalize, principal_directions)
from .germs import RESIDUAL_TOL, ScaleSchedule, SetGerm, sample_annulus

logger = logging.getLogger(__name__)

SSP_PASS = 0.05
SSP_FAIL = 0.15
SSP_TREND_SLACK = 5e-3
DIM_CONFIDENCE = 0.35
TANGENT_REL = 0.1
TANGENT_GAP = 5.0


class NoGapError(InsufficientDataError):
    """The local sample spectrum shows no tangent/normal separation."""


# --- cones -------------------------------------------------------------------

@dataclass(frozen=True)
class ConeGerm:
    vertex: np.ndarray
    link: DirectionSet
    tolerance: float = DEFAULT_ALPHA

    def contains(self, x) -> np.ndarray:
        x = as_points(x, self.link.dim)
        v = x - self.vertex
        r = np.linalg.norm(v, axis=1)
        out = r == 0
        nz = ~out
        if nz.any():
            out[nz] = self.link.angle_to(v[nz] / r[nz, None]) <= self.tolerance
        return out


def cone_membership(cone: ConeGerm, x) -> bool | np.ndarray:
    x = np.asarray(x, dtype=float)
    res = cone.contains(np.atleast_2d(x))
    return bool(res[0]) if x.ndim == 1 else res


# --- direction sets ----------------------------------------------------------

@dataclass
class DirectionEstimate:
    limit: DirectionSet
    scales: np.ndarray
    per_scale: list[DirectionSet]
    warnings: list[str] = field(default_factory=list)

    @property
    def finest(self) -> DirectionSet:
        return self.per_scale[-1]


def persistence_limit(per_scale: list[DirectionSet], tol: float, depth: int = 3,
                      pool: bool = False) -> DirectionSet:
    """Members of the last non-empty set within `tol` of some member of each of
    the last `depth` non-empty sets.

    With pool=True candidates come from all of the last `depth` sets (each
    must persist in all of them), then are deduplicated at the resolution.
    """
    sets = [s for s in per_scale if not s.empty]
    if not sets:
        dim = per_scale[0].dim if per_scale else 3
        alpha = per_scale[0].resolution_alpha if per_scale else DEFAULT_ALPHA
        return empty_direction_set(dim, alpha)
    window = sets[-depth:]
    last = sets[-1]
    if not pool:
        keep = np.ones(len(last), dtype=bool)
        for s in window[:-1]:
            keep &= s.angle_to(last.members) <= tol
        return DirectionSet(last.members[keep], last.resolution_alpha)
    kept = []
    for i in range(len(window) - 1, -1, -1):
        cand = window[i].members
        keep = np.ones(cand.shape[0], dtype=bool)
        for j, s in enumerate(window):
            if j != i:
                keep &= s.angle_to(cand) <= tol
        kept.append(cand[keep])
    return dedup_directions(np.concatenate(kept), last.resolution_alpha)


def directions_from_points(points: np.ndarray, center: np.ndarray, alpha: float) -> DirectionSet:
    v = points - center
    v = v[np.linalg.norm(v, axis=1) > 0]
    if v.shape[0] == 0:
        return empty_direction_set(center.shape[0], alpha)
    return dedup_directions(normalize(v), alpha)


def direction_set(germ: SetGerm, schedule: ScaleSchedule, alpha: float = DEFAULT_ALPHA,
                  count: int = 400, seed: int = 42) -> DirectionEstimate:
    """Per-scale normalized secant sets and their persistence limit (tolerance 2 alpha)."""
    if schedule.count < 4:
        raise ValueError("direction_set needs a schedule with at least 4 scales")
    samples = sample_annulus(germ, schedule, count, seed)
    per_scale = [directions_from_points(s.points, germ.base_point, alpha) for s in samples]
    warnings = [f"empty shell at r={s.scale:.6g}" for s in samples if s.empty_shell]
    limit = persistence_limit(per_scale, 2 * alpha)
    if limit.empty:
        warnings.append("empty direction set")
        logger.warning("%s: empty direction set", germ.name)
    return DirectionEstimate(limit, schedule.radii, per_scale, warnings)


# --- geometric directional bundle ---------------------------------------------

@dataclass
class BundleEstimate:
    base_point: np.ndarray
    base_scales: np.ndarray
    per_scale_unions: list[DirectionSet]
    limit: DirectionSet
    point_directions: DirectionSet
    q_counts: list[int]
    warnings: list[str] = field(default_factory=list)
    flags: tuple[str, ...] = ("limit: persistence extraction over the last 3 base scales",)


def _local_direction_sets(germ: SetGerm, qs: np.ndarray, base_scale: float, dir_schedule: ScaleSchedule,
                          dir_count: int, alpha: float, rng: np.random.Generator, tol: float | None = None,
                          pool: bool = False) -> list[DirectionSet]:
    """D_q for each row q, with dir_schedule measured in units of base_scale."""
    per_q: list[list[DirectionSet]] = [[] for _ in range(qs.shape[0])]
    for k in range(dir_schedule.count):
        lo, hi = dir_schedule.shell(k)
        batch = germ.sample_many(qs, lo * base_scale, hi * base_scale, dir_count, rng)
        for i, (pts, _) in enumerate(batch):
            per_q[i].append(directions_from_points(pts, qs[i], alpha))
    tol = 2 * alpha if tol is None else tol
    return [persistence_limit(sets, tol, pool=pool) for sets in per_q]


def geometric_bundle(germ: SetGerm, base_schedule: ScaleSchedule, dir_schedule: ScaleSchedule,
                     q_count: int = 256, alpha: float = DEFAULT_ALPHA, seed: int = 42,
                     dir_count: int = 128, point_count: int = 400, curve_points: int = 8,
                     persistence_tol: float | None = None, pool: bool = False) -> BundleEstimate:
    """Union over q near p of the direction sets D_q, per base scale, plus D_p.

    `dir_schedule` is relative: at base scale s_j the local radii are
    s_j * dir_schedule.radii. Points on the germ's declared special curves
    are added to the random base points at every scale. The limit keeps
    members of the finest union lying within `persistence_tol` (default
    2 alpha, as for direction_set) of each of the two previous unions.
    """
    if dir_schedule.r0 * (1 + dir_schedule.shell_width) > 0.2:
        raise ValueError("dir_schedule must probe well inside the base scale (relative r0 <= 0.2)")
    if q_count < 1:
        raise ValueError("q_count must be positive")
    tol = 2 * alpha if persistence_tol is None else persistence_tol
    at_p = direction_set(germ, base_schedule, alpha, point_count, seed).limit
    samples = sample_annulus(germ, base_schedule, q_count, seed)
    unions, warnings, q_counts = [], [], []
    for j, sample in enumerate(samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, j, 1]))
        qs = sample.points
        extra = germ.curve_points(sample.scale, curve_points, rng)
        if extra.shape[0]:
            qs = np.concatenate([qs, extra])
        if sample.empty_shell:
            warnings.append(f"empty shell at r={sample.scale:.6g}")
        q_counts.append(int(qs.shape[0]))
        raw = [at_p.members]
        if qs.shape[0]:
            raw += [d.members for d in _local_direction_sets(germ, qs, sample.scale, dir_schedule,
                                                              dir_count, alpha, rng, tol, pool)]
        unions.append(dedup_directions(np.concatenate(raw), alpha))
    limit = persistence_limit(unions, tol, pool=pool)
    return BundleEstimate(germ.base_point.copy(), base_schedule.radii, unions, limit, at_p, q_counts, warnings)


def bundle_cone(estimate: BundleEstimate, tolerance: float = DEFAULT_ALPHA) -> ConeGerm:
    return ConeGerm(np.asarray(estimate.base_point, dtype=float), estimate.limit, tolerance)


def tangent_cone(estimate: DirectionEstimate, vertex, tolerance: float = DEFAULT_ALPHA) -> ConeGerm:
    return ConeGerm(np.asarray(vertex, dtype=float), estimate.limit, tolerance)


# --- SSP ---------------------------------------------------------------------

@dataclass
class SspReport:
    scales: np.ndarray
    gap_ratios: np.ndarray
    verdict: str
    final_ratio: float
    probe_count: int
    flags: list[str] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.gap_ratios)) if self.gap_ratios.size else math.nan


def _spread(members: np.ndarray, cap: int) -> np.ndarray:
    if members.shape[0] <= cap:
        return members
    return members[np.linspace(0, members.shape[0] - 1, cap).round().astype(int)]


def ssp_test(germ: SetGerm, probe: DirectionSet, schedule: ScaleSchedule, radial_steps: int = 9,
             max_probes: int = 64) -> SspReport:
    """Gap ratios dist(p + s d, A) / s over probe directions d.

    At scale r_k the radius s runs over `radial_steps` evenly spaced values
    of the shell [r_k(1 - w), r_k(1 + w)], so sets whose gaps avoid the
    nominal radii are still caught.
    """
    if probe.empty:
        raise ValueError("probe direction set must be non-empty")
    dirs = _spread(probe.members, max_probes)
    p = germ.base_point
    ratios, flags = [], []
    for k, r in enumerate(schedule.radii):
        lo, hi = schedule.shell(k)
        s = np.linspace(lo, hi, radial_steps) if radial_steps > 1 else np.array([r])
        x = (p + dirs[:, None, :] * s[None, :, None]).reshape(-1, p.shape[0])
        d = germ.distance(x, float(r)) / np.tile(s, dirs.shape[0])
        ratios.append(float(np.max(d)))
    ratios = np.asarray(ratios)
    if not np.all(np.isfinite(ratios)):
        flags.append("no set point found near a probe (infinite distance)")
        return SspReport(schedule.radii, ratios, "fail", float(ratios[-1]), dirs.shape[0], flags)
    half = ratios[len(ratios) // 2:]
    trend = bool(np.all(np.diff(half) <= SSP_TREND_SLACK))
    if ratios[-1] <= SSP_PASS and trend:
        verdict = "pass"
    elif np.sum(ratios[-3:] >= SSP_FAIL) >= 2:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return SspReport(schedule.radii, ratios, verdict, float(ratios[-1]), dirs.shape[0], flags)


# --- dimension ---------------------------------------------------------------

@dataclass
class DimensionEstimate:
    value: int
    slope: float
    residual: float
    link_dimension: int
    confident: bool
    counts: list[int]
    flags: list[str] = field(default_factory=list)


def link_dimension(link: DirectionSet, alpha: float | None = None) -> DimensionEstimate:
    """Covering-number slope of a direction set at radii alpha, 2 alpha, 4 alpha, 8 alpha.

    `value` is the dimension of the cone over the link (link dimension + 1),
    or 0 for an empty link.
    """
    alpha = link.resolution_alpha if alpha is None else alpha
    if link.empty:
        return DimensionEstimate(0, 0.0, 0.0, -1, True, [0, 0, 0, 0], ["empty link"])
    radii = alpha * 2.0 ** np.arange(4)
    counts = [cover_count(link.members, r) for r in radii]
    xs = -np.log(radii)
    ys = np.log(counts)
    a = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(a, ys, rcond=None)
    slope = float(coef[0])
    fit = a @ coef
    residual = float(np.sqrt(np.mean((ys - fit) ** 2)))
    k = max(0, int(round(slope)))
    return DimensionEstimate(k + 1, slope, residual, k, abs(slope - k) <= DIM_CONFIDENCE, counts)


def local_dimension(germ: SetGerm, q, schedule: ScaleSchedule, seed: int = 42, alpha: float = DEFAULT_ALPHA,
                    count: int = 600) -> DimensionEstimate:
    """Dimension of A at q from the covering slope of the finest-scale direction set."""
    q = np.asarray(q, dtype=float)
    if np.linalg.norm(q - germ.base_point) > 1.0 + 1e-12:
        raise ValueError("q must lie within distance 1 of the base point")
    est = direction_set(germ.at(q), schedule, alpha, count, seed)
    finest = est.finest
    out = link_dimension(finest, alpha)
    if finest.empty:
        out.flags.append("inconclusive: no directions at the finest scale")
    return out


# --- tangent planes ----------------------------------------------------------

def tangent_plane(germ: SetGerm, q, radius: float, count: int = 400, seed: int = 42) -> Frame:
    """PCA frame of A near q; leading vectors span the tangent space."""
    q = np.asarray(q, dtype=float)
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    pts, _ = germ.sample_near(q, 0.0, radius, count, rng, RESIDUAL_TOL)
    frame = principal_directions(pts, q)
    sv = frame.singular_values
    k = int(np.sum(sv > TANGENT_REL * sv[0]))
    if k < sv.shape[0] and sv[k] > 0 and sv[k - 1] < TANGENT_GAP * sv[k]:
        raise NoGapError(f"no spectral gap at radius {radius:g}: singular values {sv}")
    return Frame(frame.basis, sv, k)


# --- export ------------------------------------------------------------------

def direction_rows(scales, sets: list[DirectionSet], limit: DirectionSet | None = None) -> list[list[float]]:
    """CSV rows (scale, x, y[, z]); limit members are tagged with scale 0."""
    rows = []
    for s, ds in zip(scales, sets):
        rows += [[float(s)] + m.tolist() for m in ds.members]
    if limit is not None:
        rows += [[0.0] + m.tolist() for m in limit.members]
    return rows


def write_directions_csv(path, scales, sets: list[DirectionSet], limit: DirectionSet | None = None) -> None:
    dim = (limit.dim if limit is not None else sets[0].dim)
    header = ["scale"] + ["x", "y", "z"][:dim]
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in direction_rows(scales, sets, limit)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

