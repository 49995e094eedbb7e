"""Rescaled maps, Arzela-Ascoli derivative estimates and the cone/bundle
inclusion tests for bi-Lipschitz maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import DEFAULT_ALPHA, DirectionSet, as_points, dedup_directions, normalize, one_sided_excess, sphere_grid
from .estimators import ConeGerm, direction_set, geometric_bundle, persistence_limit
from .germs import ScaleSchedule, SetGerm, pushforward_germ
from .lipschitz import LipschitzMap

CAUCHY_REL = 0.02
BOUND_SLACK = 0.05
DEFAULT_GRID = 200


def rescaled_map(h: LipschitzMap, p, t: float) -> LipschitzMap:
    """w -> (h(p + t w) - h(p)) / t, with h's Lipschitz estimates."""
    if not t > 0:
        raise ValueError("t must be positive")
    p = np.asarray(p, dtype=float)
    hp = h(p)

    def fwd(w):
        return (h(p + t * w) - hp) / t

    inv = None
    if h.inverse is not None:
        def inv(y):
            return (h.invert(hp + t * y) - p) / t

    return LipschitzMap(fwd, h.dim, inverse=inv, lip_estimate=h.lip_estimate,
                        inv_lip_estimate=h.inv_lip_estimate, name=f"rescaled({h.name},t={t:g})")


def _sup_dev(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(a - b, axis=-1)))


def _converged(deviations: np.ndarray, lip: float) -> bool:
    return deviations.shape[0] >= 3 and bool(np.all(deviations[-3:] <= CAUCHY_REL * lip))


@dataclass
class AADerivativeEstimate:
    base_point: np.ndarray
    scales: np.ndarray
    grid: np.ndarray
    samples: np.ndarray            # (scales, probes, n)
    cauchy_deviation: np.ndarray   # (scales - 1,)
    converged: bool
    limit_samples: np.ndarray | None
    lip_estimate: float
    bound_ok: bool
    spread: float                  # largest sup-norm distance between any two scales
    h: LipschitzMap = field(repr=False, compare=False, default=None)

    def limit_map(self, w) -> np.ndarray:
        """Finest-scale rescaled map at arbitrary w (equals limit_samples on the grid)."""
        return rescaled_map(self.h, self.base_point, float(self.scales[-1]))(np.asarray(w, dtype=float))


def aa_derivative(h: LipschitzMap, p, schedule: ScaleSchedule, grid_density: int = DEFAULT_GRID) -> AADerivativeEstimate:
    """Rescaled maps of h at p along t_k on a deterministic probe grid."""
    if schedule.count < 5:
        raise ValueError("aa_derivative needs a schedule with at least 5 scales")
    p = np.asarray(p, dtype=float)
    grid = sphere_grid(h.dim, grid_density)
    hp = h(p)
    samples = np.stack([(h(p + t * grid) - hp) / t for t in schedule.radii])
    dev = np.array([_sup_dev(samples[k + 1], samples[k]) for k in range(samples.shape[0] - 1)])
    diffs = np.linalg.norm(samples[:, None] - samples[None, :], axis=-1).max(axis=-1)
    conv = _converged(dev, h.lip_estimate)
    bound_ok = bool(np.all(np.linalg.norm(samples, axis=-1) <= h.lip_estimate + BOUND_SLACK))
    return AADerivativeEstimate(p, schedule.radii, grid, samples, dev, conv,
                                samples[-1].copy() if conv else None, h.lip_estimate, bound_ok,
                                float(diffs.max()), h)


@dataclass
class RadialLimitReport:
    converged: bool
    limit: np.ndarray | None
    deviations: np.ndarray
    values: np.ndarray


def radial_limit_check(h: LipschitzMap, v, schedule: ScaleSchedule) -> RadialLimitReport:
    """Convergence of h(t v) / t along t_k."""
    v = np.asarray(v, dtype=float)
    vals = np.stack([h(t * v) / t for t in schedule.radii])
    dev = np.linalg.norm(np.diff(vals, axis=0), axis=1)
    conv = _converged(dev, h.lip_estimate)
    return RadialLimitReport(conv, vals[-1].copy() if conv else None, dev, vals)


# --- inclusion -----------------------------------------------------------------

@dataclass
class InclusionReport:
    excess: float
    tol: float
    holds: bool
    direction_count: int
    flags: list[str] = field(default_factory=list)


def map_directions(h: LipschitzMap | AADerivativeEstimate, vertex, dirs: np.ndarray,
                   delta: float) -> np.ndarray:
    """Normalized images of directions under a map at `vertex` (secant at scale delta)
    or under a derivative estimate."""
    if isinstance(h, AADerivativeEstimate):
        img = h.limit_map(dirs)
    else:
        vertex = np.asarray(vertex, dtype=float)
        img = h(vertex + delta * dirs) - h(vertex)
    return normalize(img)


def inclusion_check(h: LipschitzMap | AADerivativeEstimate, source: ConeGerm, target: ConeGerm,
                    tol: float = 2 * DEFAULT_ALPHA, delta: float | None = None) -> InclusionReport:
    """Excess of the mapped source link over the target link."""
    if source.link.empty:
        raise ValueError("source link must be non-empty")
    delta = ScaleSchedule().finest if delta is None else delta
    mapped = map_directions(h, source.vertex, source.link.members, delta)
    n = source.link.members.shape[0]
    if target.link.empty:
        return InclusionReport(math.inf, tol, False, n, ["empty target link"])
    excess = float(np.max(target.link.angle_to(mapped)))
    return InclusionReport(excess, tol, excess <= tol, n)


def capped_schedule(schedule: ScaleSchedule, p) -> ScaleSchedule:
    """Keep rescaling inside ball(p, |p| / 4) so it cannot reach across the origin."""
    norm = float(np.linalg.norm(p))
    if norm == 0 or schedule.r0 <= norm / 4:
        return schedule
    return replace(schedule, r0=norm / 4)


# --- A-directional test --------------------------------------------------------------

SubsetSpec = Callable[[int, np.random.Generator], np.ndarray]


def axis_subset(dim: int, axis: int = 0, sign: int = 1, count: int = 8, ratio: float = 0.5,
                start: float = 0.5) -> np.ndarray:
    """Points start * ratio^m on one coordinate half-axis (sign=+1/-1) or, with
    sign=0, alternating between both halves."""
    pts = np.zeros((count, dim))
    mags = start * ratio ** np.arange(count)
    signs = np.ones(count) * sign if sign else np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
    pts[:, axis] = signs * mags
    return pts


@dataclass
class DirectionalReport:
    derivative_cauchy: bool
    pointwise_inclusion: bool
    coverage: bool
    verdict: bool
    derivative_deviations: np.ndarray
    inclusion_excess: np.ndarray
    coverage_excess: float
    point_count: int
    flags: list[str] = field(default_factory=lambda: ["finite-scale verdict: finest sampled neighbourhood only"])


def _resolve_subset(subset_spec, germ: SetGerm, seed: int) -> np.ndarray:
    if callable(subset_spec):
        pts = subset_spec(seed)
    else:
        pts = subset_spec
    pts = as_points(pts, germ.ambient_dim)
    order = np.argsort(-np.linalg.norm(pts - germ.base_point, axis=1), kind="stable")
    return pts[order]


def _derivative_sequence(h: LipschitzMap, pts: np.ndarray, schedule: ScaleSchedule, grid_density: int):
    ests = [aa_derivative(h, p, capped_schedule(schedule, p), grid_density) for p in pts]
    finals = np.stack([e.samples[-1] for e in ests])
    dev = np.array([_sup_dev(finals[i + 1], finals[i]) for i in range(len(ests) - 1)])
    return ests, dev


def directional_test(h: LipschitzMap, germ: SetGerm, subset_spec, schedule: ScaleSchedule,
                     alpha: float = DEFAULT_ALPHA, seed: int = 42, grid_density: int = DEFAULT_GRID,
                     count: int = 400, bundle_kwargs: dict | None = None) -> DirectionalReport:
    """Finite-scale check that h is A-directional along the subset D.

    (a) derivatives d_p h at p in D (ordered by decreasing |p|) are Cauchy on
    the probe grid; (b) d_p h maps LD_p(A) into LD_{h(p)}(h(A)) for every p;
    (c) the bundle of A at the base point is within 2 alpha of the union of
    the LD_p(A).
    """
    pts = _resolve_subset(subset_spec, germ, seed)
    norms = np.linalg.norm(pts - germ.base_point, axis=1)
    if pts.shape[0] < 2 or norms.min() > schedule.finest or np.any(norms == 0):
        raise ValueError("subset must contain >= 2 points of A minus p accumulating at p "
                         "(closest one within the finest scale)")
    ests, dev = _derivative_sequence(h, pts, schedule, grid_density)
    cauchy = _converged(dev, h.lip_estimate)

    image = pushforward_germ(h, germ)
    excess, union = [], []
    for p, est in zip(pts, ests):
        sch = capped_schedule(schedule, p)
        src = direction_set(germ.at(p), sch, alpha, count, seed).limit
        tgt = direction_set(image.at(h(p)), sch, alpha, count, seed).limit
        union.append(src.members)
        if src.empty:
            excess.append(math.inf)
            continue
        rep = inclusion_check(est, ConeGerm(p, src, alpha), ConeGerm(h(p), tgt, alpha), 2 * alpha)
        excess.append(rep.excess)
    excess = np.asarray(excess)
    pointwise = bool(np.all(excess <= 2 * alpha))

    kwargs = dict(q_count=64, dir_count=64)
    kwargs.update(bundle_kwargs or {})
    bundle = geometric_bundle(germ, schedule, ScaleSchedule(r0=1e-3, gamma=0.5, count=4), alpha=alpha,
                              seed=seed, **kwargs)
    covered = DirectionSet(np.concatenate(union), alpha) if union else DirectionSet(np.zeros((0, germ.ambient_dim)))
    cov_excess = one_sided_excess(bundle.limit, covered)
    coverage = cov_excess <= 2 * alpha
    return DirectionalReport(cauchy, pointwise, coverage, cauchy and pointwise and coverage,
                             dev, excess, cov_excess, pts.shape[0])


# --- sequence version -------------------------------------------------------------------

@dataclass
class SequenceInclusionReport:
    source_limit: DirectionSet
    target_limit: DirectionSet
    inclusion: InclusionReport
    bundle_inclusion: InclusionReport | None
    derivative_deviations: np.ndarray
    derivative_cauchy: bool


def sequence_inclusion_check(h: LipschitzMap, germ: SetGerm, base_sequence, schedule: ScaleSchedule,
                             alpha: float = DEFAULT_ALPHA, seed: int = 42, grid_density: int = DEFAULT_GRID,
                             count: int = 400, bundle: bool = True,
                             bundle_kwargs: dict | None = None) -> SequenceInclusionReport:
    """Limits of LD_{p_m}(A) and LD_{h(p_m)}(h(A)) and the inclusion of the
    mapped source limit in the target limit (and in the image bundle)."""
    seq = as_points(base_sequence, germ.ambient_dim)
    norms = np.linalg.norm(seq - germ.base_point, axis=1)
    if np.any(np.diff(norms) > 1e-12):
        raise ValueError("base_sequence norms must be non-increasing")
    image = pushforward_germ(h, germ)
    src_sets, tgt_sets = [], []
    for p in seq:
        sch = capped_schedule(schedule, p)
        src_sets.append(direction_set(germ.at(p), sch, alpha, count, seed).limit)
        tgt_sets.append(direction_set(image.at(h(p)), sch, alpha, count, seed).limit)
    src = persistence_limit(src_sets, 2 * alpha)
    tgt = persistence_limit(tgt_sets, 2 * alpha)

    ests, dev = _derivative_sequence(h, seq, schedule, grid_density)
    # short sequences: every available consecutive deviation must be small
    cauchy = bool(np.all(dev[-3:] <= CAUCHY_REL * h.lip_estimate)) if dev.size else ests[0].converged
    if src.empty:
        inc = InclusionReport(math.inf, 2 * alpha, False, 0, ["empty source limit"])
    else:
        inc = inclusion_check(ests[-1], ConeGerm(seq[-1], src, alpha), ConeGerm(h(seq[-1]), tgt, alpha),
                              2 * alpha)
    if not cauchy:
        inc.holds = False
        inc.flags.append("inconclusive: derivatives along the sequence are not Cauchy")

    bundle_rep = None
    if bundle and np.all(norms > 0):
        kwargs = dict(bundle_kwargs or {})
        est = geometric_bundle(image, schedule, ScaleSchedule(r0=1e-3, gamma=0.5, count=4), alpha=alpha,
                               seed=seed, **kwargs)
        if tgt.empty:
            bundle_rep = InclusionReport(math.inf, 2 * alpha, False, 0, ["empty target limit"])
        else:
            ex = one_sided_excess(tgt, est.limit)
            bundle_rep = InclusionReport(ex, 2 * alpha, ex <= 2 * alpha, len(tgt))
    return SequenceInclusionReport(src, tgt, inc, bundle_rep, dev, cauchy)


def derivative_image(est: AADerivativeEstimate, link: DirectionSet) -> DirectionSet:
    """d_p h applied to a direction set, normalized and deduplicated."""
    if link.empty:
        return link
    return dedup_directions(normalize(est.limit_map(link.members)), link.resolution_alpha)
