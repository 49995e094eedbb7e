"""Shared numeric primitives: unit vectors, direction sets, PCA frames, union-find."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

DEFAULT_ALPHA = math.radians(2.0)
UNIT_TOL = 1e-9


class InsufficientDataError(ValueError):
    """Raised when an estimator has too few usable samples."""


def as_points(x, dim: int | None = None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {arr.shape[1]}")
    return arr


def normalize(v: np.ndarray) -> np.ndarray:
    """Row-normalize; zero rows are returned as NaN rows."""
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = v / norms
    out[np.broadcast_to(norms == 0, out.shape)] = np.nan
    return out


def chord(angle: float) -> float:
    """Euclidean distance between two unit vectors separated by `angle`."""
    return 2.0 * math.sin(min(angle, math.pi) / 2.0)


def chord_to_angle(c):
    return 2.0 * np.arcsin(np.clip(np.asarray(c) / 2.0, 0.0, 1.0))


def angle_between(u, v) -> np.ndarray:
    """Angle between unit vectors, accurate for small separations."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return chord_to_angle(np.linalg.norm(u - v, axis=-1))


@dataclass(frozen=True)
class DirectionSet:
    """A finite alpha-resolution sample of a closed subset of the unit sphere."""

    members: np.ndarray
    resolution_alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        m = np.asarray(self.members, dtype=float)
        if m.ndim != 2:
            raise ValueError("members must be a 2-D array (count, dim)")
        if not self.resolution_alpha > 0:
            raise ValueError("resolution_alpha must be positive")
        object.__setattr__(self, "members", m)

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    def __len__(self) -> int:
        return self.members.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0

    def angle_to(self, x) -> np.ndarray:
        """Minimum angle from each unit row of `x` to the set (inf if empty)."""
        x = as_points(x)
        if self.empty:
            return np.full(x.shape[0], np.inf)
        d, _ = cKDTree(self.members).query(x, k=1)
        return chord_to_angle(d)

    def antipodal(self) -> DirectionSet:
        return DirectionSet(-self.members, self.resolution_alpha)


def empty_direction_set(dim: int, alpha: float = DEFAULT_ALPHA) -> DirectionSet:
    return DirectionSet(np.zeros((0, dim)), alpha)


def check_unit(raw: np.ndarray, tol: float = UNIT_TOL) -> None:
    if raw.size and not np.all(np.abs(np.linalg.norm(raw, axis=1) - 1.0) <= tol):
        raise ValueError("directions must be unit vectors")


def dedup_directions(raw, alpha: float = DEFAULT_ALPHA, *, chunk: int = 2048) -> DirectionSet:
    """Greedy in-order representative selection at angular resolution `alpha`.

    A raw direction becomes a member unless an earlier member lies within
    `alpha` of it. Members therefore keep the input order, every raw
    direction is within `alpha` of some member, and members are pairwise
    more than `alpha` apart.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("raw directions must be a 2-D array")
    check_unit(raw)
    c = chord(alpha)
    kept: list[np.ndarray] = []
    tree = None
    for start in range(0, raw.shape[0], chunk):
        block = raw[start:start + chunk]
        if tree is not None:
            d, _ = tree.query(block, k=1, distance_upper_bound=c * (1 + 1e-12))
            block = block[~(d <= c)]
        if block.shape[0] == 0:
            continue
        # sequential greedy inside the block: |u - v|^2 = 2 - 2 u.v for unit rows
        gram = block @ block.T >= 1.0 - 0.5 * c * c * (1 + 1e-12)
        covered = np.zeros(block.shape[0], dtype=bool)
        chosen = []
        while True:
            i = int(np.argmin(covered))
            if covered[i]:
                break
            chosen.append(i)
            covered |= gram[i]
        kept.append(block[chosen])
        tree = cKDTree(np.concatenate(kept))
    members = np.concatenate(kept) if kept else np.zeros((0, raw.shape[1]))
    return DirectionSet(members, alpha)


def one_sided_excess(s1: DirectionSet, s2: DirectionSet) -> float:
    """max over u in s1 of the angle from u to s2."""
    if s1.empty:
        return 0.0
    if s2.empty:
        return math.inf
    return float(np.max(s2.angle_to(s1.members)))


def hausdorff_angle(s1: DirectionSet, s2: DirectionSet) -> float:
    if s1.empty and s2.empty:
        return 0.0
    if s1.empty or s2.empty:
        return math.inf
    return max(one_sided_excess(s1, s2), one_sided_excess(s2, s1))


@dataclass(frozen=True)
class Frame:
    basis: np.ndarray
    singular_values: np.ndarray
    tangent_dim: int | None = None

    @property
    def normals(self) -> np.ndarray:
        k = self.tangent_dim if self.tangent_dim is not None else self.basis.shape[0]
        return self.basis[k:]

    @property
    def tangents(self) -> np.ndarray:
        k = self.tangent_dim if self.tangent_dim is not None else self.basis.shape[0]
        return self.basis[:k]


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix.

    Returns (eigenvalues descending, eigenvectors as rows).
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = cs
                rot[p, q] = sn
                rot[q, p] = -sn
                a = rot.T @ a @ rot
                v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    vecs = v[:, order].T
    # deterministic sign: largest-magnitude component positive
    for i in range(n):
        j = int(np.argmax(np.abs(vecs[i])))
        if vecs[i, j] < 0:
            vecs[i] = -vecs[i]
    return w[order], vecs


def principal_directions(points, center) -> Frame:
    """Principal axes of the second-moment matrix of (points - center)."""
    pts = as_points(points)
    center = np.asarray(center, dtype=float)
    d = pts - center
    d = d[np.linalg.norm(d, axis=1) > 0]
    if d.shape[0] < 2:
        raise InsufficientDataError("need at least 2 points distinct from the center")
    cov = d.T @ d / d.shape[0]
    w, vecs = jacobi_eigh(cov)
    sv = np.sqrt(np.clip(w, 0.0, None))
    return Frame(vecs, sv)


def union_find_components(neighbors: np.ndarray, active: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected components of the subgraph induced by active cells.

    `neighbors` is an (N, k) index array padded with -1. Labels are assigned
    in order of first appearance (lowest cell index), inactive cells get -1.
    """
    neighbors = np.asarray(neighbors)
    active = np.asarray(active, dtype=bool)
    n = active.shape[0]
    src = np.repeat(np.arange(n), neighbors.shape[1])
    dst = neighbors.ravel()
    keep = (dst >= 0)
    src, dst = src[keep], dst[keep]
    keep = active[src] & active[dst]
    src, dst = src[keep], dst[keep]
    graph = coo_matrix((np.ones(src.shape[0], dtype=np.int8), (src, dst)), shape=(n, n)).tocsr()
    _, raw = connected_components(graph, directed=False)
    labels = np.full(n, -1, dtype=np.int64)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return 0, labels
    _, first, inverse = np.unique(raw[idx], return_index=True, return_inverse=True)
    # relabel by first appearance for determinism
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    labels[idx] = rank[inverse]
    return int(first.size), labels


def grid_neighbors(rows: int, cols: int, connectivity: int = 4) -> np.ndarray:
    """Neighbor table for a rows x cols grid (row-major cells)."""
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    r, c = np.divmod(np.arange(rows * cols), cols)
    out = np.full((rows * cols, len(offsets)), -1, dtype=np.int64)
    for k, (dr, dc) in enumerate(offsets):
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        out[ok, k] = rr[ok] * cols + cc[ok]
    return out


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic near-uniform points on S^2."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    rho = np.sqrt(1.0 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def sphere_grid(dim: int, density: int) -> np.ndarray:
    """Probe directions: uniform angles for dim=2, Fibonacci sphere for dim=3.

    `density` is the number of points per great circle.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = 2 * math.pi * np.arange(density) / density
        return np.column_stack([np.cos(a), np.sin(a)])
    if dim == 3:
        return fibonacci_sphere(max(4, int(math.ceil(density * density / math.pi))))
    raise ValueError("ambient dimension must be 1, 2 or 3")


def random_unit(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def cover_count(members: np.ndarray, radius: float) -> int:
    """Greedy cover of a finite direction set by caps of the given angular radius."""
    if members.shape[0] == 0:
        return 0
    tree = cKDTree(members)
    c = chord(radius)
    covered = np.zeros(members.shape[0], dtype=bool)
    count = 0
    for i in range(members.shape[0]):
        if covered[i]:
            continue
        count += 1
        covered[tree.query_ball_point(members[i], c * (1 + 1e-12))] = True
    return count
