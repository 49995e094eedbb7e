"""Independent oracles for the test suite (no code shared with the library)."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

PLANE_NORMALS = np.array([[1.0, 0.0, -1.0], [1.0, 0.0, 1.0], [0.0, 1.0, -1.0], [0.0, 1.0, 1.0]]) / math.sqrt(2)


def arc_normal_range(t: float) -> tuple[float, float]:
    """Outward-normal angles (lo, hi) of the circle arc from (-1,-1) to (1,-1) below y = -1."""
    hi = math.atan2(-1.0 - t, 1.0)
    lo = math.atan2(-1.0 - t, -1.0)
    if lo > hi:
        lo -= 2 * math.pi
    return lo, hi


def in_fan(x, y, t: float) -> np.ndarray:
    """Points of the plane z = 1 lying on some tangent line of the arc C_t."""
    radius = math.sqrt(1.0 + (t + 1.0) ** 2)
    dx, dy = np.asarray(x, float), np.asarray(y, float) - t
    rho = np.hypot(dx, dy)
    out = np.zeros(np.broadcast(dx, dy).shape, dtype=bool)
    ok = rho >= radius
    psi = np.arctan2(dy, dx)[ok]
    beta = np.arccos(np.clip(radius / rho[ok], -1.0, 1.0))
    lo, hi = arc_normal_range(t)
    hit = np.zeros(psi.shape, dtype=bool)
    for phi in (psi + beta, psi - beta):
        hit |= np.mod(phi - lo, 2 * math.pi) <= hi - lo
    out[ok] = hit
    return out


def section_count(t: float, extent: float = 4.0, n: int = 2000) -> int:
    """m_1(t): components of the complement of S_t in the window of the plane z = 1."""
    h = 2 * extent / n
    c = -extent + (np.arange(n) + 0.5) * h
    x, y = np.meshgrid(c, c, indexing="ij")
    eps = 0.5 * h
    active = (np.abs(x - 1) <= eps) | (np.abs(x + 1) <= eps) | (np.abs(y - 1) <= eps) | in_fan(x, y, t)
    _, count = ndimage.label(~active)
    return int(count)


def _latlon_graph(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell centers (n rows x 2n columns) and 4-adjacency edges with longitude wrap and
    cross-pole links in the first and last rows."""
    lat = -math.pi / 2 + (np.arange(n) + 0.5) * math.pi / n
    lon = (np.arange(2 * n) + 0.5) * math.pi / n
    la, lo = np.meshgrid(lat, lon, indexing="ij")
    dirs = np.stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)], axis=-1).reshape(-1, 3)
    idx = np.arange(n * 2 * n).reshape(n, 2 * n)
    edges = [np.stack([idx[:, :].ravel(), np.roll(idx, -1, axis=1).ravel()], 1),
             np.stack([idx[:-1].ravel(), idx[1:].ravel()], 1),
             np.stack([idx[0, :n], idx[0, n:]], 1),
             np.stack([idx[-1, :n], idx[-1, n:]], 1)]
    return dirs, np.concatenate(edges)


def sphere_count(link_predicate, n: int = 720) -> int:
    """Components of the complement of a link on S^2 (lat-lon grid flood fill)."""
    dirs, edges = _latlon_graph(n)
    free = ~link_predicate(dirs, math.pi / n)
    e = edges[free[edges[:, 0]] & free[edges[:, 1]]]
    m = dirs.shape[0]
    graph = coo_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(m, m))
    _, labels = connected_components(graph, directed=False)
    return int(np.unique(labels[free]).size)


def planes_predicate(normals):
    normals = np.asarray(normals, float)

    def pred(d, eps):
        return np.any(np.abs(d @ normals.T) <= math.sin(eps), axis=1)

    return pred


def bt_link_predicate(t: float):
    """Link of the union of the tangent planes of B_t: three face planes plus the fan."""
    planes = planes_predicate(PLANE_NORMALS[:3])

    def pred(d, eps):
        z = d[:, 2]
        x, y = d[:, 0] / z, d[:, 1] / z
        return planes(d, eps) | in_fan(x, y, t)

    return pred


def arrangement_regions(normals) -> int:
    """Regions of S^2 cut by great circles in general position: F = E - V + 2."""
    k = len(normals)
    vertices = 2 * math.comb(k, 2)
    edges = 2 * vertices if k > 1 else 0
    return edges - vertices + 2 if k > 1 else 2
