"""Pompeiu-type homeomorphism f(x) = sum_n cbrt(x - a_n) / 2^n and its inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DELTAS = (1e-3, 1e-4, 1e-5)


def pompeiu_nodes(n_terms: int, seed: int) -> np.ndarray:
    """Dense-sequence stand-in: n_terms points drawn uniformly in (0, 1)."""
    if n_terms < 1:
        raise ValueError("n_terms must be positive")
    return np.random.default_rng(seed).uniform(0.0, 1.0, n_terms)


def pompeiu_f(x, nodes: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    weights = 0.5 ** np.arange(1, nodes.size + 1)
    return np.sum(np.cbrt(x[..., None] - nodes) * weights, axis=-1)


def pompeiu_fprime(x, nodes: np.ndarray) -> np.ndarray:
    """Derivative of the truncated series; +inf exactly at a node."""
    x = np.asarray(x, dtype=float)
    weights = 0.5 ** np.arange(1, nodes.size + 1)
    gap = np.abs(x[..., None] - nodes)
    with np.errstate(divide="ignore"):
        terms = weights / (3.0 * gap ** (2.0 / 3.0))
    return np.sum(terms, axis=-1)


def pompeiu_inverse(y, nodes: np.ndarray, lo: float = 0.0, hi: float = 1.0, iters: int = 200) -> np.ndarray:
    """g = f^{-1} by bisection; f is strictly increasing."""
    y = np.asarray(y, dtype=float)
    flo, fhi = pompeiu_f(lo, nodes), pompeiu_f(hi, nodes)
    if np.any((y < flo) | (y > fhi)):
        raise ValueError("value outside the range of f on [lo, hi]")
    a = np.full(y.shape, lo)
    b = np.full(y.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = pompeiu_f(mid, nodes) > y
        b = np.where(up, mid, b)
        a = np.where(up, a, mid)
        if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))):
            break
    return 0.5 * (a + b)


@dataclass
class PompeiuTable:
    nodes: np.ndarray
    deltas: tuple[float, ...]
    quotients: np.ndarray          # (probe_count, len(deltas))
    control_point: float
    control_quotients: np.ndarray  # (len(deltas),)
    control_fprime: float
    monotone: bool

    def as_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "deltas": list(self.deltas),
            "quotients": self.quotients.tolist(),
            "control_point": self.control_point,
            "control_quotients": self.control_quotients.tolist(),
            "control_fprime": self.control_fprime,
            "monotone": self.monotone,
        }


def _quotients(x0: float, nodes: np.ndarray, deltas) -> np.ndarray:
    y0 = float(pompeiu_f(x0, nodes))
    ys = np.array([y0 + d for d in deltas])
    g = pompeiu_inverse(ys, nodes, lo=-1.0, hi=2.0)
    return np.abs(g - x0) / np.asarray(deltas)


def pompeiu_demo(n_terms: int = 12, seed: int = 42, probe_count: int = 10, deltas=DELTAS) -> PompeiuTable:
    """Difference quotients of g = f^{-1} at f(a_n) for the first probe_count nodes,
    plus a control point far from every node."""
    if n_terms < 8:
        raise ValueError("n_terms must be at least 8")
    if not 1 <= probe_count <= n_terms:
        raise ValueError("probe_count must lie in [1, n_terms]")
    nodes = pompeiu_nodes(n_terms, seed)
    q = np.array([_quotients(float(a), nodes, deltas) for a in nodes[:probe_count]])
    # control: grid point maximizing the distance to all nodes, kept off the
    # interval ends so that every shifted value stays in the range of f
    grid = np.linspace(0.05, 0.95, 9001)
    gap = np.min(np.abs(grid[:, None] - nodes[None, :]), axis=1)
    x_star = float(grid[np.argmax(gap)])
    ctrl = _quotients(x_star, nodes, deltas)
    monotone = bool(pompeiu_f(0.0, nodes) < pompeiu_f(0.5, nodes) < pompeiu_f(1.0, nodes))
    return PompeiuTable(nodes, tuple(deltas), q, x_star, ctrl, float(pompeiu_fprime(x_star, nodes)), monotone)
