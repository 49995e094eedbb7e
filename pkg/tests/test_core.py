from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirbundle.core import (DirectionSet, angle_between, chord, chord_to_angle, cover_count, dedup_directions,
                            empty_direction_set, fibonacci_sphere, grid_neighbors, hausdorff_angle, jacobi_eigh,
                            normalize, one_sided_excess, principal_directions, sphere_grid, union_find_components)


def unit_rows(seed: int, count: int, dim: int = 3) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_chord_roundtrip():
    a = np.linspace(0, math.pi, 50)
    assert np.allclose(chord_to_angle(np.array([chord(x) for x in a])), a)


def test_normalize_zero_rows_are_nan():
    out = normalize(np.array([[0.0, 0, 0], [3.0, 4, 0]]))
    assert np.all(np.isnan(out[0]))
    assert np.allclose(out[1], [0.6, 0.8, 0])


def test_direction_set_validation():
    with pytest.raises(ValueError):
        DirectionSet(np.ones(3))
    with pytest.raises(ValueError):
        DirectionSet(np.ones((1, 3)), 0.0)
    assert empty_direction_set(3).empty


@given(st.integers(0, 10_000), st.integers(1, 400), st.floats(0.02, 0.6))
@settings(max_examples=40, deadline=None)
def test_dedup_cover_and_separation(seed, count, alpha):
    raw = unit_rows(seed, count)
    ds = dedup_directions(raw, alpha)
    # every raw direction is within alpha of a member
    assert np.all(ds.angle_to(raw) <= alpha + 1e-9)
    # members are pairwise more than alpha apart
    if len(ds) > 1:
        ang = angle_between(ds.members[:, None, :], ds.members[None, :, :])
        np.fill_diagonal(ang, np.inf)
        assert ang.min() > alpha - 1e-9


def test_dedup_keeps_order_and_rejects_non_unit():
    raw = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 1e-4, 0]])
    raw[2] /= np.linalg.norm(raw[2])
    ds = dedup_directions(raw, 0.01)
    assert np.allclose(ds.members, raw[:2])
    with pytest.raises(ValueError):
        dedup_directions(np.array([[2.0, 0, 0]]))


def test_dedup_chunk_boundary_matches_single_block():
    raw = unit_rows(3, 700)
    a = dedup_directions(raw, 0.1, chunk=64)
    b = dedup_directions(raw, 0.1, chunk=4096)
    assert hausdorff_angle(a, b) <= 0.1 + 1e-9
    assert np.all(a.angle_to(raw) <= 0.1 + 1e-9)


@given(st.integers(0, 1000), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_hausdorff_symmetric_and_zero_on_self(s1, s2):
    a = DirectionSet(unit_rows(s1, 30))
    b = DirectionSet(unit_rows(s2, 40))
    assert hausdorff_angle(a, a) == 0.0
    assert hausdorff_angle(a, b) == pytest.approx(hausdorff_angle(b, a))
    assert hausdorff_angle(a, b) >= one_sided_excess(a, b) - 1e-12


def test_excess_empty_conventions():
    e = empty_direction_set(3)
    a = DirectionSet(unit_rows(0, 5))
    assert one_sided_excess(e, a) == 0.0
    assert one_sided_excess(a, e) == math.inf
    assert hausdorff_angle(e, e) == 0.0
    assert hausdorff_angle(a, e) == math.inf


def test_excess_of_known_sets():
    a = DirectionSet(np.array([[1.0, 0, 0]]))
    b = DirectionSet(np.array([[0.0, 1, 0]]))
    assert one_sided_excess(a, b) == pytest.approx(math.pi / 2)


@given(st.integers(0, 500))
@settings(max_examples=25, deadline=None)
def test_jacobi_matches_numpy(seed):
    m = np.random.default_rng(seed).standard_normal((3, 3))
    a = m @ m.T
    w, v = jacobi_eigh(a)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), atol=1e-9)
    assert np.all(np.diff(w) <= 0)
    # eigenvectors are rows
    assert np.allclose(a @ v.T, v.T * w, atol=1e-8)


def test_principal_directions_of_plane_sample(rng):
    pts = np.column_stack([rng.uniform(-1, 1, 500), rng.uniform(-1, 1, 500), np.zeros(500)])
    f = principal_directions(pts, np.zeros(3))
    assert f.singular_values[-1] < 1e-12
    assert abs(abs(f.basis[2, -1]) - 1) < 1e-9


def test_union_find_counts_and_labels():
    nb = grid_neighbors(3, 3)
    active = np.array([1, 0, 1, 0, 0, 0, 1, 1, 1], dtype=bool)
    n, labels = union_find_components(nb, active)
    assert n == 3
    assert labels[0] == 0 and labels[2] == 1 and labels[6] == labels[7] == labels[8] == 2
    assert np.all(labels[~active] == -1)


@given(st.integers(0, 10_000), st.integers(2, 9), st.integers(2, 9))
@settings(max_examples=40, deadline=None)
def test_union_find_permutation_invariant(seed, rows, cols):
    r = np.random.default_rng(seed)
    active = r.random(rows * cols) < 0.55
    nb = grid_neighbors(rows, cols)
    n, labels = union_find_components(nb, active)
    perm = r.permutation(rows * cols)
    inv = np.argsort(perm)
    nb_p = nb[perm]
    nb_p = np.where(nb_p >= 0, inv[np.clip(nb_p, 0, None)], -1)
    n_p, labels_p = union_find_components(nb_p, active[perm])
    assert n == n_p
    # same partition, possibly relabelled
    pairs = set(zip(labels[perm][active[perm]].tolist(), labels_p[active[perm]].tolist()))
    assert len(pairs) == n


def test_grid_neighbors_symmetric():
    nb = grid_neighbors(4, 5, 8)
    for i, row in enumerate(nb):
        for j in row[row >= 0]:
            assert i in nb[j]


def test_sphere_samplers():
    f = fibonacci_sphere(500)
    assert np.allclose(np.linalg.norm(f, axis=1), 1)
    g = sphere_grid(2, 36)
    assert g.shape == (36, 2) and np.allclose(np.linalg.norm(g, axis=1), 1)
    with pytest.raises(ValueError):
        sphere_grid(4, 10)


def test_cover_count_of_circle():
    th = np.linspace(0, 2 * math.pi, 3600, endpoint=False)
    circle = np.column_stack([np.cos(th), np.sin(th), np.zeros_like(th)])
    n1, n2 = cover_count(circle, 0.1), cover_count(circle, 0.05)
    assert 1.7 < n2 / n1 < 2.3
