"""Self-checks of the independent oracles used by the topology tests."""

from __future__ import annotations

import pytest

from oracles import PLANE_NORMALS, arrangement_regions, bt_link_predicate, section_count, sphere_count


@pytest.mark.parametrize("t,m1", [(-2.0, 3), (-1.25, 4), (-1.0, 2), (0.0, 9)])
def test_section_counts(t, m1):
    assert section_count(t) == m1


@pytest.mark.parametrize("t,m", [(-2.0, 6), (-1.0, 4), (0.0, 14)])
def test_sphere_counts(t, m):
    assert sphere_count(bt_link_predicate(t)) == m


def test_arrangement_euler_count():
    assert arrangement_regions(PLANE_NORMALS) == 14
    assert arrangement_regions(PLANE_NORMALS[:1]) == 2
    assert arrangement_regions(PLANE_NORMALS[:2]) == 4


def test_lens_case_sphere_count_from_section():
    # the lenses at t = -1.25 are too thin for the lat-lon grid; the section regions
    # come in antipodal pairs on the sphere and the equator is covered
    assert 2 * section_count(-1.25) == 8
