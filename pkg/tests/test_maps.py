from __future__ import annotations

import math

import numpy as np
import pytest

from dirbundle.core import DirectionSet
from dirbundle.estimators import ConeGerm, direction_set
from dirbundle.germs import ScaleSchedule, catalog_germ
from dirbundle.lipschitz import identity, log_spiral, rotation, shear_abs, shear_linear
from dirbundle.maps import (aa_derivative, axis_subset, capped_schedule, derivative_image, directional_test,
                            inclusion_check, radial_limit_check, rescaled_map)

A = math.radians(2.0)
S = ScaleSchedule(0.5, 0.5, 8)


def test_rescaled_linear_map_is_itself():
    h = shear_linear(3)
    r = rescaled_map(h, np.zeros(3), 0.01)
    x = np.random.default_rng(0).standard_normal((10, 3))
    assert np.allclose(r(x), h(x))


def test_aa_derivative_of_linear_map_converges_to_it():
    h = rotation(30.0, 2)
    est = aa_derivative(h, np.zeros(2), S, 64)
    assert est.converged and est.bound_ok
    assert np.allclose(est.limit_samples, h(est.grid))
    with pytest.raises(ValueError):
        aa_derivative(h, np.zeros(2), ScaleSchedule(count=3))


def test_aa_derivative_log_spiral_does_not_converge():
    est = aa_derivative(log_spiral(0.2, 2), np.zeros(2), S, 64)
    assert not est.converged


def test_radial_limit():
    assert radial_limit_check(shear_abs(2), np.array([1.0, 0.0]), S).converged
    assert not radial_limit_check(log_spiral(0.2, 2), np.array([1.0, 0.0]), S).converged


def test_inclusion_identity_and_violation():
    g = catalog_germ("line")
    d = direction_set(g, S, A, 50, 1).limit
    cone = ConeGerm(np.zeros(3), d, A)
    assert inclusion_check(identity(3), cone, cone, 2 * A).holds
    other = ConeGerm(np.zeros(3), DirectionSet(np.array([[1.0, 0, 0]])), A)
    rep = inclusion_check(identity(3), cone, other, 2 * A)
    assert not rep.holds and rep.excess == pytest.approx(math.pi / 2)


def test_derivative_image_of_link():
    est = aa_derivative(shear_linear(3), np.zeros(3), S, 16)
    img = derivative_image(est, DirectionSet(np.array([[1.0, 0, 0]])))
    assert np.allclose(np.linalg.norm(img.members, axis=1), 1)


def test_capped_schedule():
    s = capped_schedule(S, np.array([0.4, 0.0]))
    assert s.r0 == pytest.approx(0.1)
    assert capped_schedule(S, np.zeros(2)) is S


def test_axis_subset():
    p = axis_subset(2, 0, 0, count=4)
    assert np.allclose(p[:, 0], [0.5, -0.25, 0.125, -0.0625])
    assert np.allclose(axis_subset(2, 1, -1, count=2)[:, 1], [-0.5, -0.25])


def test_directional_shear_abs_full_vs_half():
    h = shear_abs(2)
    x_axis = catalog_germ("line", {"dim": 2, "axis": 0})
    assert not directional_test(h, x_axis, axis_subset(2, 0, 0), S, A).verdict
    assert directional_test(h, x_axis, axis_subset(2, 0, 1), S, A).verdict
    with pytest.raises(ValueError):
        directional_test(h, x_axis, np.array([[0.5, 0.0]]), S, A)
