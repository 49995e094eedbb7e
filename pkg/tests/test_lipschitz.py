from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirbundle.lipschitz import (composite, estimate_lipschitz, identity, linear, log_spiral, oscillator, parse_map,
                                 rotation, scaling, shear_abs, shear_linear)

MAPS = [identity(3), rotation(30.0, 3), shear_linear(3), shear_abs(2), oscillator(2), log_spiral(0.2, 2),
        composite([shear_abs(3), rotation(30.0, 3)]), scaling(2.0, 3)]


@pytest.mark.parametrize("h", MAPS, ids=lambda h: h.name)
def test_inverse_roundtrip_and_origin(h):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (100, h.dim))
    assert np.allclose(h.invert(h(x)), x, atol=1e-8)
    assert np.allclose(h(np.zeros(h.dim)), 0)


@pytest.mark.parametrize("h", MAPS, ids=lambda h: h.name)
def test_bi_lipschitz_bounds_hold_on_samples(h):
    r = np.random.default_rng(1)
    a, b = r.uniform(-1, 1, (500, h.dim)), r.uniform(-1, 1, (500, h.dim))
    ratio = np.linalg.norm(h(a) - h(b), axis=1) / np.linalg.norm(a - b, axis=1)
    assert ratio.max() <= h.lip_estimate * 1.05
    assert ratio.min() >= 1 / (h.inv_lip_estimate * 1.05)


def test_rotation_is_isometry():
    h = rotation(30.0, 3)
    m = h.linear_part
    assert np.allclose(m @ m.T, np.eye(3))
    assert h.lip_estimate == pytest.approx(1.0, abs=1e-6)


def test_linear_and_estimate():
    h = linear(np.diag([2.0, 0.5]))
    lip, inv = estimate_lipschitz(h, 2)
    assert lip == pytest.approx(2.0, rel=1e-2)
    assert inv == pytest.approx(2.0, rel=1e-2)


@given(st.floats(-180, 180))
@settings(max_examples=20, deadline=None)
def test_parse_rotation(angle):
    h = parse_map(f"rotation({angle})", 2)
    v = h(np.array([1.0, 0.0]))
    assert np.allclose(v, [math.cos(math.radians(angle)), math.sin(math.radians(angle))])


def test_parse_map_variants():
    assert parse_map("identity", 3).dim == 3
    c = parse_map("composite(shear-abs,rotation(30))", 3)
    x = np.array([0.3, -0.2, 0.1])
    assert np.allclose(c(x), rotation(30.0, 3)(shear_abs(3)(x)))
    for bad in ("nope", "rotation(", "composite(nope)"):
        with pytest.raises(ValueError):
            parse_map(bad, 3)
