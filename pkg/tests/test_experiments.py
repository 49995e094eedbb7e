from __future__ import annotations

import json
import math

import numpy as np
import pytest

from dirbundle import __version__
from dirbundle.core import hausdorff_angle
from dirbundle.experiments import (EXAMPLE_IDS, ConfigError, ExperimentConfig, RunReport, atomic_write,
                                   bs_curve_points, four_plane_link, jsonable, reproduce)
from dirbundle.germs import bs_height
from oracles import PLANE_NORMALS

SPEC_IDS = ("cones-3-1", "square-cone-3-2", "flat-claims-3-3", "briancon-speder-3", "oscillator-4-9",
            "bt-family-6-1", "dense-ssp-5-4", "umbrella-2-3", "pompeiu-5-9")


def test_every_example_is_addressable():
    assert set(SPEC_IDS) <= set(EXAMPLE_IDS)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("nope")
    with pytest.raises(ConfigError):
        ExperimentConfig("pompeiu-5-9", params={"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig("umbrella-2-3", gamma=2.0)
    with pytest.raises(ConfigError):
        ExperimentConfig("umbrella-2-3", alpha_deg=0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"example_id": "umbrella-2-3", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"seed": 1})


def test_config_resolves_defaults():
    cfg = ExperimentConfig.from_mapping({"example_id": "pompeiu-5-9", "params": {"n_terms": 10}})
    r = cfg.resolved()
    assert r["params"] == {"n_terms": 10.0, "probe_count": 10.0}
    assert r["seed"] == 42 and r["r0"] == 0.5 and r["count"] == 8 and r["alpha_deg"] == 2.0
    assert "out" not in r


def test_jsonable_sanitizes_non_finite():
    d = jsonable({"a": np.float64("nan"), "b": [np.inf, -np.inf], "c": np.arange(2), "d": np.bool_(True)})
    assert d == {"a": "nan", "b": ["inf", "-inf"], "c": [0, 1], "d": True}
    json.dumps(d, allow_nan=False)


def test_report_json_excludes_runtime_on_request():
    r = RunReport("umbrella-2-3", {}, {"x": 1.0}, True, [], 1.23, 42, {"seed": 42}, {"ok": True})
    assert "runtime_seconds" in json.loads(r.to_json())
    d = json.loads(r.to_json(include_runtime=False))
    assert "runtime_seconds" not in d
    assert d["pass"] is True and d["tool_version"] == __version__ and d["seed"] == 42


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "r.json"
    atomic_write(p, "hello\n")
    atomic_write(p, b"bytes")
    assert p.read_bytes() == b"bytes"
    assert [q.name for q in p.parent.iterdir()] == ["r.json"]


def test_four_plane_link_lies_on_the_planes():
    link = four_plane_link(360)
    d = np.abs(link.members @ PLANE_NORMALS.T).min(axis=1)
    assert d.max() < 1e-12
    assert hausdorff_angle(link, link) == 0.0


def test_bs_curves_lie_on_the_surface():
    for s in (0.1, 0.01):
        for q, normal in bs_curve_points(s).values():
            x, y, z = q
            assert abs(z ** 5 + y ** 7 * x + x ** 15) <= 1e-12 * s ** 15
            assert np.linalg.norm(normal) == 1.0
    assert math.isfinite(float(bs_height(0.1, 0.2)))


def test_reproduce_writes_report(tmp_path):
    rep = reproduce(ExperimentConfig("pompeiu-5-9", params={"probe_count": 8}, out=str(tmp_path)))
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["example_id"] == "pompeiu-5-9"
    assert saved["config"]["params"]["probe_count"] == 8.0
    assert saved["pass"] == rep.passed
    assert rep.metrics
