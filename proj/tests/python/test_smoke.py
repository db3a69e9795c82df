import json

import numpy as np
import pytest

import countex


def test_default_config_has_every_key():
    cfg = json.loads(countex.default_config())
    assert cfg["queries"] == 100
    assert cfg["grid_rows"] == 64
    assert cfg["lambda_den"] == 200.0


def test_scene_is_deterministic():
    a = countex.scene({"grid_rows": 12, "grid_cols": 12, "count_max": 6}, "x", 3)
    b = countex.scene({"grid_rows": 12, "grid_cols": 12, "count_max": 6}, "x", 3)
    assert a == b
    assert a["positive_category"] != a["negative_category"]


def test_density_mass_equals_count():
    text = countex.generate_scene(json.dumps({"grid_rows": 16, "grid_cols": 16, "count_max": 10}), "d", 1)
    s = json.loads(text)
    cat = s["positive_category"]
    grid = countex.render_density(text, cat, 1.5)
    assert grid.shape == (16, 16)
    n = sum(1 for i in s["instances"] if i["category"] == cat)
    assert abs(grid.sum() - n) < 1e-6


def test_hungarian_and_count():
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    assert countex.hungarian(cost) == [1, 0, 2]
    assert countex.count([0.9, 0.4, 0.8], 0.5) == 2
    with pytest.raises(ValueError):
        countex.count([0.5], 1.0)


def test_metrics():
    m = countex.metrics([10, 20], [12, 16])
    assert m["mae"] == pytest.approx(3.0)
    assert m["rmse"] == pytest.approx(10 ** 0.5)
    assert m["nae"] == pytest.approx(0.2)


def test_unknown_config_key():
    with pytest.raises(ValueError):
        countex.generate_scene(json.dumps({"bogus": 1}))


def test_run_generate(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid_rows": 10, "grid_cols": 10, "count_min": 1, "count_max": 4}))
    assert countex.run("generate", config=cfg, out=tmp_path / "data", count=10) == 0
    assert len(list((tmp_path / "data" / "train").glob("*.json"))) == 7
    assert countex.run("train", config=tmp_path / "missing.json", out=tmp_path / "x") == 2


def test_gradcheck_subset():
    results = countex.gradcheck(seed=1, points=2)
    assert results and all(r["passed"] for r in results)
