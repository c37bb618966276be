import csv
import json

import pytest

from gkprepeater.cache import ResultCache, content_hash
from gkprepeater.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_PRECISION, main
from gkprepeater.config import ConfigError, validate
from gkprepeater.analytic import achievable_distance
from gkprepeater.quadrature import FiberParams, Squeezing


def run(tmp_path, doc, command=None, *extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return main([command or doc["kind"], "--config", str(path), "--out", str(tmp_path / "out"), *extra])


def read_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_analytic_single_point_and_empty(tmp_path):
    assert run(tmp_path, {"kind": "analytic", "eta0": [0.98], "sigma_gkp": [0.08]}) == EXIT_OK
    rows = read_rows(tmp_path / "out" / "analytic.csv")
    d = achievable_distance(FiberParams(0.98), Squeezing.from_sigma(0.08))
    assert len(rows) == 1 and float(rows[0]["achievable_distance_km"]) == pytest.approx(d, rel=1e-9)
    assert rows[0]["optimal_spacing_km"] == "0.25"
    assert run(tmp_path, {"kind": "analytic", "eta0": [], "sigma_gkp": [0.08]}) == EXIT_OK
    text = (tmp_path / "out" / "analytic.csv").read_text().strip()
    assert text == "eta0,sigma_gkp,optimal_spacing_km,achievable_distance_km"


def test_simulate_zero_noise_and_repeatable(tmp_path):
    zero = {"kind": "simulate", "eta0": 1.0, "sigma_gkp": 0.0, "lossless": True, "code": "steane7",
            "n_multi": 1, "n_all": 2, "links": 3}
    assert run(tmp_path, zero) == EXIT_OK
    est = json.loads((tmp_path / "out" / "simulate.json").read_text())["estimate"]
    assert (est["p_x"], est["p_z"], est["k"]) == (0.0, 0.0, 10)
    doc = {"kind": "simulate", "eta0": 0.98, "sigma_gkp": 0.15, "links": 3, "n_all": 4}
    assert run(tmp_path, doc, None, "--seed", "3") == EXIT_OK
    first = json.loads((tmp_path / "out" / "simulate.json").read_text())
    assert run(tmp_path, doc, None, "--seed", "3") == EXIT_OK
    second = json.loads((tmp_path / "out" / "simulate.json").read_text())
    assert first.pop("timestamp") != "" and second.pop("timestamp") != ""
    assert first == second


def test_simulate_budget_exit_and_trial_log(tmp_path):
    doc = {"kind": "simulate", "eta0": 0.99, "sigma_gkp": 0.02, "links": 2, "n_all": 4, "trial_log": True}
    assert run(tmp_path, doc, None, "--budget", "100") == EXIT_BUDGET
    out = json.loads((tmp_path / "out" / "simulate.json").read_text())
    assert out["estimate"]["converged"] is False and out["estimate"]["k"] == 100
    assert (tmp_path / "out" / "trials.bin").stat().st_size == 100 * 9


def test_config_errors(tmp_path):
    assert run(tmp_path, {"kind": "simulate", "eta0": 0.98, "sigma_gkp": 0.1, "colour": 1}) == EXIT_CONFIG
    assert run(tmp_path, {"kind": "simulate", "eta0": 0.98}) == EXIT_CONFIG
    assert run(tmp_path, {"kind": "analytic", "eta0": [0.9], "sigma_gkp": [0.1]}, "simulate") == EXIT_CONFIG
    assert run(tmp_path, {"kind": "simulate", "eta0": 0.98, "sigma_gkp": 0.1, "code": "c4", "n_multi": 3,
                          "n_all": 40}) == EXIT_CONFIG
    assert main(["analytic", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        validate({"kind": "simulate", "eta0": 0.98, "sigma_gkp": 0.1, "squeezing_db": 15})


def test_precision_exit_code(tmp_path, monkeypatch):
    from gkprepeater import cli
    from gkprepeater.rescaling import PrecisionExhausted

    def boom(*a):
        raise PrecisionExhausted("too few digits", 7)
    monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
    assert run(tmp_path, {"kind": "simulate", "eta0": 0.98, "sigma_gkp": 0.1}) == EXIT_PRECISION


def test_config_defaults():
    cfg = validate({"kind": "single-link"})
    assert cfg["points"] == 100 and (cfg["gamma_min"], cfg["gamma_max"]) == (0.08, 0.2)
    assert len(cfg["schemes"]) == 4
    cfg = validate({"kind": "cost", "eta0": 0.97, "squeezing_db": 14.7, "code": "steane7"})
    assert cfg["distances_km"] == [500.0 * k for k in range(1, 21)]
    assert cfg["sigma_gkp"] == pytest.approx(0.130162236485703, rel=1e-12)


def test_single_link_command(tmp_path):
    doc = {"kind": "single-link", "gamma_min": 0.15, "gamma_max": 0.2, "points": 3, "schemes": ["gkp-only"],
           "b": 0.3}
    assert run(tmp_path, doc) == EXIT_OK
    rows = read_rows(tmp_path / "out" / "single_link.csv")
    p = [float(r["p_err"]) for r in rows]
    assert len(rows) == 3 and p[0] < p[2]
    assert all(float(r["stderr"]) <= 0.3 * float(r["p_err"]) for r in rows)


def test_cost_command(tmp_path):
    doc = {"kind": "cost", "eta0": 0.98, "sigma_gkp": 0.09, "code": "c4", "distances_km": [200, 400],
           "layouts": [[1, 4], [2, 4], [4, 4]], "links": 5, "b": 0.3}
    assert run(tmp_path, doc) == EXIT_OK
    rows = read_rows(tmp_path / "out" / "cost.csv")
    assert len(rows) == 4
    for d in ("200", "400"):
        h, a = [r for r in rows if r["distance_km"] == d]
        assert h["constraint"] == "hybrid" and a["constraint"] == "type-A-only"
        assert a["n_multi"] == a["n_all"] == "4"
        assert float(h["cost"]) <= float(a["cost"])
        int(h["n_multi"]), int(h["n_all"])
    assert len(ResultCache(tmp_path / "out" / "cache")) == 3


def test_sweep_command(tmp_path):
    doc = {"kind": "sweep", "base": {"eta0": 0.98, "links": 5, "n_all": 4, "b": 0.3},
           "vary": {"sigma_gkp": [0.15, 0.2]}}
    assert run(tmp_path, doc) == EXIT_OK
    rows = read_rows(tmp_path / "out" / "sweep.csv")
    assert [r["sigma_gkp"] for r in rows] == ["0.15", "0.2"]
    assert float(rows[0]["p_x"]) < float(rows[1]["p_x"])
    assert run(tmp_path, {**doc, "vary": {"colour": [1]}}) == EXIT_CONFIG


def test_cache_rejects_mismatched_entries(tmp_path):
    cache = ResultCache(tmp_path)
    key = {"config": {"eta0": 0.98}, "b": 0.1, "seed": 0, "engine": "1.0"}
    cache.put(key, {"p": 0.1})
    assert cache.get(key) == {"p": 0.1}
    assert cache.get(dict(key, engine="2.0")) is None
    obj = tmp_path / "objects" / f"{content_hash(key)}.json"
    entry = json.loads(obj.read_text())
    entry["key"]["engine"] = "0.9"
    obj.write_text(json.dumps(entry))
    assert cache.get(key) is None
