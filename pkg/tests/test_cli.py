import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

import carmap
from carmap import cli, io
from carmap.car import simulate_leroux
from carmap.graph import lattice_graph

DATA = Path(carmap.__file__).parent / "data"
HEALTH, EXPOSURE, ADJ = DATA / "toy_health.csv", DATA / "toy_exposure.csv", DATA / "toy_adjacency.csv"
SMALL = {"n_iterations": 600, "burn_in": 300, "thin": 3, "seed": 4}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def fit(tmp_path, model, *extra, name="out", config=SMALL):
    out = tmp_path / name
    argv = ["fit", "--health", str(HEALTH), "--exposure", str(EXPOSURE), "--model", model,
            "--config", write_json(tmp_path / f"{name}.json", config), "--out", str(out), *extra]
    return cli.main(argv), out


def test_fit_glm_smoke(tmp_path):
    code, out = fit(tmp_path, "glm", "--pollutant", "NO2")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert np.isfinite(summary["parameters"]["alpha"]["mean"])
    assert summary["relative_risk"]["increment"] == 5.0
    assert summary["relative_risk"]["lo95"] < summary["relative_risk"]["mean"] < summary["relative_risk"]["hi95"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["inputs"]["health"]["sha256"] == io.sha256(HEALTH)
    assert manifest["config"]["model"] == "glm"


@pytest.mark.parametrize("model", ["car", "local", "local-agg", "hh"])
def test_fit_missing_adjacency(tmp_path, capsys, model):
    code, _ = fit(tmp_path, model)
    assert code == 2
    assert "--adjacency" in capsys.readouterr().err


@pytest.mark.parametrize("model", ["car", "local-agg", "hh"])
def test_fit_spatial_outputs(tmp_path, model):
    code, out = fit(tmp_path, model, "--adjacency", str(ADJ), "--delta", "2")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["relative_risk"]["increment"] == 2.0
    with open(out / "trace.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:2] == ["chain", "iteration"]
    assert "alpha" in header
    assert (out / "manifest.json").exists()


def test_local_agg_matches_local_on_point_exposures(tmp_path):
    exposures = io.read_exposure(EXPOSURE, io.read_health(HEALTH).area_ids)
    ids = io.read_health(HEALTH).area_ids
    point = write_csv(tmp_path / "point.csv", ["area_id", "concentration", "weight"],
                      [(a, io.fmt(m), 1) for a, m in zip(ids, exposures.weighted_means())])
    traces = {}
    for model in ("local", "local-agg"):
        out = tmp_path / model
        argv = ["fit", "--health", str(HEALTH), "--exposure", point, "--adjacency", str(ADJ), "--model", model,
                "--config", write_json(tmp_path / "c.json", SMALL), "--out", str(out)]
        assert cli.main(argv) == 0
        with open(out / "trace.csv") as fh:
            traces[model] = [row["alpha"] for row in csv.DictReader(fh)]
    assert traces["local"] == traces["local-agg"]


def test_fit_malformed_health_reports_position(tmp_path, capsys):
    bad = write_csv(tmp_path / "h.csv", ["area_id", "Y", "E"], [("A00", "3", "1.5"), ("A01", "x", "2")])
    code = cli.main(["fit", "--health", bad, "--exposure", str(EXPOSURE), "--model", "glm", "--out", str(tmp_path)])
    assert code == 2
    assert re.search(r"h\.csv:3:2: not a number", capsys.readouterr().err)


def test_fit_unknown_config_key(tmp_path, capsys):
    code, _ = fit(tmp_path, "glm", config={"iterations": 5})
    assert code == 2
    assert "unknown config keys" in capsys.readouterr().err


SCENARIO = {"name": "tiny", "study": 1, "confounding": "A", "sd_phi": 0.01, "replicates": 1, "seed": 3}
TINY = {"n_iterations": 200, "burn_in": 100, "thin": 1, "seed": 2}


def simulate(tmp_path, name, scenario=SCENARIO, models="glm,car"):
    out = tmp_path / name
    argv = ["simulate", "--scenario", write_json(tmp_path / "sc.json", scenario), "--models", models,
            "--config", write_json(tmp_path / "cfg.json", TINY), "--out", str(out)]
    return cli.main(argv), out


def test_simulate_smoke_and_deterministic(tmp_path):
    code, a = simulate(tmp_path, "a")
    assert code == 0
    with open(a / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["model"] for r in rows] == ["glm", "car"]
    assert all(np.isfinite(float(r["rmse_pct"])) for r in rows)
    _, b = simulate(tmp_path, "b")
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == [3]
    assert manifest["config"]["fit"]["n_iterations"] == 200


@pytest.mark.parametrize("scenario", [{**SCENARIO, "confounding": "E"}, {**SCENARIO, "colour": 1}])
def test_simulate_invalid_scenario(tmp_path, scenario):
    code, _ = simulate(tmp_path, "x", scenario)
    assert code == 2


def test_simulate_unknown_model(tmp_path):
    code, _ = simulate(tmp_path, "x", models="glm,magic")
    assert code == 2


def test_simulate_study2_quick_preset(tmp_path):
    out = tmp_path / "s2"
    argv = ["simulate", "--preset", "study2-quick", "--config", write_json(tmp_path / "c.json", TINY),
            "--out", str(out)]
    assert cli.main(argv) == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len({r["scenario"] for r in rows}) == 8
    assert {r["model"] for r in rows} == {"local", "local-agg"}


def test_simulate_replicate_failures_exit_4(tmp_path, monkeypatch):
    from carmap import simstudy

    def boom(*args, **kwargs):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(simstudy, "fit_model", boom)
    code, _ = simulate(tmp_path, "f", models="glm")
    assert code == 4


def residual_files(tmp_path, values, side=8):
    g = lattice_graph(side, side)
    ids = [f"R{k}" for k in range(g.n)]
    r = write_csv(tmp_path / "r.csv", ["area_id", "residual"], [(a, io.fmt(v)) for a, v in zip(ids, values)])
    adj = write_csv(tmp_path / "adj.csv", ["area_i", "area_j"], [(ids[i], ids[j]) for i, j in g.edges])
    return r, adj, g


def test_moran_constant_residuals(tmp_path):
    r, adj, _ = residual_files(tmp_path, np.full(64, 0.3))
    assert cli.main(["moran", "--residuals", r, "--adjacency", adj]) == 2


@pytest.mark.parametrize("seed", range(3))
def test_moran_car_residuals_positive(tmp_path, capsys, seed):
    g = lattice_graph(8, 8)
    values = simulate_leroux(g, 0.95, 1.0, np.random.default_rng(seed))
    r, adj, _ = residual_files(tmp_path, values)
    out = tmp_path / "m"
    assert cli.main(["moran", "--residuals", r, "--adjacency", adj, "--permutations", "499", "--out", str(out)]) == 0
    m = re.fullmatch(r"I=(\S+) p=(\S+)\n", capsys.readouterr().out)
    assert float(m.group(1)) > 0
    assert float(m.group(2)) < 0.05
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["permutations"] == 499
    assert manifest["result"]["I"] == pytest.approx(float(m.group(1)), rel=1e-15)


def test_bundled_residuals_moran(capsys):
    assert cli.main(["moran", "--residuals", str(DATA / "toy_residuals.csv"), "--adjacency", str(ADJ),
                     "--permutations", "99"]) == 0
    assert capsys.readouterr().out.startswith("I=")


def test_csv_uses_decimal_point(tmp_path, monkeypatch):
    import locale

    try:
        locale.setlocale(locale.LC_NUMERIC, "de_DE.UTF-8")
    except locale.Error:
        pass
    try:
        code, out = fit(tmp_path, "car", "--adjacency", str(ADJ))
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
    assert code == 0
    text = (out / "trace.csv").read_text()
    body = text.splitlines()[1]
    assert "." in body
    assert all(re.fullmatch(r"-?[0-9.e+-]+|nan|inf", c) for c in body.split(","))
