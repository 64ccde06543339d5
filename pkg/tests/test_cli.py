import csv
import json

import jsonschema
import numpy as np
import pytest

from spurious_rem.cli import load_schema, main, resolve
from spurious_rem.events import ingest_events
from spurious_rem.simulate import realized_pfe

STATS = ["degree_abs", "triangle", "repetition_count", "sim_cont:cont", "match_cat:cat"]


def write_config(path, **blocks):
    path.write_text(json.dumps(blocks))
    return str(path)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    cfg = write_config(root / "sim.json", simulate={"dg": 1, "n_actors": 40, "true_events": 500})
    assert main(["simulate", "--config", cfg, "--seed", "4", "--out", str(root / "data"), "--quiet"]) == 0
    return root / "data"


def fit_config(tmp_path, data, spurious=True, **extra):
    blocks = {
        "io": {"events": str(data / "events.csv"), "covariates": str(data / "covariates.csv"), "categorical": ["cat"]},
        "true_model": {"statistics": STATS},
        "chain": {"burn_in": 8, "draws": 8},
    }
    if spurious:
        blocks["spurious_model"] = {"statistics": []}
    blocks.update(extra)
    return write_config(tmp_path / "fit.json", **blocks)


def test_simulate_outputs(simulated):
    meta = json.loads((simulated / "meta.json").read_text())
    stream = ingest_events(simulated / "events.csv")
    assert meta["seed"] == 4 and meta["config"]["seed"] == 4
    assert meta["n_true"] == 500 and meta["n_events"] == len(stream)
    assert meta["realized_pfe"] == pytest.approx(realized_pfe(stream))
    assert meta["config"]["simulate"]["continuous"] == "sim_cont"
    with open(simulated / "covariates.csv") as fh:
        assert next(csv.reader(fh)) == ["actor", "cont", "cat"]


def test_fit_remse(simulated, tmp_path, capsys):
    cfg = fit_config(tmp_path, simulated)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    printed = capsys.readouterr().out
    assert "Z Val." in printed and "PFE (in %)" in printed
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    jsonschema.validate(report, load_schema("report"))
    assert report["model"] == "REMSE" and report["draws_used"] == 8 and report["burn_in"] == 8
    assert report["config"]["chain"]["seed"] == report["seed"] == 0
    # ground-truth labels of the simulation as the oracle
    truth = json.loads((simulated / "meta.json").read_text())["realized_pfe"]
    assert abs(report["pfe_estimate"] - truth) < 1.5
    with open(tmp_path / "out" / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 17 and rows[0]["iteration"] == "0"
    assert "true:repetition_count" in rows[0]
    with open(tmp_path / "out" / "baseline.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 201
    assert all(float(r["lower"]) <= float(r["baseline"]) <= float(r["upper"]) for r in rows)


def test_fit_rem_has_zero_pfe(simulated, tmp_path):
    cfg = fit_config(tmp_path, simulated, spurious=False)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out"), "--quiet"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["model"] == "REM" and report["pfe_estimate"] == 0
    assert report["coefficients"][0]["name"] == "true:intercept"


def test_reports_byte_identical(simulated, tmp_path):
    cfg = fit_config(tmp_path, simulated, chain={"burn_in": 3, "draws": 3})
    for out in ("a", "b"):
        assert main(["fit", "--config", cfg, "--seed", "11", "--out", str(tmp_path / out), "--quiet"]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    # the embedded config reproduces the run
    embedded = json.loads((tmp_path / "a" / "report.json").read_text())["config"]
    again = write_config(tmp_path / "again.json", **embedded)
    assert main(["fit", "--config", again, "--out", str(tmp_path / "c"), "--quiet"]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "c" / "report.json").read_bytes()


def test_parallel_chains(simulated, tmp_path):
    cfg = fit_config(tmp_path, simulated, chain={"burn_in": 3, "draws": 3, "parallel_chains": 2})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out"), "--quiet"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(report["chains"]) == 2 and report["draws_used"] == 6
    assert report["chains"][0]["seed"] != report["chains"][1]["seed"]


def test_missing_covariate_file(simulated, tmp_path, capsys):
    cfg = fit_config(tmp_path, simulated)
    blocks = json.loads(open(cfg).read())
    blocks["io"]["covariates"] = str(tmp_path / "nowhere.csv")
    cfg = write_config(tmp_path / "bad.json", **blocks)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_covariate_not_loaded(simulated, tmp_path, capsys):
    cfg = fit_config(tmp_path, simulated)
    blocks = json.loads(open(cfg).read())
    del blocks["io"]["covariates"]
    cfg = write_config(tmp_path / "bad.json", **blocks)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "cont" in capsys.readouterr().err


@pytest.mark.parametrize(
    "blocks, message",
    [
        ({"chain": {"burnin": 3}}, "burnin"),
        ({"nonsense": 1}, "nonsense"),
        ({"fit": {"gamma": -1}}, "fit"),
        ({"true_model": {"statistics": ["triangle"]}, "spurious_model": {"statistics": ["triangle"]}}, "share"),
        ({"true_model": {"statistics": ["wedge"]}}, "wedge"),
    ],
)
def test_bad_configs(simulated, tmp_path, capsys, blocks, message):
    base = {"io": {"events": str(simulated / "events.csv")}, "true_model": {"statistics": []}}
    cfg = write_config(tmp_path / "c.json", **{**base, **blocks})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert message in capsys.readouterr().err
    assert not (tmp_path / "out" / "report.json").exists()


def test_fit_needs_events(tmp_path):
    assert main(["fit", "--out", str(tmp_path)]) == 2
    assert main(["fit", "--config", str(tmp_path / "none.json")]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # a component whose only statistic is constant cannot be estimated
    events = tmp_path / "e.csv"
    events.write_text("time,actor_a,actor_b\n0.5,a,b\n1.0,a,b\n1.5,a,b\n")
    cov = tmp_path / "c.csv"
    cov.write_text("actor,x\na,1\nb,1\n")
    cfg = write_config(tmp_path / "c.json", io={"events": str(events), "covariates": str(cov)},
                       true_model={"statistics": ["sum_cont:x"], "baseline": False})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "out")]) == 1


def test_seed_precedence():
    base = {"io": {"events": "e.csv"}}
    assert resolve(base, "fit", None)["seed"] == 0
    assert resolve({**base, "chain": {"seed": 5}}, "fit", None)["seed"] == 5
    assert resolve({**base, "seed": 6, "chain": {"seed": 5}}, "fit", None)["seed"] == 6
    assert resolve({**base, "seed": 6}, "fit", 7)["chain"]["seed"] == 7
    cfg = resolve(base, "fit", None)
    assert cfg["fit"] == {"gamma": "auto", "max_irls_iter": 50, "tol": 1e-8}
    assert cfg["chain"]["burn_in"] == 30 and cfg["chain"]["draws"] == 30


def test_study_command(tmp_path):
    cfg = write_config(tmp_path / "s.json", chain={"burn_in": 2, "draws": 3})
    out = tmp_path / "study"
    assert main(["study", "--config", cfg, "--dg", "2", "--reps", "10", "--scale", "desk", "--seed", "1",
                 "--out", str(out), "--quiet"]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["study"] == {"dg": 2, "reps": 10, "scale": "desk", "n_jobs": 1, "continuous": "sim_cont"}
    with open(out / "table1.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["coefficient"] == "true:intercept"
    realized = next(r for r in rows if r["coefficient"] == "realized_PFE")
    assert float(realized["truth"]) == 0.0
    assert main(["study", "--reps", "3", "--out", str(out)]) == 2
