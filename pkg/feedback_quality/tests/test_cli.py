import json

import pytest
from click.testing import CliRunner

from feedback_quality.cli import main

CSV = "cluster_id,n,m,y\na,100,10,6\nb,100,30,12\n"


@pytest.fixture
def runner():
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:  # click >= 8.2 always keeps stderr apart
        return CliRunner()


def _error(result):
    assert result.exit_code == 1
    return json.loads(result.stderr.strip().splitlines()[-1])


def _csv(path, text=CSV):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_simulate_writes_data_and_truth(runner, tmp_path):
    out, truth = tmp_path / "data.csv", tmp_path / "truth.json"
    result = runner.invoke(main, ["simulate", "--clusters", "5", "--seed", "1", "--out", str(out),
                                  "--truth-out", str(truth), "--interactions-out", str(tmp_path / "rows.csv")])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert payload["clusters"] == 5
    assert out.read_text().startswith("cluster_id,n,m,y")
    saved = json.loads(truth.read_text())
    assert saved["Q_star"] == pytest.approx(payload["Q_star"])
    assert len(saved["kappa"]) == 5
    assert (tmp_path / "rows.csv").exists()


def test_estimate(runner, tmp_path):
    path = _csv(tmp_path / "data.csv")
    result = runner.invoke(main, ["estimate", "--input", path])
    assert result.exit_code == 0
    assert json.loads(result.output)["value"] == pytest.approx(0.45)
    ipw = json.loads(runner.invoke(main, ["estimate", "--input", path, "--method", "ipw"]).output)
    assert ipw["method"] == "ipw"
    assert ipw["value"] == pytest.approx(0.5 * 0.6 + 0.5 * 0.4)


def test_invalid_counts_are_reported_as_json(runner, tmp_path):
    path = _csv(tmp_path / "bad.csv", "cluster_id,n,m,y\na,100,10,6\nb,100,30,31\n")
    error = _error(runner.invoke(main, ["estimate", "--input", path]))
    assert error["code"] == "y_exceeds_m"
    assert error["cluster_id"] == "b"


def test_bad_header(runner, tmp_path):
    path = _csv(tmp_path / "bad.csv", "id,n,m,y\na,100,10,6\n")
    assert _error(runner.invoke(main, ["estimate", "--input", path]))["code"] == "bad_header"


def test_fit_and_compare(runner, tmp_path):
    path = _csv(tmp_path / "data.csv", "cluster_id,n,m,y\na,120,14,9\nb,300,40,18\nc,80,6,5\n")
    common = ["--input", path, "--chains", "1", "--draws", "120", "--tune", "80", "--seed", "4"]
    first = runner.invoke(main, ["fit", *common, "--model", "basic", "--out", str(tmp_path / "basic.bin")])
    assert first.exit_code == 0, first.output
    payload = json.loads(first.output)
    assert payload["model"] == "basic"
    assert payload["seed"] == 4
    assert 0.0 < payload["summary"]["aggregate"]["mean"] < 1.0
    assert (tmp_path / "basic.bin.json").exists()

    second = runner.invoke(main, ["fit", *common, "--model", "enhanced", "--out", str(tmp_path / "enhanced.json")])
    assert second.exit_code == 0, second.output

    compared = runner.invoke(main, ["compare", "--fits", str(tmp_path / "basic.bin"),
                                    "--fits", str(tmp_path / "enhanced.json"), "--mode", "pseudo-bma"])
    assert compared.exit_code == 0, compared.output
    table = json.loads(compared.output)
    assert table["mode"] == "pseudo-bma"
    assert {row["model"] for row in table["rows"]} == {"basic", "enhanced"}

    duplicate = runner.invoke(main, ["compare", "--fits", str(tmp_path / "basic.bin"),
                                     "--fits", str(tmp_path / "basic.bin")])
    assert _error(duplicate)["code"] == "duplicate_model"


def test_fit_rejects_unknown_model(runner, tmp_path):
    path = _csv(tmp_path / "data.csv")
    assert _error(runner.invoke(main, ["fit", "--input", path, "--model", "giant"]))["code"] == "unknown_variant"


def test_drift(runner, tmp_path):
    batches = tmp_path / "batches"
    batches.mkdir()
    for i, y in enumerate([80, 80, 20]):
        _csv(batches / f"{i:02d}.csv", f"cluster_id,n,m,y\na,1000,100,{y}\nb,1000,100,70\n")
    result = runner.invoke(main, ["drift", "--batches", str(batches)])
    assert result.exit_code == 0, result.output
    decisions = json.loads(result.output)
    assert [d["action"] for d in decisions] == ["none", "cluster_alert"]
    assert decisions[1]["alerted_clusters"] == ["a"]

    mismatch = runner.invoke(main, ["drift", "--batches", str(batches), "--noise-fractions", "0.1,0.2"])
    assert _error(mismatch)["code"] == "invalid_config"


def test_drift_needs_batches(runner, tmp_path):
    assert _error(runner.invoke(main, ["drift", "--batches", str(tmp_path)]))["code"] == "invalid_config"


def test_experiment_drift_demo(runner, tmp_path):
    out = tmp_path / "report.md"
    result = runner.invoke(main, ["experiment", "--mode", "drift_demo", "--seed", "2", "--out", str(out),
                                  "--format", "markdown"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["mode"] == "drift_demo"
    assert "## Drift decisions" in out.read_text()


def test_experiment_rejects_bad_spec(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"mode": "coverage", "replicates": 3}))
    result = runner.invoke(main, ["experiment", "--spec", str(spec), "--out", str(tmp_path / "r.json")])
    assert _error(result)["code"] == "invalid_config"
