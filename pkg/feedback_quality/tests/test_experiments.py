import json

import pytest

from feedback_quality.core.errors import ConfigError
from feedback_quality.drift import DriftAction
from feedback_quality.harness import (
    ExperimentMode,
    MethodEstimate,
    QualityReport,
    derive_seed,
    emit_report,
    parse_experiment_spec,
    run_experiment,
    run_prior_sensitivity,
    to_json,
    to_markdown,
)
from feedback_quality.harness.experiments import coverage_summary, drift_batches

TINY_SAMPLER = {"chains": 2, "draws": 100, "tune": 100, "max_tree_depth": 8}
TINY_POPULATION = {"clusters": 6, "size_range": [300, 800]}


def _tiny(**overrides):
    return parse_experiment_spec({"population": TINY_POPULATION, "sampler": TINY_SAMPLER, "workers": 1, **overrides})


@pytest.mark.parametrize(
    "payload",
    [
        {"mode": "kappa_sweep", "kappas": [3.0]},
        {"mode": "coverage", "replicates": 5},
        {"models": []},
        {"kappas": [0.5, 2.0]},
        {"models": ["nonsense"]},
        {"surprise": 1},
        {"mode": "everything"},
    ],
)
def test_invalid_specs(payload):
    with pytest.raises(ConfigError) as info:
        parse_experiment_spec(payload)
    assert info.value.code == "invalid_config"


def test_spec_defaults_and_hash():
    spec = parse_experiment_spec({"models": ["Basic", "hier_informed"]})
    assert spec.mode is ExperimentMode.HEADLINE
    assert spec.population.clusters == 18
    assert spec.kappas == [1.0, 3.0, 10.0, 30.0]
    assert [m.value for m in spec.models] == ["basic", "hier_informed"]
    assert spec.hash == parse_experiment_spec({"workers": 4}).hash
    assert spec.hash != parse_experiment_spec({"seed": 1}).hash


def test_derive_seed():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    seeds = {derive_seed(7, stream, cell) for stream in range(6) for cell in range(20)}
    assert len(seeds) == 120
    assert all(0 <= s < 2**63 for s in seeds)


def test_drift_batches_follow_the_schedule():
    spec = parse_experiment_spec({"mode": "drift_demo", "seed": 5})
    batches = drift_batches(spec)
    assert len(batches) == 8
    assert [b.index for b in batches] == list(range(8))
    assert [round(b.noise_fraction, 6) for b in batches] == [0.02] * 5 + [0.05, 0.08, 0.11]
    assert all(len(b.clusters) == 18 for b in batches)
    assert drift_batches(spec) == batches


def test_drift_demo_report():
    spec = parse_experiment_spec({"mode": "drift_demo", "seed": 3, "drift": {"shift_factor": 20.0}})
    report = run_experiment(spec)
    assert report.mode == "drift_demo"
    assert len(report.drift) == 7
    shift = next(d for d in report.drift if d["index"] == spec.drift.shift_at)
    assert shift["action"] == DriftAction.RECLUSTER.value
    assert "prevalence_jsd" in shift["signals"]
    last = report.drift[-1]
    assert last["action"] == DriftAction.RECLUSTER.value
    assert "noise_climb" in last["signals"]
    assert report.runtime is not None
    assert run_experiment(spec).payload(include_runtime=False) == report.payload(include_runtime=False)


def test_worker_count_stays_out_of_the_report_body():
    one = run_experiment(parse_experiment_spec({"mode": "drift_demo", "seed": 3, "workers": 1}))
    three = run_experiment(parse_experiment_spec({"mode": "drift_demo", "seed": 3, "workers": 3}))
    assert "workers" not in one.config
    assert one.payload(include_runtime=False) == three.payload(include_runtime=False)


def test_coverage_summary():
    def cell(covers, error):
        return {"covers_truth": covers, "abs_error": error, "ci_width": 0.1, "below_truth": not covers,
                "divergence_flag": False}

    rows = [{"methods": {"basic": cell(i % 2 == 0, 0.01 * i)}} for i in range(10)]
    summary = coverage_summary(rows, ["basic"])["basic"]
    assert summary["coverage"] == 0.5
    assert summary["median_abs_error"] == pytest.approx(0.045)
    assert summary["below_truth"] == 5
    lo, hi = summary["coverage_interval"]
    assert lo < 0.5 < hi


def test_headline_report(tmp_path):
    spec = _tiny(seed=11, anchor_size=50)
    report = run_experiment(spec)
    methods = [e.method for e in report.estimates]
    assert methods == ["naive", "ipw", "basic", "hier_informed"]
    assert report.truth["Q_star"] == pytest.approx(report.truth["population"]["Q_star"])
    assert set(report.convergence) == {"basic", "hier_informed"}
    assert len(report.recovery) == 6
    assert set(report.recovery[0].posterior) == {"basic", "hier_informed"}
    assert report.anchor["anchor_size"] == 50
    assert report.estimate("basic").covers_truth is not None
    assert report.runtime.timings.keys() == {"basic", "hier_informed"}

    path = emit_report(report, tmp_path / "headline.json")
    loaded = json.loads(path.read_text())
    assert loaded["config_hash"] == spec.hash
    assert loaded["seed"] == 11
    markdown = emit_report(report, tmp_path / "headline.md", fmt="md").read_text()
    assert "## Aggregate quality" in markdown


def test_kappa_sweep_report():
    report = run_experiment(_tiny(mode="kappa_sweep", kappas=[1.0, 10.0], models=["basic"]))
    assert [row["kappa_max"] for row in report.sweep] == [1.0, 10.0]
    assert set(report.sweep[0]["abs_error"]) == {"naive", "ipw", "basic"}
    assert "## Selection-strength sweep" in to_markdown(report)


def test_prior_sensitivity_report():
    spec = _tiny(mode="prior_sensitivity", models=["hier_informed"])
    report = run_prior_sensitivity(spec, centers=[(0.05, 2.0), (0.1, 3.0)])
    assert [(r["r_pos_center"], r["kappa_center"]) for r in report.sensitivity] == [(0.05, 2.0), (0.1, 3.0)]
    assert all(r["ci"][0] <= r["estimate"] <= r["ci"][1] for r in report.sensitivity)


def _report(**fields):
    return QualityReport(mode="headline", seed=1, config_hash="abc", config={}, **fields)


def test_report_json_is_strict():
    report = _report(selection_ratio_spread={"basic": float("inf")},
                     estimates=[MethodEstimate(method="naive", estimate=0.5, seed=1, config_hash="abc")])
    payload = json.loads(to_json(report))
    assert payload["selection_ratio_spread"] == {"basic": None}
    assert report.estimate("naive").estimate == 0.5
    with pytest.raises(KeyError):
        report.estimate("ipw")


def test_unknown_report_format(tmp_path):
    with pytest.raises(ConfigError) as info:
        emit_report(_report(), tmp_path / "out.txt", fmt="yaml")
    assert info.value.code == "unknown_format"
