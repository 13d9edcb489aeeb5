import math

import pytest

from feedback_quality.core.errors import EvaluationError
from feedback_quality.core.types import ClusterStats
from feedback_quality.drift import (
    BatchSummary,
    BetaPosterior,
    DriftAction,
    DriftMonitor,
    DriftThresholds,
    align_prevalence,
    bayes_factor_split,
    conjugate_update,
    drift_decision,
    js_divergence,
    noise_rule,
)


def _batch(index=0, noise=0.0, sizes=None, positives=None):
    sizes = sizes or {"a": 1000, "b": 1000, "c": 1000, "d": 1000}
    positives = positives or {}
    clusters = [ClusterStats(cluster_id=cid, n=n, m=100, y=positives.get(cid, 80)) for cid, n in sizes.items()]
    return BatchSummary(clusters=clusters, noise_fraction=noise, index=index)


def test_js_divergence_bounds():
    assert js_divergence([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.log(2.0))
    assert js_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert js_divergence([0.2, 0.8], [0.6, 0.4]) == pytest.approx(js_divergence([0.6, 0.4], [0.2, 0.8]))


@pytest.mark.parametrize("p, q", [([0.5, 0.6], [0.5, 0.5]), ([1.0], [0.5, 0.5]), ([-0.5, 1.5], [0.5, 0.5])])
def test_js_divergence_rejects(p, q):
    with pytest.raises(ValueError):
        js_divergence(p, q)


def test_align_prevalence_covers_both_supports():
    current, reference = align_prevalence({"a": 0.5, "new": 0.5}, {"a": 0.6, "gone": 0.4})
    assert current.tolist() == [0.5, 0.0, 0.5]
    assert reference.tolist() == [0.6, 0.4, 0.0]


def test_bayes_factor_detects_a_flip():
    assert bayes_factor_split((10, 10), (10, 0)) > 10
    assert bayes_factor_split((100, 80), (100, 80)) < 1


@pytest.mark.parametrize(
    "window_a, window_b, prior",
    [((10, 10), (10, 0), (1.0, 1.0)), ((40, 12), (250, 190), (1.0, 1.0)), ((7, 3), (0, 0), (2.0, 5.0))],
)
def test_bayes_factor_is_symmetric(window_a, window_b, prior):
    assert bayes_factor_split(window_a, window_b, prior) == pytest.approx(
        bayes_factor_split(window_b, window_a, prior), rel=1e-12
    )


def test_bayes_factor_rejects_bad_counts():
    with pytest.raises(ValueError):
        bayes_factor_split((5, 6), (5, 1))
    with pytest.raises(ValueError):
        bayes_factor_split((5, 1), (5, 1), prior=(0.0, 1.0))


def test_conjugate_updates_compose():
    stepwise = conjugate_update(conjugate_update((2.0, 3.0), (10, 4)), (20, 15))
    assert stepwise == conjugate_update(BetaPosterior(a=2.0, b=3.0), (30, 19))
    assert stepwise.mean == pytest.approx(21 / 35)
    assert BetaPosterior().update(4, 4) == BetaPosterior(a=5.0, b=1.0)


@pytest.mark.parametrize(
    "history, fired",
    [
        ([0.02, 0.05, 0.08, 0.11], True),
        ([0.0, 0.02, 0.05, 0.08, 0.11], True),
        ([0.02, 0.03, 0.04, 0.05], False),
        ([0.02, 0.08, 0.07, 0.12], False),
        ([0.02, 0.08, 0.14], False),
    ],
)
def test_noise_rule(history, fired):
    assert noise_rule(history, DriftThresholds()) is fired


def test_quiet_batch():
    decision = drift_decision([_batch(0), _batch(1)])
    assert decision.action is DriftAction.NONE
    assert decision.signals == []
    assert decision.jsd == 0.0
    assert decision.index == 1


def test_single_flip_alerts_the_cluster():
    decision = drift_decision([_batch(0), _batch(1, positives={"b": 20})])
    assert decision.action is DriftAction.CLUSTER_ALERT
    assert decision.alerted_clusters == ["b"]
    assert decision.signals == ["cluster_bf"]


def test_two_flips_call_for_refit():
    decision = drift_decision([_batch(0), _batch(1, positives={"a": 20, "c": 30})])
    assert decision.action is DriftAction.REFIT
    assert sorted(decision.alerted_clusters) == ["a", "c"]


def test_prevalence_shift_calls_for_recluster():
    shifted = _batch(1, sizes={"a": 3000, "b": 300, "c": 300, "d": 300}, positives={"a": 20})
    decision = drift_decision([_batch(0), shifted])
    assert decision.action is DriftAction.RECLUSTER
    assert decision.signals == ["prevalence_jsd", "cluster_bf"]


def test_drift_decision_needs_two_batches():
    with pytest.raises(EvaluationError) as info:
        drift_decision([_batch(0)])
    assert info.value.code == "too_few_batches"


def test_monitor_tracks_noise_across_batches():
    monitor = DriftMonitor()
    decisions = monitor.run(_batch(i, noise=n) for i, n in enumerate([0.02, 0.05, 0.08, 0.11]))
    assert [d.action for d in decisions] == [DriftAction.NONE, DriftAction.NONE, DriftAction.RECLUSTER]
    assert decisions[-1].signals == ["noise_climb"]
    assert decisions[-1].noise_history == [0.02, 0.05, 0.08, 0.11]


def test_monitor_keeps_posteriors_current(small_dataset):
    monitor = DriftMonitor()
    monitor.seed_posteriors(small_dataset)
    assert monitor.posterior("a") == BetaPosterior(a=10.0, b=6.0)
    assert monitor.observe(_batch(0)) is None
    assert monitor.posterior("a") == BetaPosterior(a=90.0, b=26.0)
    assert monitor.posterior("d") == BetaPosterior(a=91.0, b=36.0)
    assert monitor.snapshot().steps == 1


def test_checkpoint_round_trip(db):
    monitor = DriftMonitor(DriftThresholds(jsd=0.1))
    monitor.run([_batch(0, noise=0.01), _batch(1, noise=0.02)])
    monitor.save_checkpoint(db, "prod")

    restored = DriftMonitor.load_checkpoint(db, "prod")
    assert restored.snapshot() == monitor.snapshot()
    assert restored.thresholds.jsd == 0.1

    following = _batch(2, positives={"c": 10})
    assert restored.observe(following) == monitor.observe(following)

    monitor.save_checkpoint(db, "prod")
    assert DriftMonitor.load_checkpoint(db, "prod").snapshot().steps == 3


def test_missing_checkpoint(db):
    with pytest.raises(EvaluationError) as info:
        DriftMonitor.load_checkpoint(db, "nope")
    assert info.value.code == "missing_checkpoint"


def test_checkpoint_schema_is_checked():
    payload = DriftMonitor().to_payload()
    payload["schema_version"] = 99
    with pytest.raises(EvaluationError) as info:
        DriftMonitor.from_payload(payload)
    assert info.value.code == "bad_checkpoint"
