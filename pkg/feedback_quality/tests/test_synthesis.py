import numpy as np
import pytest

from feedback_quality.bayes import build_model
from feedback_quality.core.config import PriorConfig
from feedback_quality.core.errors import EvaluationError
from feedback_quality.core.types import prevalence
from feedback_quality.synthesis import (
    aggregate_posterior,
    anchor_gap,
    credible_interval,
    flag_clusters,
    heterogeneity,
    selection_ratio_spread,
    summarize,
    summary_from_fit,
    variance_decomposition,
)


def test_aggregate_uses_population_prevalence():
    draws = np.array([[0.9, 0.3], [0.7, 0.5]])
    np.testing.assert_allclose(aggregate_posterior(draws, np.array([0.25, 0.75])), [0.45, 0.55])


@pytest.mark.parametrize(
    "weights, code",
    [(np.array([0.5, 0.6]), "bad_prevalence"), (np.array([1.5, -0.5]), "bad_prevalence"),
     (np.array([0.2, 0.3, 0.5]), "dimension_mismatch")],
)
def test_aggregate_rejects_bad_weights(weights, code):
    with pytest.raises(EvaluationError) as info:
        aggregate_posterior(np.full((10, 2), 0.5), weights)
    assert info.value.code == code


def test_credible_interval():
    draws = np.linspace(0.0, 1.0, 1001)
    lo, hi = credible_interval(draws, 0.9)
    assert lo == pytest.approx(0.05)
    assert hi == pytest.approx(0.95)
    with pytest.raises(EvaluationError) as info:
        credible_interval(draws[:50])
    assert info.value.code == "too_few_draws"
    with pytest.raises(ValueError):
        credible_interval(draws, 1.0)


def test_independent_clusters_have_no_residual_variance():
    rng = np.random.default_rng(0)
    draws = rng.beta([20, 50, 5], [10, 50, 15], size=(40000, 3))
    weights = np.array([0.2, 0.5, 0.3])
    parts = variance_decomposition(draws, weights)
    assert parts.within == pytest.approx(parts.total, rel=0.05)
    assert abs(parts.residual) < 0.05 * parts.total


def test_correlated_clusters_show_up_as_residual():
    column = np.random.default_rng(1).beta(10, 10, size=5000)
    draws = np.column_stack([column, column])
    weights = np.array([0.5, 0.5])
    parts = variance_decomposition(draws, weights)
    assert parts.total == pytest.approx(np.var(column, ddof=1))
    assert parts.residual == pytest.approx(0.5 * np.var(column, ddof=1))


def test_heterogeneity():
    draws = np.tile([0.2, 0.8], (200, 1))
    assert heterogeneity(draws, np.array([0.5, 0.5])) == pytest.approx(0.09)
    assert heterogeneity(draws, np.array([1.0, 0.0])) == pytest.approx(0.0)


def test_summary_flags_confident_low_clusters():
    rng = np.random.default_rng(2)
    draws = np.column_stack([
        rng.normal(0.5, 0.01, 2000),   # low and tight
        rng.uniform(0.1, 0.9, 2000),   # low but uncertain
        rng.normal(0.9, 0.01, 2000),   # high
    ])
    summary = summarize(draws, np.array([0.3, 0.3, 0.4]), ["low", "vague", "high"])
    assert summary.flags == ["low"]
    assert flag_clusters(summary) == ["low"]
    assert flag_clusters(summary, max_ci_width=1.0) == ["low", "vague"]
    assert summary.clusters[2].prevalence == pytest.approx(0.4)
    assert summary.aggregate.level == 0.95
    assert summary.aggregate.ci[0] < summary.aggregate.mean < summary.aggregate.ci[1]


def test_summary_requires_one_id_per_cluster():
    with pytest.raises(EvaluationError) as info:
        summarize(np.full((200, 2), 0.5), np.array([0.5, 0.5]), ["only"])
    assert info.value.code == "dimension_mismatch"


def test_selection_ratio_spread():
    s = np.tile([0.02, 0.05, 0.2], (3, 10, 1))
    assert selection_ratio_spread(s) == pytest.approx(10.0)
    assert selection_ratio_spread(np.array([[0.0, 0.1]])) == float("inf")


def test_anchor_gap():
    draws = np.random.default_rng(3).normal(0.7, 0.02, 2000)
    gap = anchor_gap(draws, [1] * 14 + [0] * 6)
    assert gap.anchor_mean == pytest.approx(0.7)
    assert gap.anchor_size == 20
    assert gap.overlap
    assert abs(gap.gap) < 0.01
    far = anchor_gap(draws, [0] * 200)
    assert not far.overlap


@pytest.mark.parametrize("labels, code", [([], "empty_anchor"), ([0, 2], "bad_anchor")])
def test_anchor_gap_rejects(labels, code):
    with pytest.raises(EvaluationError) as info:
        anchor_gap(np.full(200, 0.5), labels)
    assert info.value.code == code


def test_summary_from_fit(small_dataset):
    model = build_model("enhanced", small_dataset, PriorConfig())
    draws = np.random.default_rng(4).normal(size=(2, 150, model.dimension))
    summary = summary_from_fit(model, draws)
    q = model.quality_draws(draws.reshape(-1, model.dimension))
    assert summary.aggregate.mean == pytest.approx(float((q @ prevalence(small_dataset)).mean()))
    assert [c.cluster_id for c in summary.clusters] == small_dataset.cluster_ids


def test_aggregate_commutes_with_cluster_order():
    rng = np.random.default_rng(5)
    draws = rng.beta([8, 3, 12, 6], [4, 9, 2, 6], size=(500, 4))
    weights = np.array([0.1, 0.4, 0.3, 0.2])
    order = [3, 1, 0, 2]
    np.testing.assert_allclose(
        aggregate_posterior(draws[:, order], weights[order]), aggregate_posterior(draws, weights), rtol=1e-12
    )


def test_flags_grow_with_the_target():
    rng = np.random.default_rng(6)
    draws = np.column_stack([rng.beta(a * 2000, (1 - a) * 2000, size=4000) for a in (0.35, 0.5, 0.62, 0.8, 0.9)])
    summary = summarize(draws, np.full(5, 0.2), ["a", "b", "c", "d", "e"])
    previous: set[str] = set()
    for target in np.linspace(0.0, 1.0, 21):
        flagged = set(flag_clusters(summary, q_target=float(target)))
        assert previous <= flagged
        previous = flagged
    assert previous == {"a", "b", "c", "d", "e"}
