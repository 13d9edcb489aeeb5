import math

import numpy as np
import pytest
from scipy import stats

from feedback_quality.bayes import MODEL_CLASSES, build_model, implied_channel_range, informed_priors_from_dashboard
from feedback_quality.core.config import ModelVariant, PriorConfig
from feedback_quality.core.errors import ConfigError, ModelError
from feedback_quality.core.types import ClusterStats, validate_dataset

VARIANTS = list(ModelVariant)


def _finite_difference(model, theta, h=1e-5):
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        grad[i] = (model.log_posterior(theta + step) - model.log_posterior(theta - step)) / (2 * h)
    return grad


@pytest.mark.parametrize("variant", VARIANTS)
def test_gradient_matches_finite_differences(variant, small_dataset):
    model = build_model(variant, small_dataset)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        theta = model.initial_point(rng) + rng.normal(0.0, 0.3, size=model.dimension)
        _, analytic = model.log_posterior_and_grad(theta)
        numeric = _finite_difference(model, theta)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    assert worst <= 1e-6


@pytest.mark.parametrize("variant", VARIANTS)
def test_posterior_decomposes_into_likelihood_prior_and_jacobian(variant, small_dataset):
    model = build_model(variant, small_dataset)
    theta = model.initial_point(np.random.default_rng(2))
    expected = model.log_likelihood(theta) + model.log_prior(theta) + model.log_jacobian(theta)
    assert model.log_posterior(theta) == pytest.approx(expected, rel=1e-9, abs=1e-8)


@pytest.mark.parametrize(
    "variant, dimension",
    [
        (ModelVariant.BASIC, 4 + 2 * 4),
        (ModelVariant.ENHANCED, 4 + 4),
        (ModelVariant.HIER_SENTIMENT, 6 + 3 * 4),
        (ModelVariant.HIER_INFORMED, 2 + 3 * 4),
        (ModelVariant.CORRECTED_GLOBAL, 3),
    ],
)
def test_dimensions(variant, dimension, small_dataset):
    model = build_model(variant, small_dataset)
    assert model.dimension == dimension
    assert len(model.param_names) == dimension


@pytest.mark.parametrize("variant", VARIANTS)
def test_pointwise_sums_to_likelihood(variant, small_dataset):
    model = build_model(variant, small_dataset)
    theta = model.initial_point(np.random.default_rng(4))
    pointwise = model.pointwise_joint_loglik(theta)
    assert pointwise.shape == (small_dataset.C,)
    assert float(pointwise.sum()) + model.pooling_offset == pytest.approx(model.log_likelihood(theta))


def test_only_pooled_model_has_an_offset(small_dataset):
    offsets = {v: build_model(v, small_dataset).pooling_offset for v in VARIANTS}
    assert all(offsets[v] == 0.0 for v in VARIANTS if v is not ModelVariant.CORRECTED_GLOBAL)
    assert offsets[ModelVariant.CORRECTED_GLOBAL] != 0.0


def test_basic_likelihood_is_two_binomials(small_dataset):
    model = build_model("basic", small_dataset)
    theta = model.initial_point(np.random.default_rng(0))
    values, _ = model.to_constrained(theta)
    expected = stats.binom.logpmf(small_dataset.m, small_dataset.n, values["s"]) + stats.binom.logpmf(
        small_dataset.y, small_dataset.m, values["q"]
    )
    np.testing.assert_allclose(model.pointwise_joint_loglik(theta), expected, rtol=1e-8)


def test_two_channel_likelihood_matches_binomial_form(small_dataset):
    model = build_model("enhanced", small_dataset)
    theta = model.initial_point(np.random.default_rng(0))
    s, p = model.rates(theta)
    expected = stats.binom.logpmf(small_dataset.m, small_dataset.n, s) + stats.binom.logpmf(
        small_dataset.y, small_dataset.m, p
    )
    np.testing.assert_allclose(model.pointwise_joint_loglik(theta), expected, rtol=1e-8)


def test_fixed_hyperparameters_leave_the_layout(small_dataset):
    fixed = PriorConfig(fixed_hyperparameters={"alpha_s": 1.0, "beta_s": 1.0, "alpha_q": 1.0, "beta_q": 1.0})
    model = build_model("basic", small_dataset, fixed)
    assert model.dimension == 2 * small_dataset.C
    assert not any(name.startswith(("alpha", "beta")) for name in model.param_names)


def test_unknown_fixed_hyperparameter(small_dataset):
    with pytest.raises(ModelError) as info:
        build_model("enhanced", small_dataset, PriorConfig(fixed_hyperparameters={"alpha_s": 1.0}))
    assert info.value.code == "unknown_hyperparameter"


def test_dimension_mismatch(small_dataset):
    model = build_model("basic", small_dataset)
    with pytest.raises(ModelError) as info:
        model.log_posterior(np.zeros(model.dimension + 1))
    assert info.value.code == "dimension_mismatch"


def test_boundary_values_are_rejected(small_dataset):
    model = build_model("corrected_global", small_dataset)
    with pytest.raises(ModelError) as info:
        model.to_unconstrained({"Q": 1.0, "r_pos": 0.1, "r_neg": 0.1})
    assert info.value.code == "boundary_value"


def test_unknown_variant(small_dataset):
    with pytest.raises(ConfigError):
        build_model("gaussian", small_dataset)
    assert set(MODEL_CLASSES) == set(VARIANTS)


@pytest.mark.parametrize("alias", ["HierInformed", "hier-informed", "hier_informed"])
def test_variant_aliases(alias):
    assert ModelVariant.parse(alias) is ModelVariant.HIER_INFORMED


def test_quality_draws_broadcast_global_quality(small_dataset):
    model = build_model("corrected_global", small_dataset)
    draws = np.zeros((7, model.dimension))
    q = model.quality_draws(draws)
    assert q.shape == (7, small_dataset.C)
    np.testing.assert_allclose(q, 0.5)


def test_quality_draws_match_single_evaluation(small_dataset):
    model = build_model("hier_informed", small_dataset)
    rng = np.random.default_rng(8)
    draws = np.stack([model.initial_point(rng) for _ in range(5)])
    q = model.quality_draws(draws)
    for row, theta in zip(q, draws):
        np.testing.assert_allclose(row, model.quality(theta))


def test_informed_rates_are_capped(small_dataset):
    model = build_model("hier_informed", small_dataset)
    theta = model.initial_point(np.random.default_rng(1))
    theta[model.layout.slice("kappa")] = 10.0
    s, _ = model.rates(theta)
    assert np.all(s <= 1.0)
    assert np.isfinite(model.log_posterior(theta))
    assert np.all(model.negative_rate_draws(theta[None, :]) < 1.0)


def test_informed_positive_rate_draws_stay_below_one(small_dataset):
    model = build_model("hier_informed", small_dataset)
    rng = np.random.default_rng(4)
    draws = np.stack([model.initial_point(rng) for _ in range(3)])
    draws[0, model.layout.slice("r_pos")] = 2.0
    constrained = model.constrain(draws)
    r_pos = constrained[:, model.layout.slice("r_pos")]
    assert np.all(r_pos < 1.0)
    np.testing.assert_allclose(r_pos[1:], np.exp(draws[1:, model.layout.slice("r_pos")]))
    np.testing.assert_allclose(constrained[0], model.constrain(draws[0]))


def test_constrain_is_vectorized(small_dataset):
    model = build_model("hier_sentiment", small_dataset)
    rng = np.random.default_rng(3)
    draws = np.stack([model.initial_point(rng) for _ in range(4)]).reshape(2, 2, model.dimension)
    constrained = model.constrain(draws)
    assert constrained.shape == draws.shape
    values, _ = model.to_constrained(draws[1, 0])
    flat = np.concatenate([values[b.name] for b in model.layout.blocks])
    np.testing.assert_allclose(constrained[1, 0], flat)


def test_posterior_predictive_draw_respects_counts(small_dataset):
    model = build_model("enhanced", small_dataset)
    rng = np.random.default_rng(0)
    m_rep, y_rep = model.posterior_predictive_draw(model.initial_point(rng), rng)
    assert np.all(m_rep <= small_dataset.n)
    assert np.all(y_rep <= m_rep)


def test_dashboard_priors():
    assert informed_priors_from_dashboard(0.05, 0.10) == pytest.approx((0.1, 2.0))
    config = PriorConfig.from_dashboard(0.05, 0.10)
    assert math.exp(config.informed_logrpos_center) == pytest.approx(0.1)
    assert math.exp(config.informed_logkappa_center) == pytest.approx(2.0)


def test_implied_channel_range():
    rng = implied_channel_range(0.05, 0.10, (0.3, 0.7))
    assert rng.r_pos[0] == pytest.approx(0.071, abs=1e-3)
    assert rng.r_pos[1] == pytest.approx(0.167, abs=1e-3)
    assert rng.kappa[0] == pytest.approx(0.857, abs=1e-3)
    assert rng.kappa[1] == pytest.approx(4.667, abs=1e-3)


@pytest.mark.parametrize("rates", [(0.0, 0.1), (0.5, -0.1), (0.6, 0.5)])
def test_dashboard_rates_are_checked(rates):
    with pytest.raises(ValueError):
        informed_priors_from_dashboard(*rates)


def test_single_cluster_dataset_builds_every_variant():
    ds = validate_dataset([ClusterStats(cluster_id="only", n=100, m=30, y=20)])
    for variant in VARIANTS:
        model = build_model(variant, ds)
        assert np.isfinite(model.log_posterior(model.initial_point(np.random.default_rng(0))))


@pytest.mark.parametrize("variant", VARIANTS)
def test_log_posterior_invariant_to_cluster_order(variant, small_dataset):
    order = [2, 0, 3, 1]
    model = build_model(variant, small_dataset)
    shuffled = build_model(variant, small_dataset.permuted(order))
    rng = np.random.default_rng(21)
    for _ in range(3):
        theta = model.initial_point(rng)
        values, _ = model.to_constrained(theta)
        moved = {
            b.name: values[b.name][order] if b.per_cluster else values[b.name]
            for b in model.layout.blocks
        }
        theta_shuffled = shuffled.to_unconstrained(moved).values
        assert shuffled.log_posterior(theta_shuffled) == pytest.approx(model.log_posterior(theta), rel=1e-10)
        np.testing.assert_allclose(
            shuffled.pointwise_joint_loglik(theta_shuffled), model.pointwise_joint_loglik(theta)[order], rtol=1e-10
        )


def _equal_channel_values(variant, q, r):
    hyper = np.array([2.0])
    if variant is ModelVariant.ENHANCED:
        return {"alpha_q": hyper, "beta_q": hyper, "r_pos": np.array([r[0]]), "r_neg": np.array([r[0]]), "q": q}
    if variant is ModelVariant.HIER_SENTIMENT:
        return {
            "alpha_q": hyper, "beta_q": hyper,
            "mu_pos": np.array([0.1]), "phi_pos": hyper, "mu_neg": np.array([0.1]), "phi_neg": hyper,
            "q": q, "r_pos": r, "r_neg": r,
        }
    return {"alpha_q": hyper, "beta_q": hyper, "q": q, "r_pos": r, "kappa": np.ones_like(r)}


@pytest.mark.parametrize("variant", [ModelVariant.ENHANCED, ModelVariant.HIER_SENTIMENT, ModelVariant.HIER_INFORMED])
def test_equal_channel_rates_reduce_to_basic(variant, small_dataset):
    q = np.array([0.3, 0.55, 0.7, 0.9])
    if variant is ModelVariant.ENHANCED:
        r = np.full(small_dataset.C, 0.12)
    else:
        r = np.array([0.05, 0.12, 0.2, 0.08])
    basic = build_model("basic", small_dataset)
    hyper = np.array([2.0])
    basic_theta = basic.to_unconstrained(
        {"alpha_s": hyper, "beta_s": hyper, "alpha_q": hyper, "beta_q": hyper, "s": r, "q": q}
    ).values
    model = build_model(variant, small_dataset)
    theta = model.to_unconstrained(_equal_channel_values(variant, q, r)).values
    np.testing.assert_allclose(model.pointwise_joint_loglik(theta), basic.pointwise_joint_loglik(basic_theta), rtol=1e-9)
    s, p = model.rates(theta)
    np.testing.assert_allclose(s, r, rtol=1e-9)
    np.testing.assert_allclose(p, q, rtol=1e-9)
