import numpy as np
import pytest
from scipy import stats

from feedback_quality.bayes import build_model
from feedback_quality.core.config import PriorConfig, SamplerConfig
from feedback_quality.core.errors import ConfigError
from feedback_quality.core.types import ClusterStats, validate_dataset
from feedback_quality.sampler import SavedFit, chain_rng, load_draws, run_chains, save_draws
from feedback_quality.sampler.draws_io import sidecar_path

UNIT_HYPERS = PriorConfig(fixed_hyperparameters={"alpha_s": 1.0, "beta_s": 1.0, "alpha_q": 1.0, "beta_q": 1.0})


@pytest.fixture(scope="module")
def conjugate_fit():
    dataset = validate_dataset([ClusterStats(cluster_id="solo", n=100, m=30, y=20)])
    model = build_model("basic", dataset, UNIT_HYPERS)
    config = SamplerConfig(chains=4, draws=1000, tune=500, target_accept=0.9, seed=17, workers=1)
    draws, report = run_chains(model, config)
    return model, draws, report, config


def test_conjugate_quality_posterior(conjugate_fit):
    """Beta(1, 1) prior and 20 of 30 positive gives a Beta(21, 11) posterior."""
    _, draws, _, _ = conjugate_fit
    q = draws.get("q[solo]").ravel()
    assert q.mean() == pytest.approx(21 / 32, abs=0.01)
    for level in (0.05, 0.25, 0.5, 0.75, 0.95):
        assert np.quantile(q, level) == pytest.approx(stats.beta.ppf(level, 21, 11), abs=0.02)


def test_conjugate_response_posterior(conjugate_fit):
    _, draws, _, _ = conjugate_fit
    s = draws.get("s[solo]").ravel()
    assert s.mean() == pytest.approx(31 / 102, abs=0.01)


def test_draw_layout(conjugate_fit):
    model, draws, report, config = conjugate_fit
    assert draws.constrained.shape == (4, 1000, model.dimension)
    assert draws.n_samples == 4000
    assert draws.param_names == ["s[solo]", "q[solo]"]
    assert draws.variant == "basic"
    assert draws.stats["divergent"].dtype == bool
    np.testing.assert_allclose(draws.constrained, model.constrain(draws.unconstrained))
    assert report.passed
    with pytest.raises(KeyError):
        draws.get("kappa")


def test_same_seed_same_draws(small_dataset):
    model = build_model("enhanced", small_dataset)
    config = SamplerConfig(chains=2, draws=60, tune=60, seed=3, workers=1)
    first, _ = run_chains(model, config)
    second, _ = run_chains(model, config)
    np.testing.assert_array_equal(first.unconstrained, second.unconstrained)


def test_draws_do_not_depend_on_worker_count(small_dataset):
    model = build_model("enhanced", small_dataset)
    serial, _ = run_chains(model, SamplerConfig(chains=2, draws=50, tune=60, seed=9, workers=1))
    parallel, _ = run_chains(model, SamplerConfig(chains=2, draws=50, tune=60, seed=9, workers=2))
    np.testing.assert_array_equal(serial.unconstrained, parallel.unconstrained)


def test_chain_streams_differ():
    assert chain_rng(1, 0).random() != chain_rng(1, 1).random()
    assert chain_rng(1, 0).random() == chain_rng(1, 0).random()


@pytest.mark.parametrize("suffix", [".json", ".bin"])
def test_saved_draws_rebuild_the_fit(tmp_path, conjugate_fit, suffix):
    model, draws, report, config = conjugate_fit
    fit = SavedFit(variant=model.variant, dataset=model.dataset, priors=model.priors, draws=draws,
                   report=report, seed=config.seed)
    path = save_draws(fit, tmp_path / f"fit{suffix}")
    if suffix == ".bin":
        assert sidecar_path(path).exists()
        assert path.stat().st_size == 2 * draws.constrained.size * 8
    loaded = load_draws(path)
    np.testing.assert_array_equal(loaded.draws.unconstrained, draws.unconstrained)
    assert loaded.dataset == model.dataset
    assert loaded.priors == model.priors
    assert loaded.seed == 17
    assert loaded.report == report
    rebuilt = loaded.build_model()
    theta = draws.flat(unconstrained=True)[0]
    assert rebuilt.log_posterior(theta) == pytest.approx(model.log_posterior(theta))


def test_unreadable_draws(tmp_path):
    missing = tmp_path / "nothing.bin"
    missing.write_bytes(b"\x00" * 8)
    with pytest.raises(ConfigError) as info:
        load_draws(missing)
    assert info.value.code == "unreadable_draws"
