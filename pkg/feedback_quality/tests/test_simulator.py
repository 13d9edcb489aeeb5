import math
import unittest

import numpy as np

from feedback_quality.estimators import oracle_truth
from feedback_quality.simulator import (
    BiasParams,
    SyntheticPopulation,
    draw_bias_params,
    expected_counts,
    make_population,
    simulate_feedback,
    simulate_interactions,
)
from feedback_quality.core.types import aggregate_from_interactions


class TestBiasParams(unittest.TestCase):
    def test_ranges(self):
        bias = draw_bias_params(500, 30.0, np.random.default_rng(3))
        self.assertTrue(np.all((bias.s0 >= 0.02) & (bias.s0 <= 0.12)))
        self.assertTrue(np.all((bias.kappa >= 1.0) & (bias.kappa <= 30.0)))
        self.assertTrue(np.all(bias.r_neg <= 1.0))

    def test_kappa_max_one_means_no_bias(self):
        bias = draw_bias_params(20, 1.0, np.random.default_rng(0))
        np.testing.assert_allclose(bias.kappa, 1.0)
        np.testing.assert_allclose(bias.r_neg, bias.s0)

    def test_clipping_is_recorded(self):
        bias = BiasParams(s0=np.array([0.12]), kappa=np.array([30.0]))
        self.assertEqual(bias.r_neg.tolist(), [1.0])
        self.assertEqual(bias.to_dict()["r_neg"], [1.0])

    def test_rejects_bad_arguments(self):
        with self.assertRaises(ValueError):
            draw_bias_params(0, 10.0, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            draw_bias_params(5, 0.5, np.random.default_rng(0))


class TestPopulation(unittest.TestCase):
    def test_sizes_and_truth(self):
        pop = make_population(18, rng=np.random.default_rng(1))
        self.assertEqual(pop.C, 18)
        self.assertTrue(np.all((pop.n >= 100) & (pop.n <= 2000)))
        self.assertAlmostEqual(pop.prevalence.sum(), 1.0)
        self.assertAlmostEqual(oracle_truth(pop), float(np.dot(pop.prevalence, pop.q_star)))

    def test_same_seed_same_population(self):
        a = make_population(10, rng=np.random.default_rng(42))
        b = make_population(10, rng=np.random.default_rng(42))
        np.testing.assert_array_equal(a.n, b.n)
        np.testing.assert_array_equal(a.q_star, b.q_star)

    def test_rejects_bad_size_range(self):
        with self.assertRaises(ValueError):
            make_population(3, size_range=(10, 5))


class TestFeedback(unittest.TestCase):
    def test_counts_are_consistent(self):
        rng = np.random.default_rng(7)
        pop = make_population(30, rng=rng)
        sim = simulate_feedback(pop, draw_bias_params(30, 10.0, rng), rng)
        data = sim.dataset
        self.assertTrue(np.all(data.y <= data.m))
        self.assertTrue(np.all(data.m <= data.n))
        self.assertTrue(np.all(data.y <= sim.latent_positive))
        np.testing.assert_array_equal(data.n, pop.n)

    def test_moments_match_expected_counts(self):
        """Empirical m/n and y/m at n = 10^6 agree with the closed form."""
        rng = np.random.default_rng(2024)
        n = 10**6
        for _ in range(10):
            q = rng.uniform(0.2, 0.9)
            r_pos = rng.uniform(0.02, 0.12)
            kappa = rng.uniform(1.0, 6.0)
            pop = SyntheticPopulation(n=np.array([n]), q_star=np.array([q]), cluster_ids=("c0",))
            bias = BiasParams(s0=np.array([r_pos]), kappa=np.array([kappa]))
            data = simulate_feedback(pop, bias, rng).dataset
            expected_m, share = expected_counts(q, r_pos, float(bias.r_neg[0]), n)
            rate = expected_m / n
            m, y = int(data.m[0]), int(data.y[0])
            self.assertLess(abs(m / n - rate), 4 * math.sqrt(rate * (1 - rate) / n))
            self.assertLess(abs(y / m - share), 4 * math.sqrt(share * (1 - share) / m))

    def test_interaction_level_export_aggregates(self):
        rng = np.random.default_rng(5)
        pop = make_population(3, size_range=(20, 40), rng=rng)
        records = simulate_interactions(pop, draw_bias_params(3, 5.0, rng), rng)
        data = aggregate_from_interactions(records)
        np.testing.assert_array_equal(data.n, pop.n)
        self.assertTrue(all(r.f is None for r in records if r.r == 0))
        self.assertTrue(all(r.f == r.y_star for r in records if r.r == 1))


class TestExpectedCounts(unittest.TestCase):
    def test_no_response_possible(self):
        self.assertEqual(expected_counts(0.5, 0.0, 0.0, 100), (0.0, None))

    def test_unbiased_channel_reports_true_quality(self):
        m, share = expected_counts(0.7, 0.1, 0.1, 1000)
        self.assertAlmostEqual(m, 100.0)
        self.assertAlmostEqual(share, 0.7)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            expected_counts(1.2, 0.1, 0.1, 10)
