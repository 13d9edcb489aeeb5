"""The five model variants.

All variants model the same per-cluster data (n_c, m_c, y_c). They differ in
how the feedback probability and the positive share are tied to latent quality:

* ``Basic``: separate s_c and q_c; feedback selection is ignorable within a cluster.
* ``Enhanced``: one global pair of channel rates r_pos, r_neg.
* ``HierSentiment``: per-cluster channel rates partially pooled through Beta priors.
* ``HierInformed``: per-cluster channel rates with informative log-normal priors.
* ``CorrectedGlobal``: a single global quality fit to pooled counts.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expit, log_expit

from feedback_quality.bayes.base import ModelInstance
from feedback_quality.bayes.densities import (
    beta_logit,
    binom_const,
    binomial_logit,
    channel_loglik,
    channel_rates,
    gamma_log,
    halfnormal_log,
    normal_log,
    uniform_logit,
)
from feedback_quality.bayes.transforms import Block, Transform
from feedback_quality.core.config import ModelVariant, PriorConfig
from feedback_quality.core.errors import ModelError
from feedback_quality.core.types import Dataset

P, POS = Transform.PROB, Transform.POS

#: upper clip for per-cluster channel rates in log-space
LOG_RATE_CAP = math.log1p(-1e-9)


def _scalar(u: np.ndarray) -> float:
    return float(u[0])


class _QualityHierarchy:
    """Beta(alpha_q, beta_q) on q_c with HalfNormal hyperpriors, shared by four variants."""

    def _quality_prior(self: ModelInstance, u: dict, grads: dict, want_grad: bool) -> float:
        sigma = self.priors.halfnormal_sigma
        lp = 0.0
        for name in ("alpha_q", "beta_q"):
            if name not in self.fixed:
                v, d = halfnormal_log(_scalar(u[name]), sigma)
                lp += v
                grads[name][0] += d
        a_q = math.exp(_scalar(u["alpha_q"]))
        b_q = math.exp(_scalar(u["beta_q"]))
        v, d_x, d_a, d_b = beta_logit(u["q"], a_q, b_q)
        lp += v
        if want_grad:
            grads["q"] += d_x
            grads["alpha_q"][0] += d_a * a_q
            grads["beta_q"][0] += d_b * b_q
        return lp

    def _quality_prior_constrained(self: ModelInstance, values: dict) -> float:
        sigma = self.priors.halfnormal_sigma
        lp = 0.0
        for name in ("alpha_q", "beta_q"):
            if name not in self.fixed:
                lp += float(stats.halfnorm.logpdf(values[name][0], scale=sigma))
        lp += float(np.sum(stats.beta.logpdf(values["q"], values["alpha_q"][0], values["beta_q"][0])))
        return lp


class BasicModel(_QualityHierarchy, ModelInstance):
    """m_c ~ Bin(n_c, s_c), y_c ~ Bin(m_c, q_c), Beta priors on s_c and q_c."""

    variant = ModelVariant.BASIC
    hyper_names = ("alpha_s", "beta_s", "alpha_q", "beta_q")

    def _blocks(self) -> Sequence[Block]:
        return [
            Block("alpha_s", 1, POS),
            Block("beta_s", 1, POS),
            Block("alpha_q", 1, POS),
            Block("beta_q", 1, POS),
            Block("s", self.C, P, per_cluster=True),
            Block("q", self.C, P, per_cluster=True),
        ]

    def _evaluate(self, u, want_grad):
        grads = self._zero_grads()
        prior = self._quality_prior(u, grads, want_grad)
        sigma = self.priors.halfnormal_sigma
        for name in ("alpha_s", "beta_s"):
            if name not in self.fixed:
                v, d = halfnormal_log(_scalar(u[name]), sigma)
                prior += v
                grads[name][0] += d
        a_s = math.exp(_scalar(u["alpha_s"]))
        b_s = math.exp(_scalar(u["beta_s"]))
        v, d_x, d_a, d_b = beta_logit(u["s"], a_s, b_s)
        prior += v

        stage1, d_s = binomial_logit(self.m, self.n, u["s"])
        stage2, d_q = binomial_logit(self.y, self.m, u["q"])
        pointwise = self.log_coef + stage1 + stage2
        if want_grad:
            grads["s"] += d_x + d_s
            grads["alpha_s"][0] += d_a * a_s
            grads["beta_s"][0] += d_b * b_s
            grads["q"] += d_q
        return pointwise, float(pointwise.sum()), prior, grads

    def _rates(self, u):
        return expit(u["s"]), expit(u["q"])

    def _log_prior_constrained(self, values):
        lp = self._quality_prior_constrained(values)
        for name in ("alpha_s", "beta_s"):
            if name not in self.fixed:
                lp += float(stats.halfnorm.logpdf(values[name][0], scale=self.priors.halfnormal_sigma))
        lp += float(np.sum(stats.beta.logpdf(values["s"], values["alpha_s"][0], values["beta_s"][0])))
        return lp

    def initial_values(self):
        return {**self._hyper_start(), "s": self._moment_response(), "q": self._moment_quality()}


class EnhancedModel(_QualityHierarchy, ModelInstance):
    """Global channel rates: s_c = q_c r_pos + (1 - q_c) r_neg."""

    variant = ModelVariant.ENHANCED
    hyper_names = ("alpha_q", "beta_q")

    def _blocks(self):
        return [
            Block("alpha_q", 1, POS),
            Block("beta_q", 1, POS),
            Block("r_pos", 1, P),
            Block("r_neg", 1, P),
            Block("q", self.C, P, per_cluster=True),
        ]

    def _evaluate(self, u, want_grad):
        grads = self._zero_grads()
        prior = self._quality_prior(u, grads, want_grad)
        x_rp, x_rn = u["r_pos"], u["r_neg"]
        for name in ("r_pos", "r_neg"):
            v, d = uniform_logit(u[name])
            prior += v
            grads[name] += d
        value, d_xq, d_lrp, d_lrn = channel_loglik(
            self.n, self.m, self.y, u["q"], log_expit(x_rp), log_expit(x_rn), expit(-x_rp), expit(-x_rn)
        )
        pointwise = self.log_coef + value
        if want_grad:
            grads["q"] += d_xq
            grads["r_pos"] += d_lrp.sum() * expit(-x_rp)
            grads["r_neg"] += d_lrn.sum() * expit(-x_rn)
        return pointwise, float(pointwise.sum()), prior, grads

    def _rates(self, u):
        return channel_rates(u["q"], expit(u["r_pos"]), expit(u["r_neg"]))

    def _log_prior_constrained(self, values):
        return self._quality_prior_constrained(values)

    def initial_values(self):
        rate = self._pooled_response()
        return {**self._hyper_start(), "r_pos": rate, "r_neg": rate, "q": self._moment_quality()}


class HierSentimentModel(_QualityHierarchy, ModelInstance):
    """Per-cluster channel rates pooled through Beta(mu*phi, (1-mu)*phi) priors."""

    variant = ModelVariant.HIER_SENTIMENT
    hyper_names = ("alpha_q", "beta_q", "mu_pos", "phi_pos", "mu_neg", "phi_neg")

    def _blocks(self):
        return [
            Block("alpha_q", 1, POS),
            Block("beta_q", 1, POS),
            Block("mu_pos", 1, P),
            Block("phi_pos", 1, POS),
            Block("mu_neg", 1, P),
            Block("phi_neg", 1, POS),
            Block("q", self.C, P, per_cluster=True),
            Block("r_pos", self.C, P, per_cluster=True),
            Block("r_neg", self.C, P, per_cluster=True),
        ]

    def _channel_prior(self, u, grads, suffix, want_grad) -> float:
        mu_a, mu_b = self.priors.hs_mu_beta
        shape, rate = self.priors.hs_precision_gamma
        mu_name, phi_name, r_name = f"mu_{suffix}", f"phi_{suffix}", f"r_{suffix}"
        lp = 0.0
        if mu_name not in self.fixed:
            v, d_x, _, _ = beta_logit(u[mu_name], mu_a, mu_b)
            lp += v
            grads[mu_name] += d_x
        if phi_name not in self.fixed:
            v, d = gamma_log(_scalar(u[phi_name]), shape, rate)
            lp += v
            grads[phi_name][0] += d
        mu = float(expit(_scalar(u[mu_name])))
        phi = math.exp(_scalar(u[phi_name]))
        a, b = mu * phi, (1.0 - mu) * phi
        v, d_x, d_a, d_b = beta_logit(u[r_name], a, b)
        lp += v
        if want_grad:
            grads[r_name] += d_x
            grads[mu_name][0] += phi * (d_a - d_b) * mu * (1.0 - mu)
            grads[phi_name][0] += (mu * d_a + (1.0 - mu) * d_b) * phi
        return lp

    def _evaluate(self, u, want_grad):
        grads = self._zero_grads()
        prior = self._quality_prior(u, grads, want_grad)
        prior += self._channel_prior(u, grads, "pos", want_grad)
        prior += self._channel_prior(u, grads, "neg", want_grad)
        x_rp, x_rn = u["r_pos"], u["r_neg"]
        value, d_xq, d_lrp, d_lrn = channel_loglik(
            self.n, self.m, self.y, u["q"], log_expit(x_rp), log_expit(x_rn), expit(-x_rp), expit(-x_rn)
        )
        pointwise = self.log_coef + value
        if want_grad:
            grads["q"] += d_xq
            grads["r_pos"] += d_lrp * expit(-x_rp)
            grads["r_neg"] += d_lrn * expit(-x_rn)
        return pointwise, float(pointwise.sum()), prior, grads

    def _rates(self, u):
        return channel_rates(u["q"], expit(u["r_pos"]), expit(u["r_neg"]))

    def _log_prior_constrained(self, values):
        lp = self._quality_prior_constrained(values)
        mu_a, mu_b = self.priors.hs_mu_beta
        shape, rate = self.priors.hs_precision_gamma
        for suffix in ("pos", "neg"):
            mu = values[f"mu_{suffix}"][0]
            phi = values[f"phi_{suffix}"][0]
            if f"mu_{suffix}" not in self.fixed:
                lp += float(stats.beta.logpdf(mu, mu_a, mu_b))
            if f"phi_{suffix}" not in self.fixed:
                lp += float(stats.gamma.logpdf(phi, shape, scale=1.0 / rate))
            lp += float(np.sum(stats.beta.logpdf(values[f"r_{suffix}"], mu * phi, (1.0 - mu) * phi)))
        return lp

    def initial_values(self):
        rate = self._pooled_response()
        start = {
            **self._hyper_start(),
            "q": self._moment_quality(),
            "r_pos": np.full(self.C, rate),
            "r_neg": np.full(self.C, rate),
        }
        for suffix in ("pos", "neg"):
            if f"mu_{suffix}" in start:
                start[f"mu_{suffix}"] = np.array([rate])
        return start


class HierInformedModel(_QualityHierarchy, ModelInstance):
    """Per-cluster channel rates with informative priors in log-space.

    log r_pos,c ~ Normal and log kappa_c ~ Normal, r_neg,c = r_pos,c * kappa_c.
    Both rates are capped just below one inside the likelihood.
    """

    variant = ModelVariant.HIER_INFORMED
    hyper_names = ("alpha_q", "beta_q")

    def _blocks(self):
        return [
            Block("alpha_q", 1, POS),
            Block("beta_q", 1, POS),
            Block("q", self.C, P, per_cluster=True),
            Block("r_pos", self.C, POS, per_cluster=True),
            Block("kappa", self.C, POS, per_cluster=True),
        ]

    def _channel(self, u):
        log_rp_raw = u["r_pos"]
        log_rn_raw = log_rp_raw + u["kappa"]
        free_p = log_rp_raw < LOG_RATE_CAP
        free_n = log_rn_raw < LOG_RATE_CAP
        log_rp = np.minimum(log_rp_raw, LOG_RATE_CAP)
        log_rn = np.minimum(log_rn_raw, LOG_RATE_CAP)
        return log_rp, log_rn, free_p, free_n

    def _evaluate(self, u, want_grad):
        grads = self._zero_grads()
        prior = self._quality_prior(u, grads, want_grad)
        pc = self.priors
        v, d_rp = normal_log(u["r_pos"], pc.informed_logrpos_center, pc.informed_logrpos_sigma)
        prior += v
        v, d_k = normal_log(u["kappa"], pc.informed_logkappa_center, pc.informed_logkappa_sigma)
        prior += v

        log_rp, log_rn, free_p, free_n = self._channel(u)
        value, d_xq, d_lrp, d_lrn = channel_loglik(
            self.n, self.m, self.y, u["q"], log_rp, log_rn, -np.expm1(log_rp), -np.expm1(log_rn)
        )
        pointwise = self.log_coef + value
        if want_grad:
            grads["q"] += d_xq
            grads["r_pos"] += d_rp + d_lrp * free_p + d_lrn * free_n
            grads["kappa"] += d_k + d_lrn * free_n
        return pointwise, float(pointwise.sum()), prior, grads

    def _rates(self, u):
        log_rp, log_rn, _, _ = self._channel(u)
        return channel_rates(u["q"], np.exp(log_rp), np.exp(log_rn))

    def _log_prior_constrained(self, values):
        pc = self.priors
        lp = self._quality_prior_constrained(values)
        lp += float(np.sum(stats.lognorm.logpdf(
            values["r_pos"], s=pc.informed_logrpos_sigma, scale=math.exp(pc.informed_logrpos_center))))
        lp += float(np.sum(stats.lognorm.logpdf(
            values["kappa"], s=pc.informed_logkappa_sigma, scale=math.exp(pc.informed_logkappa_center))))
        return lp

    def initial_values(self):
        pc = self.priors
        return {
            **self._hyper_start(),
            "q": self._moment_quality(),
            "r_pos": np.full(self.C, math.exp(pc.informed_logrpos_center)),
            "kappa": np.full(self.C, math.exp(pc.informed_logkappa_center)),
        }

    def constrain(self, theta) -> np.ndarray:
        """As :meth:`ModelInstance.constrain`, with r_pos capped the way the likelihood sees it."""
        out = super().constrain(theta)
        block = self.layout.slice("r_pos")
        out[..., block] = np.exp(np.minimum(np.asarray(theta, dtype=float)[..., block], LOG_RATE_CAP))
        return out

    def negative_rate_draws(self, unconstrained_draws: np.ndarray) -> np.ndarray:
        """Capped r_neg,c for a [..., dimension] array of unconstrained draws."""
        log_rn = unconstrained_draws[..., self.layout.slice("r_pos")] + unconstrained_draws[..., self.layout.slice("kappa")]
        return np.exp(np.minimum(log_rn, LOG_RATE_CAP))


class CorrectedGlobalModel(ModelInstance):
    """One global quality Q with global channel rates, fit to pooled counts."""

    variant = ModelVariant.CORRECTED_GLOBAL
    quality_block = "Q"

    def __init__(self, dataset: Dataset, priors: PriorConfig | None = None):
        super().__init__(dataset, priors)
        self.N, self.M, self.Y = self.n.sum(), self.m.sum(), self.y.sum()
        self.pooled_coef = float(binom_const(self.N, self.M) + binom_const(self.M, self.Y))

    def _blocks(self):
        return [Block("Q", 1, P), Block("r_pos", 1, P), Block("r_neg", 1, P)]

    @property
    def pooling_offset(self) -> float:
        return self.pooled_coef - float(self.log_coef.sum())

    def _evaluate(self, u, want_grad):
        grads = self._zero_grads()
        prior = 0.0
        for name in ("Q", "r_pos", "r_neg"):
            v, d = uniform_logit(u[name])
            prior += v
            grads[name] += d
        x_q, x_rp, x_rn = u["Q"], u["r_pos"], u["r_neg"]
        args = (log_expit(x_rp), log_expit(x_rn), expit(-x_rp), expit(-x_rn))
        pooled, d_xq, d_lrp, d_lrn = channel_loglik(self.N, self.M, self.Y, x_q, *args)
        total = float(self.pooled_coef + pooled[0])
        per_cluster, _, _, _ = channel_loglik(self.n, self.m, self.y, x_q, *args)
        pointwise = self.log_coef + per_cluster
        if want_grad:
            grads["Q"] += d_xq
            grads["r_pos"] += d_lrp * expit(-x_rp)
            grads["r_neg"] += d_lrn * expit(-x_rn)
        return pointwise, total, prior, grads

    def _rates(self, u):
        s, p = channel_rates(u["Q"], expit(u["r_pos"]), expit(u["r_neg"]))
        return np.full(self.C, s[0]), np.full(self.C, p[0])

    def _log_prior_constrained(self, values):
        return 0.0

    def initial_values(self):
        rate = self._pooled_response()
        return {
            "Q": np.array([(self.Y + 1.0) / (self.M + 2.0)]),
            "r_pos": np.array([rate]),
            "r_neg": np.array([rate]),
        }


MODEL_CLASSES: dict[ModelVariant, type[ModelInstance]] = {
    ModelVariant.BASIC: BasicModel,
    ModelVariant.ENHANCED: EnhancedModel,
    ModelVariant.HIER_SENTIMENT: HierSentimentModel,
    ModelVariant.HIER_INFORMED: HierInformedModel,
    ModelVariant.CORRECTED_GLOBAL: CorrectedGlobalModel,
}


def build_model(variant, dataset: Dataset, prior_config: PriorConfig | None = None) -> ModelInstance:
    try:
        cls = MODEL_CLASSES[ModelVariant.parse(variant)]
    except KeyError:
        raise ModelError(f"Unknown model variant: {variant!r}", code="unknown_variant") from None
    return cls(dataset, prior_config)
