"""Log-density building blocks with analytic derivatives.

Every helper works on unconstrained inputs and already includes the
log-Jacobian of its transform, so model code only adds terms together.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import betaln, digamma, expit, gammaln, log_expit

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


def binom_const(n, k) -> np.ndarray:
    """log C(n, k), elementwise."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def halfnormal_log(u: float, sigma: float) -> tuple[float, float]:
    """HalfNormal(sigma) on exp(u), plus Jacobian u. Returns (value, d/du)."""
    x2 = math.exp(2.0 * u)
    value = LOG_2 - 0.5 * LOG_2PI - math.log(sigma) - x2 / (2.0 * sigma * sigma) + u
    return value, 1.0 - x2 / (sigma * sigma)


def gamma_log(u: float, shape: float, rate: float) -> tuple[float, float]:
    """Gamma(shape, rate) on exp(u), plus Jacobian u."""
    x = math.exp(u)
    value = shape * u - rate * x + shape * math.log(rate) - math.lgamma(shape)
    return value, shape - rate * x


def normal_log(u, mu: float, sigma: float) -> tuple[float, np.ndarray]:
    z = (np.asarray(u, dtype=float) - mu) / sigma
    value = float(np.sum(-0.5 * z * z - math.log(sigma) - 0.5 * LOG_2PI))
    return value, -z / sigma


def uniform_logit(x) -> tuple[float, np.ndarray]:
    """Uniform(0, 1) on expit(x): only the logit Jacobian remains."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(log_expit(x) + log_expit(-x))), expit(-x) - expit(x)


def beta_logit(x, a: float, b: float) -> tuple[float, np.ndarray, float, float]:
    """Beta(a, b) on expit(x) with logit Jacobian.

    Returns (value, d/dx, d/da, d/db).
    """
    x = np.asarray(x, dtype=float)
    log_p = log_expit(x)
    log_1mp = log_expit(-x)
    k = x.size
    value = float(a * log_p.sum() + b * log_1mp.sum() - k * betaln(a, b))
    d_x = a * expit(-x) - b * expit(x)
    psi_ab = digamma(a + b)
    d_a = float(log_p.sum() - k * (digamma(a) - psi_ab))
    d_b = float(log_1mp.sum() - k * (digamma(b) - psi_ab))
    return value, d_x, d_a, d_b


def binomial_logit(k, n, x) -> tuple[np.ndarray, np.ndarray]:
    """Kernel of Bin(k | n, expit(x)) without the coefficient, elementwise, and d/dx."""
    x = np.asarray(x, dtype=float)
    value = k * log_expit(x) + (n - k) * log_expit(-x)
    return value, k - n * expit(x)


def channel_loglik(n, m, y, x_q, log_rp, log_rn, one_minus_rp, one_minus_rn):
    """Two-channel feedback likelihood kernel per cluster.

    Feedback arrives with probability ``s = q*r_pos + (1-q)*r_neg`` and is
    positive with probability ``q*r_pos / s``. The product of the two binomial
    kernels collapses to the trinomial form evaluated here.

    Returns (value, d/dx_q, r_pos * d/dr_pos, r_neg * d/dr_neg), elementwise.
    """
    q = expit(x_q)
    one_minus_q = expit(-x_q)
    rp = np.exp(log_rp)
    rn = np.exp(log_rn)
    one_minus_s = q * one_minus_rp + one_minus_q * one_minus_rn
    silent = n - m
    value = (
        silent * np.log(one_minus_s)
        + y * log_expit(x_q)
        + (m - y) * log_expit(-x_q)
        + y * log_rp
        + (m - y) * log_rn
    )
    ratio = silent / one_minus_s
    d_xq = -ratio * (one_minus_rn - one_minus_rp) * q * one_minus_q + y * one_minus_q - (m - y) * q
    d_log_rp = -ratio * q * rp + y
    d_log_rn = -ratio * one_minus_q * rn + (m - y)
    return value, d_xq, d_log_rp, d_log_rn


def channel_rates(x_q, rp, rn) -> tuple[np.ndarray, np.ndarray]:
    """(feedback probability s, positive-share p) for the two-channel model."""
    q = expit(x_q)
    s = q * rp + (1.0 - q) * rn
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(s > 0, q * rp / np.where(s > 0, s, 1.0), 0.0)
    return s, p
