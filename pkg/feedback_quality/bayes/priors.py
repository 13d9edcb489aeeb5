"""Operator-knowledge priors derived from dashboard feedback rates.

A dashboard reports the fraction of all interactions that receive positive
(rho_pos) and negative (rho_neg) feedback. With latent quality q these satisfy
rho_pos = q * r_pos and rho_neg = (1 - q) * r_neg, so fixing q pins down the
channel rates.
"""
from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel

#: quality assumed when folding dashboard rates into a single prior center
CENTER_QUALITY = 0.5


class ChannelRange(BaseModel):
    q_range: tuple[float, float]
    r_pos: tuple[float, float]
    kappa: tuple[float, float]


def _check_rates(rho_pos: float, rho_neg: float) -> None:
    if rho_pos <= 0:
        raise ValueError(f"rho_pos must be > 0, got {rho_pos}")
    if rho_neg < 0:
        raise ValueError(f"rho_neg must be >= 0, got {rho_neg}")
    if rho_pos + rho_neg > 1:
        raise ValueError(f"rho_pos + rho_neg must be <= 1, got {rho_pos + rho_neg}")


def informed_priors_from_dashboard(rho_pos: float, rho_neg: float) -> tuple[float, float]:
    """Prior centers (r_pos, kappa) at q = 0.5.

    >>> informed_priors_from_dashboard(0.05, 0.10)
    (0.1, 2.0)
    """
    _check_rates(rho_pos, rho_neg)
    return rho_pos / CENTER_QUALITY, rho_neg / rho_pos


def default_informed_centers() -> tuple[float, float]:
    from feedback_quality.core.config import PriorConfig

    pc = PriorConfig()
    return math.exp(pc.informed_logrpos_center), math.exp(pc.informed_logkappa_center)


def implied_channel_range(rho_pos: float, rho_neg: float, q_range: tuple[float, float] = (0.3, 0.7)) -> ChannelRange:
    """Channel rates implied by dashboard rates across a plausible quality range."""
    _check_rates(rho_pos, rho_neg)
    lo, hi = q_range
    if not 0 < lo <= hi < 1:
        raise ValueError(f"q_range must satisfy 0 < lo <= hi < 1, got {q_range}")
    q = np.array([lo, hi])
    r_pos = rho_pos / q
    kappa = (rho_neg / rho_pos) * q / (1.0 - q)
    return ChannelRange(
        q_range=(lo, hi),
        r_pos=(float(r_pos.min()), float(r_pos.max())),
        kappa=(float(kappa.min()), float(kappa.max())),
    )
