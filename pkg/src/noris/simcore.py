"""Similarity kernels, bandwidth resolution and the score-update rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from .pool import DegeneratePoolError, InvalidInputError, SimilarityConfig


@dataclass(frozen=True)
class LossBoundCase:
    loss_u_before: float
    loss_v_before: float
    kappa: float
    dist: float

    def __post_init__(self) -> None:
        vals = (self.loss_u_before, self.loss_v_before, self.kappa, self.dist)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("loss-bound inputs must be finite")
        if self.kappa <= 0:
            raise InvalidInputError("kappa must be positive")
        if self.loss_u_before < 0 or self.loss_v_before < 0 or self.dist < 0:
            raise InvalidInputError("losses and distance must be non-negative")


def resolve_lambda(cfg: SimilarityConfig, dmax: float) -> float:
    """Bandwidth for this cycle: alpha*dmax (linear) or (alpha*dmax)^2/pi (gaussian)."""
    if not dmax > 0:
        raise DegeneratePoolError(f"d_max must be positive to resolve lambda, got {dmax}")
    if cfg.kind == "linear":
        return cfg.alpha * dmax
    return (cfg.alpha * dmax) ** 2 / math.pi


def resolved(cfg: SimilarityConfig, dmax: float) -> SimilarityConfig:
    return replace(cfg, lam=resolve_lambda(cfg, dmax))


def gaussian_lambda_from_linear(lambda_l: float) -> float:
    """Gaussian bandwidth whose kernel has the same area as the linear one."""
    if not lambda_l > 0:
        raise InvalidInputError("lambda_l must be positive")
    return lambda_l**2 / math.pi


def similarity_array(d, kind: str, lam: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if kind == "gaussian":
        return np.exp(-(d * d) / lam)
    return np.maximum(0.0, 1.0 - d / lam)


def similarity(d: float, cfg: SimilarityConfig) -> float:
    if cfg.lam is None:
        raise InvalidInputError("similarity needs a resolved lambda")
    return float(similarity_array(d, cfg.kind, cfg.lam))


def update_score(sigma_u: float, sim_uv: float, sigma_v: float, clamp: bool = False) -> float:
    """Score of u after v is labeled: sigma_u - sim(u, v) * sigma_v."""
    out = sigma_u - sim_uv * sigma_v
    return max(0.0, out) if clamp else out


def loss_bound(case: LossBoundCase) -> float:
    """Upper bound on u's loss after training on v, for a kappa-Lipschitz loss."""
    return case.loss_u_before + 2.0 * case.kappa * case.dist - case.loss_v_before


def kernel_integral_gap(lambda_l: float, lambda_g: float | None = None, panels: int = 20000) -> float:
    """Signed integral of (gaussian - linear) similarity over [0, 8*lambda_l].

    ``lambda_g`` defaults to the area-matching value ``lambda_l**2 / pi``.
    Composite Simpson; ``panels`` must be even and at least 10^4.
    """
    if panels < 10_000 or panels % 2:
        raise InvalidInputError("need an even panel count >= 10000")
    if lambda_g is None:
        lambda_g = gaussian_lambda_from_linear(lambda_l)
    # the linear kernel's kink at lambda_l must fall on an even node (panel-pair edge)
    panels += (-panels) % 16
    s = np.linspace(0.0, 8.0 * lambda_l, panels + 1)
    gap = similarity_array(s, "gaussian", lambda_g) - similarity_array(s, "linear", lambda_l)
    return float(simpson(gap, x=s))
