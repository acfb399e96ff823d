"""Shared extreme-value math: special functions, GPD and body families, hybrid model."""

from .distributions import (
    BODY_FAMILIES,
    BodyDistribution,
    CauchyBody,
    GpdFit,
    GpdParams,
    LogisticBody,
    MirroredGammaBody,
    MirroredLognormalBody,
    NormalBody,
    body_cdf,
    body_logpdf,
    gpd_cdf,
    gpd_logpdf,
    gpd_mle,
    gpd_quantile,
    gpd_sf,
)
from .hybrid import (
    HybridParams,
    hybrid_cdf,
    hybrid_loglik,
    hybrid_logpdf,
    hybrid_sample,
    sample_from_uniforms,
)
from .special import (
    chi2_cdf,
    chi2_quantile,
    ln_gamma,
    regularized_gamma_p,
    regularized_gamma_q,
    std_normal_cdf,
)

__all__ = [
    "BODY_FAMILIES",
    "BodyDistribution",
    "CauchyBody",
    "GpdFit",
    "GpdParams",
    "HybridParams",
    "LogisticBody",
    "MirroredGammaBody",
    "MirroredLognormalBody",
    "NormalBody",
    "body_cdf",
    "body_logpdf",
    "chi2_cdf",
    "chi2_quantile",
    "gpd_cdf",
    "gpd_logpdf",
    "gpd_mle",
    "gpd_quantile",
    "gpd_sf",
    "hybrid_cdf",
    "hybrid_loglik",
    "hybrid_logpdf",
    "hybrid_sample",
    "ln_gamma",
    "regularized_gamma_p",
    "regularized_gamma_q",
    "sample_from_uniforms",
    "std_normal_cdf",
]
