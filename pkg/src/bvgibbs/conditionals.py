"""Conditional priors on the means and variances and the resulting full conditionals.

The prior on each side is specified only through its two conditionals,

    mu | sigma2       ~ N(mu', sigma2 / n')
    sigma2 | mu       ~ Inv-Gamma(n'/2, beta(mu)),
    beta(mu)          = (n' - 1) sigma'^2 / 2 + n' (mu - mu')^2 / 2,

which are the conditionals of the normal-inverse-gamma joint density

    sigma2 ~ Inv-Gamma((n' - 1)/2, (n' - 1) sigma'^2 / 2),  mu | sigma2 ~ N(mu', sigma2 / n').

Multiplying the two factors and collecting powers of sigma2 gives
``sigma2^(-n'/2 - 1) exp(-beta(mu)/sigma2)``, which is the Inv-Gamma(n'/2, beta)
kernel; integrating sigma2 out gives the Student-t marginal of mu.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy import stats as st

from .errors import DomainError
from .model import ModelParams, PriorSpec, SufficientStats, _loglik_kernel, centered_sums

_LOG_2PI = math.log(2.0 * math.pi)


class ParamId(str, enum.Enum):
    MU_X = "mu_x"
    MU_Y = "mu_y"
    SIGMA2_X = "sigma2_x"
    SIGMA2_Y = "sigma2_y"
    RHO = "rho"

    @property
    def index(self) -> int:
        return _PARAM_INDEX[self]

    @property
    def side(self) -> str | None:
        if self is ParamId.RHO:
            return None
        return self.value[-1]

    @classmethod
    def parse(cls, text: str) -> "ParamId":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown parameter {text!r}; expected one of {valid}") from None


PARAM_ORDER = (ParamId.MU_X, ParamId.MU_Y, ParamId.SIGMA2_X, ParamId.SIGMA2_Y, ParamId.RHO)
_PARAM_INDEX = {p: i for i, p in enumerate(PARAM_ORDER)}


@dataclass(frozen=True)
class InverseGammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError(f"shape and scale must be positive: {self}")

    def logpdf(self, x: float) -> float:
        if not x > 0:
            return -math.inf
        a, b = self.shape, self.scale
        return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x

    def mode(self) -> float:
        return self.scale / (self.shape + 1.0)


def beta_scale(prior: PriorSpec, side: str, mu: float) -> float:
    mu_p, sig_p, n_p = prior.side(side)
    d = mu - mu_p
    return 0.5 * (n_p - 1.0) * sig_p * sig_p + 0.5 * n_p * d * d


def sigma2_prior_params(prior: PriorSpec, side: str, mu: float) -> InverseGammaParams:
    return InverseGammaParams(prior.side(side)[2] / 2.0, beta_scale(prior, side, mu))


def log_prior_mu(side: str, mu: float, sigma2: float, prior: PriorSpec) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    mu_p, _, n_p = prior.side(side)
    var = sigma2 / n_p
    d = mu - mu_p
    return -0.5 * (_LOG_2PI + math.log(var)) - 0.5 * d * d / var


def log_prior_sigma2(side: str, sigma2: float, mu: float, prior: PriorSpec) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    return sigma2_prior_params(prior, side, mu).logpdf(sigma2)


def log_full_conditional(
    param: ParamId,
    value: float,
    params: ModelParams,
    stats: SufficientStats,
    prior: PriorSpec,
) -> float:
    """Unnormalized log full conditional of one mean or variance.

    Conditional prior plus the conditional likelihood, with ``param`` set to
    ``value`` and everything else taken from ``params``. Returns ``-inf`` for a
    variance outside (0, inf).
    """
    param = ParamId(param)
    if param is ParamId.RHO:
        raise ValueError("rho has a fiducial conditional; use the fiducial module")
    mu_x, mu_y, s2x, s2y, rho = params
    if param is ParamId.MU_X:
        mu_x = value
        lp = log_prior_mu("x", mu_x, s2x, prior)
    elif param is ParamId.MU_Y:
        mu_y = value
        lp = log_prior_mu("y", mu_y, s2y, prior)
    elif param is ParamId.SIGMA2_X:
        if not value > 0:
            return -math.inf
        s2x = value
        lp = log_prior_sigma2("x", s2x, mu_x, prior)
    else:
        if not value > 0:
            return -math.inf
        s2y = value
        lp = log_prior_sigma2("y", s2y, mu_y, prior)
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1): {rho}")
    sxx, syy, sxy = centered_sums(stats, mu_x, mu_y)
    return lp + _loglik_kernel(stats.n, s2x, s2y, rho, sxx, syy, sxy)


def log_joint_prior(side: str, mu: float, sigma2: float, prior: PriorSpec) -> float:
    """Log of the normal-inverse-gamma joint density whose conditionals are the priors above."""
    if not sigma2 > 0:
        return -math.inf
    _, sig_p, n_p = prior.side(side)
    a = (n_p - 1.0) / 2.0
    b = (n_p - 1.0) * sig_p * sig_p / 2.0
    return InverseGammaParams(a, b).logpdf(sigma2) + log_prior_mu(side, mu, sigma2, prior)


def joint_prior_marginals(prior: PriorSpec, side: str):
    """Marginal laws of mu and sigma2 under the joint prior of one side.

    Returns frozen scipy distributions: ``mu' + (sigma'/sqrt(n')) t_{n'-1}`` and
    ``(n' - 1) sigma'^2 / chi2_{n'-1}`` (an inverse gamma).
    """
    mu_p, sig_p, n_p = prior.side(side)
    mu_dist = st.t(df=n_p - 1.0, loc=mu_p, scale=sig_p / math.sqrt(n_p))
    sigma2_dist = st.invgamma(a=(n_p - 1.0) / 2.0, scale=(n_p - 1.0) * sig_p * sig_p / 2.0)
    return mu_dist, sigma2_dist
