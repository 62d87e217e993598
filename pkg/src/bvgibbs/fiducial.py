"""Fiducial conditional of the correlation given the means and variances.

The fiducial statistic is the conditional MLE ``rho_hat`` (a root of a cubic),
and ``atanh(rho_hat)`` is modelled as normal around ``atanh(rho)`` with
variance ``1 / (n (1 + rho^2))``. Writing the pivot as

    gamma(rho) = (atanh(rho_hat) - atanh(rho)) * sqrt(n (1 + rho^2)),

the conditional density of rho is ``psi_alpha(gamma(rho)) |dgamma/drho|`` on the
interval where ``|gamma| <= alpha``, with ``psi_alpha`` the standard normal
truncated to ``[-alpha, alpha]``.

Setting dgamma/drho to zero gives, for rho between 0 and rho_hat,

    |atanh(rho_hat)| = atanh(r) + (1 + r^2) / (r (1 - r^2)),    r = |rho|,

whose right side has a single minimum at ``r = 1/sqrt(5)``. Below that
threshold gamma is strictly decreasing on all of (-1, 1) and any alpha keeps
the map one-to-one; above it gamma has a local minimum and maximum, and the
largest admissible alpha is the smaller of their absolute values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import BijectivityError, DegenerateDataError, DomainError
from .model import ModelParams, SufficientStats, centered_sums

_STD_NORMAL = NormalDist()
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_RHO_EDGE = math.nextafter(1.0, 0.0)

CRIT_R = 1.0 / math.sqrt(5.0)
#: atanh(rho_hat) beyond which dgamma/drho changes sign somewhere in (-1, 1)
CRIT_ATANH = math.atanh(CRIT_R) + 1.5 * math.sqrt(5.0)
#: |rho_hat| beyond which the maximal alpha is finite (about 0.99907)
CRIT_RHO_HAT = math.tanh(CRIT_ATANH)


@dataclass(frozen=True)
class TruncationConfig:
    """Truncation ``[-alpha, alpha]`` of the standard normal pivot; alpha may be ``inf``."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0 or math.isnan(self.alpha):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    @property
    def mass(self) -> float:
        """Standard normal probability of [-alpha, alpha]."""
        return 1.0 if math.isinf(self.alpha) else math.erf(self.alpha / _SQRT2)


@dataclass(frozen=True)
class RhoSupport:
    rho_lo: float
    rho_hi: float

    def __post_init__(self):
        if not -1.0 <= self.rho_lo < self.rho_hi <= 1.0:
            raise DomainError(f"invalid support [{self.rho_lo}, {self.rho_hi}]")

    def __contains__(self, rho: float) -> bool:
        return self.rho_lo <= rho <= self.rho_hi


# ---------------------------------------------------------------------------
# conditional MLE


def cubic_terms(params: ModelParams, stats: SufficientStats) -> tuple[float, float, float]:
    """Return (A, B, C): the standardized cross, x and y sums at the current means."""
    mu_x, mu_y, s2x, s2y, _ = params
    if not (s2x > 0 and s2y > 0):
        raise DomainError("variances must be positive")
    sxx, syy, sxy = centered_sums(stats, mu_x, mu_y)
    return sxy / math.sqrt(s2x * s2y), sxx / s2x, syy / s2y


def profile_loglik_rho(rho: float, n: int, A: float, B: float, C: float) -> float:
    """Bivariate normal log-likelihood in rho with the other parameters fixed (up to a constant)."""
    omr = 1.0 - rho * rho
    return -0.5 * n * math.log(omr) - (B - 2.0 * rho * A + C) / (2.0 * omr)


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _real_cubic_roots(c3: float, c2: float, c1: float, c0: float) -> list[float]:
    """Real roots of c3 x^3 + c2 x^2 + c1 x + c0 (c3 != 0), Newton-polished."""
    p, q, r = c2 / c3, c1 / c3, c0 / c3
    shift = p / 3.0
    P = q - p * p / 3.0
    Q = 2.0 * p**3 / 27.0 - p * q / 3.0 + r
    disc = (Q / 2.0) ** 2 + (P / 3.0) ** 3
    if disc > 0:
        sq = math.sqrt(disc)
        roots = [_cbrt(-Q / 2.0 + sq) + _cbrt(-Q / 2.0 - sq) - shift]
    elif P == 0.0:
        roots = [-shift]
    else:
        m = 2.0 * math.sqrt(-P / 3.0)
        arg = 3.0 * Q / (P * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]

    polished = []
    for x in roots:
        for _ in range(4):
            f = ((c3 * x + c2) * x + c1) * x + c0
            df = (3.0 * c3 * x + 2.0 * c2) * x + c1
            if df == 0.0:
                break
            step = f / df
            x -= step
            if abs(step) <= 1e-16 * max(1.0, abs(x)):
                break
        polished.append(x)
    return polished


def cubic_residual(rho: float, n: int, A: float, B: float, C: float) -> float:
    """Relative residual of the MLE cubic at ``rho``."""
    c1 = n - B - C
    value = -n * rho**3 + A * rho**2 + c1 * rho + A
    scale = n * abs(rho) ** 3 + abs(A) * rho * rho + abs(c1) * abs(rho) + abs(A)
    return abs(value) / scale if scale > 0 else abs(value)


def rho_mle_from_terms(n: int, A: float, B: float, C: float) -> float:
    """Conditional MLE of rho given the cubic terms.

    The cubic is the score equation of the bivariate normal likelihood in rho;
    among admissible roots the one with the largest likelihood is returned.
    """
    roots = [
        x for x in _real_cubic_roots(-float(n), A, n - B - C, A)
        if -1.0 < x < 1.0
    ]
    if not roots:
        raise DegenerateDataError(
            f"no root of the MLE cubic lies in (-1, 1) (n={n}, A={A}, B={B}, C={C})"
        )
    if len(roots) == 1:
        return roots[0]
    return max(roots, key=lambda x: profile_loglik_rho(x, n, A, B, C))


def rho_mle(params: ModelParams, stats: SufficientStats) -> float:
    A, B, C = cubic_terms(params, stats)
    return rho_mle_from_terms(stats.n, A, B, C)


# ---------------------------------------------------------------------------
# information and pivot


def fisher_info_rho(rho: float, n: int) -> float:
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1): {rho}")
    r2 = rho * rho
    return n * (1.0 + r2) / (1.0 - r2) ** 2


def fisher_info_atanh(rho: float, n: int) -> float:
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1): {rho}")
    return n * (1.0 + rho * rho)


def gamma_of_rho(rho: float, rho_hat: float, n: int) -> tuple[float, float]:
    """Pivot value and its derivative with respect to rho."""
    if not (-1.0 < rho < 1.0 and -1.0 < rho_hat < 1.0):
        raise DomainError(f"rho and rho_hat must lie in (-1, 1): {rho}, {rho_hat}")
    return _gamma(rho, math.atanh(rho_hat), n)


def _gamma(rho: float, a: float, n: float) -> tuple[float, float]:
    r2 = rho * rho
    root = math.sqrt(n * (1.0 + r2))
    diff = a - math.atanh(rho)
    return diff * root, -root / (1.0 - r2) + diff * n * rho / root


def _gamma_array(rho: np.ndarray, rho_hat: float, n: float) -> tuple[np.ndarray, np.ndarray]:
    r2 = rho * rho
    root = np.sqrt(n * (1.0 + r2))
    diff = math.atanh(rho_hat) - np.arctanh(rho)
    return diff * root, -root / (1.0 - r2) + diff * n * rho / root


# ---------------------------------------------------------------------------
# truncation level and support


def _crit_g(r: float) -> float:
    return math.atanh(r) + (1.0 + r * r) / (r * (1.0 - r * r))


def _solve_increasing(f, target: float, lo: float, hi: float) -> float:
    """Bisection for f(x) = target with f increasing on [lo, hi]."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_points(rho_hat: float) -> list[float]:
    """Points in (-1, 1) where dgamma/drho vanishes, in increasing order.

    They do not depend on n. Empty when ``|rho_hat| <= CRIT_RHO_HAT``.
    """
    if not -1.0 < rho_hat < 1.0:
        raise DomainError(f"rho_hat must lie in (-1, 1): {rho_hat}")
    a = abs(math.atanh(rho_hat))
    if a <= CRIT_ATANH:
        return []
    # g decreases on (0, CRIT_R) and increases on (CRIT_R, 1)
    r_lo = _solve_increasing(lambda r: -_crit_g(r), -a, 1e-300, CRIT_R)
    r_hi = _solve_increasing(_crit_g, a, CRIT_R, abs(rho_hat))
    if rho_hat > 0:
        return [r_lo, r_hi]
    return [-r_hi, -r_lo]


def max_alpha(rho_hat: float, n: int, safety: float = 1.0) -> TruncationConfig:
    """Largest truncation level keeping gamma(rho) one-to-one, scaled by ``safety``.

    Returns ``alpha = inf`` when gamma is strictly monotone on all of (-1, 1).
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    crit = critical_points(rho_hat)
    if not crit:
        return TruncationConfig(math.inf)
    a = math.atanh(rho_hat)
    level = min(abs(_gamma(c, a, n)[0]) for c in crit)
    return TruncationConfig(safety * level)


def check_bijectivity(rho_hat: float, n: int, alpha: float) -> bool:
    """True when no stationary point of gamma has ``|gamma| < alpha``."""
    return alpha <= max_alpha(rho_hat, n).alpha


def _branch(rho_hat: float) -> tuple[float, float]:
    """Endpoints of the monotone branch of gamma that contains rho_hat."""
    crit = critical_points(rho_hat)
    if not crit:
        return -1.0, 1.0
    if rho_hat > 0:
        return crit[-1], 1.0
    return -1.0, crit[0]


def _invert(target: float, a: float, n: float, lo: float, hi: float) -> float:
    """Solve gamma(rho) = target on [lo, hi] where gamma is decreasing.

    Newton steps safeguarded by bisection; stops at float resolution.
    """
    lo = max(lo, -_RHO_EDGE)
    hi = min(hi, _RHO_EDGE)
    g_lo = _gamma(lo, a, n)[0]
    g_hi = _gamma(hi, a, n)[0]
    if target >= g_lo:
        return lo
    if target <= g_hi:
        return hi
    x = math.tanh(a)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(200):
        g, dg = _gamma(x, a, n)
        f = g - target
        if f > 0:
            lo = x
        elif f < 0:
            hi = x
        else:
            return x
        step = f / dg if dg < 0 else 0.0
        nxt = x - step
        if not lo < nxt < hi or step == 0.0:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-15 or hi - lo <= 4e-16:
            return nxt
        x = nxt
    return x


def invert_gamma(gamma: float, rho_hat: float, n: int) -> float:
    """The rho on the branch through rho_hat with gamma(rho) = ``gamma``."""
    if not -1.0 < rho_hat < 1.0:
        raise DomainError(f"rho_hat must lie in (-1, 1): {rho_hat}")
    lo, hi = _branch(rho_hat)
    return _invert(gamma, math.atanh(rho_hat), n, lo, hi)


def rho_support(rho_hat: float, n: int, trunc: TruncationConfig) -> RhoSupport:
    """Interval of rho values mapped by gamma into [-alpha, alpha]."""
    if not check_bijectivity(rho_hat, n, trunc.alpha * (1.0 - 1e-12)):
        raise BijectivityError(
            f"alpha={trunc.alpha} exceeds the maximal value "
            f"{max_alpha(rho_hat, n).alpha} for rho_hat={rho_hat}, n={n}"
        )
    lo, hi = _branch(rho_hat)
    if math.isinf(trunc.alpha):
        return RhoSupport(lo, hi)
    a = math.atanh(rho_hat)
    rho0 = _invert(trunc.alpha, a, n, lo, hi)
    rho1 = _invert(-trunc.alpha, a, n, lo, hi)
    if rho0 <= -_RHO_EDGE:
        rho0 = -1.0
    if rho1 >= _RHO_EDGE:
        rho1 = 1.0
    return RhoSupport(rho0, rho1)


# ---------------------------------------------------------------------------
# density and sampling


def fiducial_logdensity_rho(rho: float, rho_hat: float, n: int, trunc: TruncationConfig) -> float:
    support = rho_support(rho_hat, n, trunc)
    if not (rho in support and -1.0 < rho < 1.0):
        return -math.inf
    g, dg = gamma_of_rho(rho, rho_hat, n)
    if abs(g) > trunc.alpha:
        return -math.inf
    return -0.5 * g * g - _LOG_SQRT_2PI - math.log(trunc.mass) + math.log(abs(dg))


def fiducial_density_rho_array(rho: np.ndarray, rho_hat: float, n: int, trunc: TruncationConfig) -> np.ndarray:
    """Vectorized density (not log) of the rho conditional; zero off the support."""
    rho = np.asarray(rho, dtype=float)
    support = rho_support(rho_hat, n, trunc)
    out = np.zeros_like(rho)
    inside = (rho >= support.rho_lo) & (rho <= support.rho_hi) & (np.abs(rho) < 1.0)
    g, dg = _gamma_array(rho[inside], rho_hat, n)
    dens = np.exp(-0.5 * g * g - _LOG_SQRT_2PI) * np.abs(dg) / trunc.mass
    out[inside] = np.where(np.abs(g) <= trunc.alpha, dens, 0.0)
    return out


def truncnorm_ppf(u: float, alpha: float) -> float:
    """Quantile ``u`` of the standard normal truncated to [-alpha, alpha].

    The upper half is mapped through the lower tail by symmetry so both tails
    keep full relative precision.
    """
    tiny = 1e-300
    if math.isinf(alpha):
        if u <= 0.5:
            return _STD_NORMAL.inv_cdf(max(u, tiny))
        return -_STD_NORMAL.inv_cdf(max(1.0 - u, tiny))
    lower_tail = 0.5 * math.erfc(alpha / _SQRT2)
    width = math.erf(alpha / _SQRT2)
    if u <= 0.5:
        g = _STD_NORMAL.inv_cdf(max(lower_tail + u * width, tiny))
    else:
        g = -_STD_NORMAL.inv_cdf(max(lower_tail + (1.0 - u) * width, tiny))
    return min(alpha, max(-alpha, g))


def sample_rho(rho_hat: float, n: int, trunc: TruncationConfig, rng) -> float:
    """Exact draw from the rho conditional by pushing a truncated normal through gamma^-1."""
    g = truncnorm_ppf(rng.random(), trunc.alpha)
    rho = invert_gamma(g, rho_hat, n)
    if math.isinf(trunc.alpha):
        return rho
    # endpoints and draws are separate root solves; keep rounding inside the support
    sup = rho_support(rho_hat, n, trunc)
    return min(max(rho, sup.rho_lo), sup.rho_hi)
