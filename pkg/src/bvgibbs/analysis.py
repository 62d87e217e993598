"""Summaries, convergence diagnostics, histograms and reference density curves."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as st
from scipy.special import gammaln

from .errors import DomainError, ShapeError, SizeError
from .fiducial import TruncationConfig, fiducial_density_rho_array, invert_gamma, rho_support
from .model import PARAM_NAMES, PriorSpec
from .sampler import ChainTrace

QUANTILES = (0.025, 0.5, 0.975)
GRID_POINTS = 512
PSRF_VARIANT = "Gelman-Rubin (1992) sqrt(((L-1)/L W + B/L) / W), no (m+1)/m or df correction"

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# tail probability left outside the grid when a curve has no natural finite span
_TAIL = 1e-10


def _values(trace) -> np.ndarray:
    arr = trace.values if isinstance(trace, ChainTrace) else np.asarray(trace, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


# ---------------------------------------------------------------------------
# chain summaries


def batch_means_mcse(x: np.ndarray) -> float:
    """Monte Carlo standard error of the mean from floor(sqrt(L)) batch means.

    The first ``L mod batches`` samples are dropped so batches are equal sized.
    """
    x = np.asarray(x, dtype=float)
    L = len(x)
    n_batches = math.isqrt(L)
    if n_batches < 2:
        return math.nan
    size = L // n_batches
    means = x[L - n_batches * size:].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class ParamSummary:
    mean: float
    sd: float
    q025: float
    q50: float
    q975: float
    mcse: float

    def to_json(self) -> dict:
        return {
            "mean": self.mean, "sd": self.sd, "q025": self.q025,
            "q50": self.q50, "q975": self.q975, "mcse": self.mcse,
        }


@dataclass
class ChainSummary:
    params: dict[str, ParamSummary]
    acceptance_rates: dict[str, float] = field(default_factory=dict)
    length: int = 0

    def __getitem__(self, name: str) -> ParamSummary:
        return self.params[name]

    def to_json(self) -> dict:
        out = {}
        for name, s in self.params.items():
            block = s.to_json()
            rate = self.acceptance_rates.get(name)
            block["acceptance"] = None if rate is None or math.isnan(rate) else rate
            out[name] = block
        return out


def summarize(trace, names: Sequence[str] = PARAM_NAMES) -> ChainSummary:
    arr = _values(trace)
    if len(arr) == 0:
        raise SizeError("cannot summarize an empty trace")
    params = {}
    for j, name in enumerate(names):
        col = arr[:, j]
        q = np.quantile(col, QUANTILES)
        params[name] = ParamSummary(
            mean=float(col.mean()),
            sd=float(col.std(ddof=1)) if len(col) > 1 else 0.0,
            q025=float(q[0]),
            q50=float(q[1]),
            q975=float(q[2]),
            mcse=batch_means_mcse(col),
        )
    rates = dict(trace.acceptance_rates) if isinstance(trace, ChainTrace) else {}
    return ChainSummary(params, rates, len(arr))


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceReport:
    psrf: dict[str, float]
    chain_means: list[dict[str, float]]
    chain_variances: list[dict[str, float]]
    threshold: float
    length: int
    variant: str = PSRF_VARIANT

    @property
    def passed(self) -> bool:
        return all(v < self.threshold for v in self.psrf.values())

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "threshold": self.threshold,
            "chains": len(self.chain_means),
            "length": self.length,
            "psrf": dict(self.psrf),
            "pass": self.passed,
            "per_chain": [
                {"mean": m, "variance": v} for m, v in zip(self.chain_means, self.chain_variances)
            ],
        }


def gelman_rubin(traces: Sequence, threshold: float = 1.01, names: Sequence[str] = PARAM_NAMES) -> ConvergenceReport:
    """Potential scale reduction factor of each parameter.

    With L draws per chain, W the mean within-chain variance and B = L times the
    variance of the chain means, PSRF = sqrt(((L - 1)/L W + B/L) / W).
    """
    arrays = [_values(t) for t in traces]
    if len(arrays) < 2:
        raise ShapeError("need at least 2 chains")
    L = len(arrays[0])
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ShapeError(f"chains differ in shape: {[a.shape for a in arrays]}")
    if L < 10:
        raise ShapeError(f"chains need at least 10 draws, got {L}")
    stacked = np.stack(arrays)  # (m, L, p)
    means = stacked.mean(axis=1)
    variances = stacked.var(axis=1, ddof=1)
    W = variances.mean(axis=0)
    B = L * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        psrf = np.sqrt(((L - 1) / L * W + B / L) / W)
    names = list(names)[: stacked.shape[2]]
    return ConvergenceReport(
        psrf={k: float(v) for k, v in zip(names, psrf)},
        chain_means=[{k: float(v) for k, v in zip(names, row)} for row in means],
        chain_variances=[{k: float(v) for k, v in zip(names, row)} for row in variances],
        threshold=threshold,
        length=L,
    )


# ---------------------------------------------------------------------------
# curves


@dataclass
class DensityCurve:
    abscissae: np.ndarray
    densities: np.ndarray
    kind: str
    edges: np.ndarray | None = None

    def __post_init__(self):
        self.abscissae = np.asarray(self.abscissae, dtype=float)
        self.densities = np.asarray(self.densities, dtype=float)
        if self.abscissae.shape != self.densities.shape:
            raise ShapeError("abscissae and densities differ in length")
        if np.any(np.diff(self.abscissae) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        if np.any(self.densities < 0):
            raise ValueError("densities must be nonnegative")

    def area(self) -> float:
        if self.edges is not None:
            return float(np.sum(self.densities * np.diff(self.edges)))
        return float(np.trapezoid(self.densities, self.abscissae))

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid integral at each abscissa."""
        steps = 0.5 * (self.densities[1:] + self.densities[:-1]) * np.diff(self.abscissae)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def quantile(self, q: float) -> float:
        c = self.cdf()
        c = c / c[-1]
        return float(np.interp(q, c, self.abscissae))

    def mean(self) -> float:
        return float(np.trapezoid(self.abscissae * self.densities, self.abscissae) / self.area())

    def to_csv(self, path: str | Path) -> None:
        lines = ["value,density"]
        lines.extend(f"{x:.17g},{d:.17g}" for x, d in zip(self.abscissae.tolist(), self.densities.tolist()))
        Path(path).write_text("\n".join(lines) + "\n")


def read_curve_csv(path: str | Path, kind: str = "unknown") -> DensityCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DensityCurve(data[:, 0], data[:, 1], kind)


def histogram(values, bins: int = 100, range: tuple[float, float] | None = None) -> DensityCurve:
    """Density-normalized histogram; ``abscissae`` are bin centres, ``edges`` the bin edges."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise SizeError("histogram of an empty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins, range=range)
    widths = np.diff(edges)
    dens = counts / (counts.sum() * widths)
    return DensityCurve(0.5 * (edges[1:] + edges[:-1]), dens, "Histogram", edges)


def plot_values(trace, name: str) -> np.ndarray:
    """Column of a trace on the scale used for marginal plots (sigma, not sigma2)."""
    arr = _values(trace)
    if name in ("sigma_x", "sigma_y"):
        return np.sqrt(arr[:, PARAM_NAMES.index("sigma2_" + name[-1])])
    return arr[:, PARAM_NAMES.index(name)]


def _grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.linspace(lo, hi, points)


def student_t_logpdf(x, loc: float, scale: float, df: float):
    z = (np.asarray(x, dtype=float) - loc) / scale
    return (
        gammaln((df + 1) / 2) - gammaln(df / 2) - 0.5 * math.log(df * math.pi) - math.log(scale)
        - (df + 1) / 2 * np.log1p(z * z / df)
    )


def scaled_sigma_logpdf(sigma, s: float, nu: float):
    """Log density of sigma when nu s^2 / sigma^2 ~ chi2_nu (includes the 2 sigma Jacobian)."""
    sigma = np.asarray(sigma, dtype=float)
    a = nu / 2.0
    b = nu * s * s / 2.0
    with np.errstate(divide="ignore"):
        s2 = sigma * sigma
        out = a * math.log(b) - gammaln(a) - (a + 1) * np.log(s2) - b / s2 + np.log(2.0 * sigma)
    return np.where(sigma > 0, out, -np.inf)


def _t_span(loc, scale, df):
    if df > 2:
        sd = scale * math.sqrt(df / (df - 2))
        return loc - 6 * sd, loc + 6 * sd
    q = st.t.ppf(1 - _TAIL, df)
    return loc - q * scale, loc + q * scale


def _sigma_span(s, nu):
    # sigma^2 = nu s^2 / chi2_nu
    hi = math.sqrt(nu * s * s / st.chi2.ppf(_TAIL, nu))
    lo = math.sqrt(nu * s * s / st.chi2.isf(_TAIL, nu))
    return lo, hi


def marginal_fiducial_mu(xbar: float, s: float, n: int, points: int = GRID_POINTS, kind: str = "FiducialMu") -> DensityCurve:
    """Location-scale t: (mu - xbar) / (s / sqrt(n)) ~ t_{n-1}."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    scale = s / math.sqrt(n)
    x = _grid(*_t_span(xbar, scale, n - 1), points)
    return DensityCurve(x, np.exp(student_t_logpdf(x, xbar, scale, n - 1)), kind)


def marginal_fiducial_sigma(s: float, n: int, points: int = GRID_POINTS, kind: str = "FiducialSigma") -> DensityCurve:
    """Density of sigma where (n - 1) s^2 / sigma^2 ~ chi2_{n-1}."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    x = _grid(*_sigma_span(s, n - 1), points)
    return DensityCurve(x, np.exp(scaled_sigma_logpdf(x, s, n - 1)), kind)


def prior_mu_curve(prior: PriorSpec, side: str, points: int = GRID_POINTS) -> DensityCurve:
    """Marginal prior of a mean: the t law of a preliminary sample (mu', sigma', n')."""
    mu_p, sig_p, n_p = prior.side(side)
    return marginal_fiducial_mu(mu_p, sig_p, n_p, points, kind="PriorMu")


def prior_sigma_curve(prior: PriorSpec, side: str, points: int = GRID_POINTS) -> DensityCurve:
    _, sig_p, n_p = prior.side(side)
    return marginal_fiducial_sigma(sig_p, n_p, points, kind="PriorSigma")


def normal_mean_fiducial(xbar: float, sigma2: float, n: int, points: int = GRID_POINTS) -> DensityCurve:
    """N(xbar, sigma2 / n), the fiducial law of a normal mean with known variance."""
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    sd = math.sqrt(sigma2 / n)
    x = _grid(xbar - 6 * sd, xbar + 6 * sd, points)
    z = (x - xbar) / sd
    return DensityCurve(x, np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / sd, "FiducialMu")


def confidence_density_rho_pdf(rho, r: float, n: int):
    rho = np.asarray(rho, dtype=float)
    k = math.sqrt(n - 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = k * (math.atanh(r) - np.arctanh(rho))
        out = k * np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / (1.0 - rho * rho)
    return np.where(np.abs(rho) < 1, out, 0.0)


def confidence_density_rho(r: float, n: int, points: int = GRID_POINTS, width: float = 8.0) -> DensityCurve:
    """Confidence density of rho from atanh(r) ~ N(atanh(rho), 1/(n-3)).

    The grid covers ``width`` standard errors either side on the atanh scale.
    """
    if n < 4:
        raise DomainError(f"need n >= 4, got {n}")
    if not -1 < r < 1:
        raise DomainError(f"r must lie in (-1, 1), got {r}")
    half = width / math.sqrt(n - 3)
    x = np.tanh(np.linspace(math.atanh(r) - half, math.atanh(r) + half, points))
    x = np.unique(x)
    return DensityCurve(x, confidence_density_rho_pdf(x, r, n), "ConfidenceRho")


def fiducial_rho_curve(rho_hat: float, n: int, trunc: TruncationConfig, points: int = GRID_POINTS, width: float = 8.5) -> DensityCurve:
    """Fiducial conditional of rho on its support, clipped to ``|gamma| <= width``."""
    support = rho_support(rho_hat, n, trunc)
    g = min(trunc.alpha, width)
    lo = max(support.rho_lo, invert_gamma(g, rho_hat, n))
    hi = min(support.rho_hi, invert_gamma(-g, rho_hat, n))
    x = np.unique(np.clip(np.linspace(lo, hi, points), -math.nextafter(1, 0), math.nextafter(1, 0)))
    return DensityCurve(x, fiducial_density_rho_array(x, rho_hat, n, trunc), "FiducialRhoConditional")


# ---------------------------------------------------------------------------
# scan-order comparison


def compare_scan_orders(
    traces_by_policy: Mapping[str, object],
    reference: str | None = None,
    z_threshold: float = 3.0,
    names: Sequence[str] = PARAM_NAMES,
) -> dict:
    """Mean differences in pooled MCSE units and correlation-matrix gaps between chains.

    Compares ``reference`` with every other policy when given, otherwise every pair.
    """
    if len(traces_by_policy) < 2:
        raise ValueError("need at least 2 policies to compare")
    if reference is not None and reference not in traces_by_policy:
        raise KeyError(f"reference policy {reference!r} not among the traces")
    summaries = {}
    corr = {}
    for key, trace in traces_by_policy.items():
        arr = _values(trace)
        summaries[key] = summarize(arr, names)
        corr[key] = np.corrcoef(arr, rowvar=False)
    keys = list(traces_by_policy)
    if reference is None:
        pairs = list(itertools.combinations(keys, 2))
    else:
        pairs = [(reference, k) for k in keys if k != reference]

    out_pairs = []
    flag = False
    for a, b in pairs:
        z, diff = {}, {}
        for name in names:
            sa, sb = summaries[a][name], summaries[b][name]
            d = sa.mean - sb.mean
            se = math.hypot(sa.mcse, sb.mcse)
            if se > 0:
                zz = d / se
            else:
                zz = 0.0 if d == 0 else math.copysign(math.inf, d)
            z[name] = zz
            diff[name] = d
            flag |= abs(zz) > z_threshold
        gap = float(np.nanmax(np.abs(corr[a] - corr[b])))
        out_pairs.append({"a": a, "b": b, "mean_diff": diff, "z": z, "corr_max_abs_diff": gap})
    return {
        "reference": reference,
        "z_threshold": z_threshold,
        "policies": {k: {"mean": {n: s.mean for n, s in summaries[k].params.items()},
                         "mcse": {n: s.mcse for n, s in summaries[k].params.items()}}
                     for k in keys},
        "pairs": out_pairs,
        "flag": flag,
        "pass": not flag,
    }
