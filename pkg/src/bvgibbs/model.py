"""Data model for paired bivariate normal observations.

Holds the observation containers, the raw sufficient statistics, the state
vector ``(mu_x, mu_y, sigma2_x, sigma2_y, rho)`` and the prior constants, plus
the conditional likelihood used by every full conditional in the sampler.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConstructionError, DomainError, SizeError

PARAM_NAMES = ("mu_x", "mu_y", "sigma2_x", "sigma2_y", "rho")


@dataclass(frozen=True)
class Observation:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"non-finite observation ({self.x}, {self.y})")


@dataclass(frozen=True)
class ObservationSet:
    """An ordered sample of (x, y) pairs, at least two of them."""

    points: tuple[Observation, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise SizeError(f"need at least 2 observations, got {len(self.points)}")

    @classmethod
    def from_arrays(cls, x: Iterable[float], y: Iterable[float]) -> "ObservationSet":
        xs = [float(v) for v in x]
        ys = [float(v) for v in y]
        if len(xs) != len(ys):
            raise SizeError(f"x has {len(xs)} values but y has {len(ys)}")
        return cls(tuple(Observation(a, b) for a, b in zip(xs, ys)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def y(self) -> np.ndarray:
        return np.array([p.y for p in self.points])


@dataclass(frozen=True)
class SufficientStats:
    """Raw sums over the sample.

    ``cxx``, ``cyy`` and ``cxy`` are the co-moments about the rounded sample
    means ``m = sum / n`` and ``rx``, ``ry`` the residual sums ``sum (x - m)``.
    They are derived from the same data at construction and only serve to keep
    re-centering numerically stable when the data sit far from the origin.
    """

    n: int
    sum_x: float
    sum_y: float
    sum_xx: float
    sum_yy: float
    sum_xy: float
    cxx: float = field(default=math.nan, repr=False)
    cyy: float = field(default=math.nan, repr=False)
    cxy: float = field(default=math.nan, repr=False)
    rx: float = field(default=0.0, repr=False)
    ry: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise SizeError(f"need n >= 2, got {self.n}")
        if math.isnan(self.cxx):
            # built from raw sums only: derive co-moments by expansion
            n = self.n
            object.__setattr__(self, "cxx", max(self.sum_xx - self.sum_x**2 / n, 0.0))
            object.__setattr__(self, "cyy", max(self.sum_yy - self.sum_y**2 / n, 0.0))
            object.__setattr__(self, "cxy", self.sum_xy - self.sum_x * self.sum_y / n)
        tol = 1e-9
        if self.sum_xx * self.n < self.sum_x**2 * (1 - tol) - tol:
            raise DomainError("sum_xx * n < sum_x**2")
        if self.sum_yy * self.n < self.sum_y**2 * (1 - tol) - tol:
            raise DomainError("sum_yy * n < sum_y**2")

    @property
    def mean_x(self) -> float:
        return self.sum_x / self.n

    @property
    def mean_y(self) -> float:
        return self.sum_y / self.n

    def sample_moments(self) -> tuple[float, float, float, float, float]:
        """Means, sample standard deviations (n - 1 divisor) and correlation."""
        n = self.n
        sd_x = math.sqrt(self.cxx / (n - 1))
        sd_y = math.sqrt(self.cyy / (n - 1))
        denom = math.sqrt(self.cxx * self.cyy)
        r = self.cxy / denom if denom > 0 else 0.0
        return self.mean_x, sd_x, self.mean_y, sd_y, r


class ModelParams(NamedTuple):
    mu_x: float
    mu_y: float
    sigma2_x: float
    sigma2_y: float
    rho: float

    def check(self) -> "ModelParams":
        """Return self, raising DomainError if any field is out of range."""
        if not all(math.isfinite(v) for v in self):
            raise DomainError(f"non-finite parameter in {self}")
        if self.sigma2_x <= 0 or self.sigma2_y <= 0:
            raise DomainError(f"variances must be positive: {self}")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1): {self.rho}")
        return self


@dataclass(frozen=True)
class PriorSpec:
    """Constants of the conditional priors on the means and variances."""

    mu_prime_x: float
    sigma_prime_x: float
    n_prime_x: float
    mu_prime_y: float
    sigma_prime_y: float
    n_prime_y: float

    def __post_init__(self):
        for name in ("n_prime_x", "n_prime_y"):
            if not getattr(self, name) >= 2:
                raise DomainError(f"{name} must be >= 2, got {getattr(self, name)}")
        for name in ("sigma_prime_x", "sigma_prime_y"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("mu_prime_x", "mu_prime_y"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def side(self, side: str) -> tuple[float, float, float]:
        """(mu', sigma', n') for side ``"x"`` or ``"y"``."""
        s = side.lower()
        if s == "x":
            return self.mu_prime_x, self.sigma_prime_x, self.n_prime_x
        if s == "y":
            return self.mu_prime_y, self.sigma_prime_y, self.n_prime_y
        raise ValueError(f"side must be 'x' or 'y', got {side!r}")


REFERENCE_PRIOR = PriorSpec(
    mu_prime_x=0.3, sigma_prime_x=1.2, n_prime_x=50,
    mu_prime_y=0.2, sigma_prime_y=0.75, n_prime_y=100,
)

# sample size, means, standard deviations and correlation of the reference dataset
REFERENCE_SUMMARY = dict(n=100, mean_x=0.0925, sd_x=1.053, mean_y=0.0400, sd_y=0.866, corr=0.780)


def compute_sufficient_stats(data: ObservationSet | Sequence[Observation]) -> SufficientStats:
    points = data.points if isinstance(data, ObservationSet) else tuple(data)
    n = len(points)
    if n < 2:
        raise SizeError(f"need at least 2 observations, got {n}")
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    sum_x = math.fsum(xs)
    sum_y = math.fsum(ys)
    mx, my = sum_x / n, sum_y / n
    return SufficientStats(
        n=n,
        sum_x=sum_x,
        sum_y=sum_y,
        sum_xx=math.fsum(a * a for a in xs),
        sum_yy=math.fsum(b * b for b in ys),
        sum_xy=math.fsum(a * b for a, b in zip(xs, ys)),
        cxx=math.fsum((a - mx) ** 2 for a in xs),
        cyy=math.fsum((b - my) ** 2 for b in ys),
        cxy=math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys)),
        rx=math.fsum(a - mx for a in xs),
        ry=math.fsum(b - my for b in ys),
    )


def centered_sums(stats: SufficientStats, mu_x: float, mu_y: float) -> tuple[float, float, float]:
    """Return sum (x-mu_x)^2, sum (y-mu_y)^2 and sum (x-mu_x)(y-mu_y).

    Uses the expansion about the sample means, which equals the raw-sum
    expansion algebraically but does not cancel catastrophically.
    """
    n = stats.n
    dx = stats.sum_x / n - mu_x
    dy = stats.sum_y / n - mu_y
    rx, ry = stats.rx, stats.ry
    return (
        stats.cxx + dx * (2.0 * rx + n * dx),
        stats.cyy + dy * (2.0 * ry + n * dy),
        stats.cxy + dx * ry + dy * rx + n * dx * dy,
    )


def log_likelihood(params: ModelParams, stats: SufficientStats) -> float:
    """Log of the conditional likelihood of the means and variances given rho.

    Factors depending only on rho and constants are dropped, so the value is
    the full bivariate normal log-likelihood minus ``-n*log(2*pi*sqrt(1-rho^2))``.
    """
    mu_x, mu_y, s2x, s2y, rho = params
    if s2x <= 0 or s2y <= 0:
        raise DomainError("variances must be positive")
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1): {rho}")
    sxx, syy, sxy = centered_sums(stats, mu_x, mu_y)
    return _loglik_kernel(stats.n, s2x, s2y, rho, sxx, syy, sxy)


def _loglik_kernel(n, s2x, s2y, rho, sxx, syy, sxy):
    omr = 1.0 - rho * rho
    sx_sy = math.sqrt(s2x * s2y)
    return (
        -0.5 * n * math.log(s2x * s2y)
        - sxx / (2.0 * omr * s2x)
        + rho * sxy / (omr * sx_sy)
        - syy / (2.0 * omr * s2y)
    )


def synthesize_matching_dataset(
    n: int,
    mean_x: float,
    sd_x: float,
    mean_y: float,
    sd_y: float,
    corr: float,
    seed: int | None = None,
) -> ObservationSet:
    """Build a sample whose means, sample sds (n - 1 divisor) and correlation hit the targets.

    A Gaussian base sample is centered, orthonormalized (y against x) and then
    rescaled, so the summary statistics match to rounding error while the
    individual points still look like a draw from a bivariate normal.
    """
    if n < 3:
        raise ConstructionError(f"need n >= 3, got {n}")
    if not (sd_x > 0 and sd_y > 0):
        raise ConstructionError("standard deviations must be positive")
    if not -1.0 < corr < 1.0:
        raise ConstructionError(f"correlation must lie in (-1, 1), got {corr}")
    if not all(math.isfinite(v) for v in (mean_x, mean_y, sd_x, sd_y)):
        raise ConstructionError("targets must be finite")

    rng = np.random.default_rng(seed)
    base = rng.standard_normal((n, 2))
    u = base[:, 0] - base[:, 0].mean()
    u /= np.linalg.norm(u)
    v = base[:, 1] - base[:, 1].mean()
    v -= (u @ v) * u
    norm_v = np.linalg.norm(v)
    if norm_v == 0:
        raise ConstructionError("base sample is degenerate; try another seed")
    v /= norm_v
    # one re-orthogonalization pass keeps u.v at the 1e-17 level
    v -= (u @ v) * u
    v -= v.mean()
    v /= np.linalg.norm(v)

    scale = math.sqrt(n - 1)
    zx = u * scale
    zy = (corr * u + math.sqrt(1.0 - corr * corr) * v) * scale
    x = mean_x + sd_x * zx
    y = mean_y + sd_y * zy
    return ObservationSet.from_arrays(x, y)


def read_observations_csv(path: str | Path) -> ObservationSet:
    """Read a ``x,y`` CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y', got {header!r}")
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return ObservationSet.from_arrays(xs, ys)


def write_observations_csv(data: ObservationSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x,y\n")
        for p in data.points:
            fh.write(f"{p.x:.17g},{p.y:.17g}\n")
