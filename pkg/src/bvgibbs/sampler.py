"""Metropolis-within-Gibbs sampler over (mu_x, mu_y, sigma2_x, sigma2_y, rho).

Each transition updates a single parameter. The correlation is drawn exactly
from its fiducial conditional; the means and variances take one random-walk
Metropolis step against their full conditional posterior (variances are
proposed on the log scale).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .conditionals import PARAM_ORDER, ParamId, log_full_conditional
from .errors import InitializationError
from .fiducial import TruncationConfig, max_alpha, rho_mle, sample_rho
from .model import (
    PARAM_NAMES,
    ModelParams,
    ObservationSet,
    PriorSpec,
    SufficientStats,
    compute_sufficient_stats,
)

DEFAULT_PROPOSAL_SD = {"mu_x": 0.1, "mu_y": 0.1, "sigma2_x": 0.2, "sigma2_y": 0.2}
NEAR_DEGENERATE_RHO_HAT = 0.9999

_ADAPT_WINDOW = 50
_ADAPT_LOW, _ADAPT_HIGH = 0.2, 0.5


@dataclass(frozen=True)
class ScanPolicy:
    """Uniform random choice of the parameter to update, or a fixed cyclic order."""

    order: tuple[ParamId, ...] | None = None

    def __post_init__(self):
        if self.order is not None:
            order = tuple(ParamId(p) for p in self.order)
            if sorted(p.value for p in order) != sorted(p.value for p in PARAM_ORDER):
                raise ValueError(
                    f"fixed scan order must list each of {', '.join(PARAM_NAMES)} exactly once"
                )
            object.__setattr__(self, "order", order)

    @property
    def kind(self) -> str:
        return "uniform" if self.order is None else "fixed"

    @classmethod
    def uniform(cls) -> "ScanPolicy":
        return cls(None)

    @classmethod
    def parse(cls, text: str) -> "ScanPolicy":
        """Parse ``"uniform"`` or a comma separated permutation such as ``rho,mu_x,sigma2_x,mu_y,sigma2_y``."""
        text = text.strip()
        if text.lower() in ("uniform", "random", "uniform-random"):
            return cls.uniform()
        parts = [p for p in text.split(",") if p.strip()]
        return cls(tuple(ParamId.parse(p) for p in parts))

    def __str__(self) -> str:
        return "uniform" if self.order is None else ",".join(p.value for p in self.order)


@dataclass(frozen=True)
class TruncPolicy:
    """How alpha is chosen at each rho update.

    ``auto`` uses ``value`` as a safety factor on the maximal alpha; ``fixed``
    uses ``value`` as alpha, clipped to the maximal alpha when it is too large.
    """

    mode: str = "auto"
    value: float = 0.9

    def __post_init__(self):
        if self.mode not in ("auto", "fixed"):
            raise ValueError(f"trunc mode must be 'auto' or 'fixed', got {self.mode!r}")
        if self.mode == "auto" and not 0.0 < self.value <= 1.0:
            raise ValueError(f"safety factor must lie in (0, 1], got {self.value}")
        if self.mode == "fixed" and not self.value > 0:
            raise ValueError(f"alpha must be positive, got {self.value}")

    def resolve(self, rho_hat: float, n: int) -> TruncationConfig:
        if self.mode == "auto":
            alpha = max_alpha(rho_hat, n, self.value).alpha
        else:
            alpha = min(self.value, max_alpha(rho_hat, n).alpha)
        if abs(rho_hat) > NEAR_DEGENERATE_RHO_HAT:
            warnings.warn(
                f"rho_hat={rho_hat:.6f} is close to +-1; halving alpha",
                RuntimeWarning,
                stacklevel=3,
            )
            alpha *= 0.5
        return TruncationConfig(alpha)

    @classmethod
    def parse(cls, spec) -> "TruncPolicy":
        """Accept ``"auto"``, ``"auto:0.8"``, a number (fixed alpha) or a mapping."""
        if isinstance(spec, TruncPolicy):
            return spec
        if isinstance(spec, Mapping):
            return cls(str(spec.get("mode", "auto")), float(spec.get("value", 0.9)))
        if isinstance(spec, (int, float)):
            return cls("fixed", float(spec))
        text = str(spec).strip().lower()
        if text == "auto":
            return cls()
        if text.startswith("auto:"):
            return cls("auto", float(text[5:]))
        if text.startswith("fixed:"):
            return cls("fixed", float(text[6:]))
        return cls("fixed", float(text))

    def to_json(self) -> dict:
        return {"mode": self.mode, "value": self.value}


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 200_000
    burn_in: int = 5000
    seed: int = 0
    scan: ScanPolicy = field(default_factory=ScanPolicy)
    proposal_sd: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PROPOSAL_SD))
    trunc: TruncPolicy = field(default_factory=TruncPolicy)
    adapt_during_burnin: bool = True

    def __post_init__(self):
        if self.iterations < 0 or self.burn_in < 0:
            raise ValueError("iterations and burn_in must be non-negative")
        sd = dict(DEFAULT_PROPOSAL_SD)
        for key, value in dict(self.proposal_sd).items():
            if key not in sd:
                raise ValueError(f"unknown proposal key {key!r}")
            if not float(value) > 0:
                raise ValueError(f"proposal scale for {key} must be positive")
            sd[key] = float(value)
        object.__setattr__(self, "proposal_sd", sd)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "scan": str(self.scan),
            "proposals": dict(self.proposal_sd),
            "trunc": self.trunc.to_json(),
            "adapt": self.adapt_during_burnin,
        }


@dataclass
class ChainState:
    params: ModelParams
    rng: object
    accepted: bool = True


@dataclass
class ChainTrace:
    """Kept states as an ``(L, 5)`` array in PARAM_NAMES column order."""

    values: np.ndarray
    config: SamplerConfig | None = None
    acceptance_rates: dict[str, float] = field(default_factory=dict)
    tuned_proposal_sd: dict[str, float] = field(default_factory=dict)
    init: ModelParams | None = None
    updates: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def states(self) -> list[ModelParams]:
        return [ModelParams(*map(float, row)) for row in self.values]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, PARAM_NAMES.index(ParamId(name).value)]


# ---------------------------------------------------------------------------
# kernels


def _stats_of(data) -> SufficientStats:
    return data if isinstance(data, SufficientStats) else compute_sufficient_stats(data)


def metropolis_update(
    param: ParamId,
    state: ChainState,
    stats: SufficientStats,
    prior: PriorSpec,
    config: SamplerConfig,
    rng=None,
    *,
    scale: float | None = None,
) -> ChainState:
    """One random-walk Metropolis step for a mean or a variance.

    Always consumes one normal and one uniform draw. Variances move on the log
    scale; the log-Jacobian ``log(new) - log(old)`` keeps the target on the
    variance scale.
    """
    param = ParamId(param)
    rng = state.rng if rng is None else rng
    sd = config.proposal_sd[param.value] if scale is None else scale
    params = state.params
    i = param.index
    current = params[i]
    z = rng.standard_normal()
    u = rng.random()

    if param in (ParamId.MU_X, ParamId.MU_Y):
        proposal = current + sd * z
        log_jac = 0.0
    else:
        log_prop = math.log(current) + sd * z
        proposal = math.exp(log_prop)
        if not (0.0 < proposal < math.inf):
            return ChainState(params, state.rng, False)
        log_jac = log_prop - math.log(current)

    if proposal == current:
        return ChainState(params, state.rng, True)
    log_ratio = (
        log_full_conditional(param, proposal, params, stats, prior)
        - log_full_conditional(param, current, params, stats, prior)
        + log_jac
    )
    if log_ratio >= 0.0 or u < math.exp(log_ratio):
        return ChainState(params._replace(**{param.value: proposal}), state.rng, True)
    return ChainState(params, state.rng, False)


def update_rho(state: ChainState, stats: SufficientStats, config: SamplerConfig, rng=None) -> ChainState:
    """Exact draw of rho from its fiducial conditional at the current means and variances."""
    rng = state.rng if rng is None else rng
    rho_hat = rho_mle(state.params, stats)
    trunc = config.trunc.resolve(rho_hat, stats.n)
    rho = sample_rho(rho_hat, stats.n, trunc, rng)
    return ChainState(state.params._replace(rho=rho), state.rng, True)


def choose_param(scan: ScanPolicy, step: int, rng) -> ParamId:
    """Parameter updated at transition ``step`` (0-based).

    The uniform policy consumes one uniform draw; a fixed order consumes none.
    """
    if scan.order is None:
        return PARAM_ORDER[min(int(rng.random() * 5), 4)]
    return scan.order[step % len(scan.order)]


def gibbs_transition(
    state: ChainState,
    stats: SufficientStats,
    prior: PriorSpec,
    config: SamplerConfig,
    rng=None,
    *,
    step: int = 0,
    scales: Mapping[str, float] | None = None,
) -> tuple[ChainState, ParamId]:
    rng = state.rng if rng is None else rng
    param = choose_param(config.scan, step, rng)
    if param is ParamId.RHO:
        return update_rho(state, stats, config, rng), param
    scale = None if scales is None else scales[param.value]
    return metropolis_update(param, state, stats, prior, config, rng, scale=scale), param


# ---------------------------------------------------------------------------
# chains


def moment_init(stats: SufficientStats) -> ModelParams:
    """Sample means, sample variances and sample correlation."""
    mx, sx, my, sy, r = stats.sample_moments()
    r = max(-0.99, min(0.99, r))
    return ModelParams(mx, my, sx * sx, sy * sy, r)


def overdispersed_init(stats: SufficientStats, seed: int) -> ModelParams:
    """Moment estimates moved by +-2 approximate posterior standard deviations.

    Units: ``s/sqrt(n)`` for the means, ``sqrt(2/(n-1))`` for log variances and
    ``1/sqrt(n-3)`` for atanh(rho); each sign is drawn from a stream derived
    from ``seed``.
    """
    n = stats.n
    mx, sx, my, sy, r = stats.sample_moments()
    signs = np.random.default_rng([seed, 0x5EED]).integers(0, 2, size=5) * 2 - 1
    log_unit = math.sqrt(2.0 / (n - 1))
    rho_unit = 1.0 / math.sqrt(max(n - 3, 1))
    r = max(-0.99, min(0.99, r))
    return ModelParams(
        mx + 2 * signs[0] * sx / math.sqrt(n),
        my + 2 * signs[1] * sy / math.sqrt(n),
        sx * sx * math.exp(2 * signs[2] * log_unit),
        sy * sy * math.exp(2 * signs[3] * log_unit),
        math.tanh(math.atanh(r) + 2 * signs[4] * rho_unit),
    )


def run_chain(
    data: ObservationSet | SufficientStats,
    prior: PriorSpec,
    init: ModelParams | None = None,
    config: SamplerConfig | None = None,
) -> ChainTrace:
    """Run ``burn_in`` discarded transitions, then record ``iterations`` states.

    Proposal scales adapt during burn-in only (toward acceptance in
    [0.2, 0.5]) and are frozen for the recorded part.
    """
    config = SamplerConfig() if config is None else config
    stats = _stats_of(data)
    init = moment_init(stats) if init is None else ModelParams(*map(float, init))
    try:
        init.check()
        for p in PARAM_ORDER[:4]:
            if not math.isfinite(log_full_conditional(p, init[p.index], init, stats, prior)):
                raise InitializationError(f"log full conditional of {p.value} is not finite at {init}")
        rho_mle(init, stats)
    except InitializationError:
        raise
    except Exception as exc:
        raise InitializationError(f"cannot start chain at {init}: {exc}") from exc

    rng = np.random.default_rng(config.seed)
    state = ChainState(init, rng)
    scales = dict(config.proposal_sd)
    names = [p.value for p in PARAM_ORDER]
    step = 0

    window_att = dict.fromkeys(names, 0)
    window_acc = dict.fromkeys(names, 0)
    for _ in range(config.burn_in):
        state, param = gibbs_transition(state, stats, prior, config, rng, step=step, scales=scales)
        step += 1
        if not config.adapt_during_burnin or param is ParamId.RHO:
            continue
        key = param.value
        window_att[key] += 1
        window_acc[key] += state.accepted
        if window_att[key] == _ADAPT_WINDOW:
            rate = window_acc[key] / _ADAPT_WINDOW
            if rate < _ADAPT_LOW:
                scales[key] *= 0.7
            elif rate > _ADAPT_HIGH:
                scales[key] *= 1.4
            window_att[key] = window_acc[key] = 0

    attempts = dict.fromkeys(names, 0)
    accepts = dict.fromkeys(names, 0)
    rows = []
    for _ in range(config.iterations):
        state, param = gibbs_transition(state, stats, prior, config, rng, step=step, scales=scales)
        step += 1
        attempts[param.value] += 1
        accepts[param.value] += state.accepted
        rows.append(state.params)

    values = np.array(rows, dtype=float).reshape(len(rows), 5)
    rates = {k: (accepts[k] / attempts[k] if attempts[k] else math.nan) for k in names}
    return ChainTrace(
        values=values,
        config=config,
        acceptance_rates=rates,
        tuned_proposal_sd=scales,
        init=init,
        updates=attempts,
    )


def _run_chain_args(args):
    return run_chain(*args)


def run_multi_chain(
    data: ObservationSet | SufficientStats,
    prior: PriorSpec,
    config: SamplerConfig,
    n_chains: int = 4,
    base_seed: int | None = None,
    inits: Sequence[ModelParams] | None = None,
    workers: int = 1,
) -> list[ChainTrace]:
    """Independent chains with seeds ``base_seed + i`` from overdispersed starts."""
    stats = _stats_of(data)
    base_seed = config.seed if base_seed is None else base_seed
    if inits is None:
        inits = [overdispersed_init(stats, base_seed + i) for i in range(n_chains)]
    if len(inits) != n_chains:
        raise ValueError(f"got {len(inits)} initial states for {n_chains} chains")
    jobs = [(stats, prior, inits[i], replace(config, seed=base_seed + i)) for i in range(n_chains)]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_chain_args, jobs))
    return [run_chain(*job) for job in jobs]


# ---------------------------------------------------------------------------
# persistence

TRACE_HEADER = "iter," + ",".join(PARAM_NAMES)


def write_trace_csv(trace: ChainTrace, path: str | Path) -> None:
    lines = [TRACE_HEADER]
    lines.extend(
        f"{i},{a:.17g},{b:.17g},{c:.17g},{d:.17g},{e:.17g}"
        for i, (a, b, c, d, e) in enumerate(trace.values.tolist(), start=1)
    )
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path: str | Path) -> ChainTrace:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {TRACE_HEADER!r}, got {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    if rows and any(len(r) != 6 for r in rows):
        raise ValueError(f"{path}: every row needs 6 fields")
    values = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float).reshape(len(rows), 5)
    return ChainTrace(values=values)
