"""JSON run configuration: prior constants plus sampler settings.

Schema::

    {"prior":   {"mu_x", "sd_x", "n_x", "mu_y", "sd_y", "n_y"},
     "sampler": {"iterations", "burn_in", "seed", "scan", "proposals", "trunc", "adapt"}}

Every key is optional; missing keys take the defaults below.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import BVGibbsError
from .model import REFERENCE_PRIOR, PriorSpec
from .sampler import DEFAULT_PROPOSAL_SD, SamplerConfig, ScanPolicy, TruncPolicy

SEED_ENV = "FUSION_SEED"

PRIOR_KEYS = {
    "mu_x": "mu_prime_x", "sd_x": "sigma_prime_x", "n_x": "n_prime_x",
    "mu_y": "mu_prime_y", "sd_y": "sigma_prime_y", "n_y": "n_prime_y",
}
SAMPLER_KEYS = ("iterations", "burn_in", "seed", "scan", "proposals", "trunc", "adapt")


class ConfigError(BVGibbsError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    prior: PriorSpec
    sampler: SamplerConfig

    def to_json(self) -> dict:
        p = self.prior
        return {
            "prior": {
                "mu_x": p.mu_prime_x, "sd_x": p.sigma_prime_x, "n_x": p.n_prime_x,
                "mu_y": p.mu_prime_y, "sd_y": p.sigma_prime_y, "n_y": p.n_prime_y,
            },
            "sampler": self.sampler.to_json(),
        }


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"not an integer: {raw!r}") from None


def _number(key: str, value: Any, *, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        num = float(value)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if integer:
        if not num.is_integer():
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(num)
    if not math.isfinite(num):
        raise ConfigError(key, f"must be finite, got {value!r}")
    return num


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as JSON when possible) to a raw config dict."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like section.key=value")
    path, value = assignment.split("=", 1)
    parts = path.strip().split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "cannot descend into a non-object")
    node[parts[-1]] = _parse_scalar(value)


def read_raw_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be an object")
    return raw


def resolve_config(raw: Mapping[str, Any]) -> RunConfig:
    """Validate a raw dict and fill defaults; errors name the offending key."""
    for key in raw:
        if key not in ("prior", "sampler"):
            raise ConfigError(key, "unknown section")

    prior_raw = raw.get("prior", {}) or {}
    if not isinstance(prior_raw, Mapping):
        raise ConfigError("prior", "must be an object")
    fields = {}
    for key, attr in PRIOR_KEYS.items():
        fields[attr] = getattr(REFERENCE_PRIOR, attr)
    for key, value in prior_raw.items():
        if key not in PRIOR_KEYS:
            raise ConfigError(f"prior.{key}", "unknown key")
        fields[PRIOR_KEYS[key]] = _number(f"prior.{key}", value)
    for key in ("n_x", "n_y"):
        if not fields[PRIOR_KEYS[key]] >= 2:
            raise ConfigError(f"prior.{key}", f"must be >= 2, got {fields[PRIOR_KEYS[key]]}")
    for key in ("sd_x", "sd_y"):
        if not fields[PRIOR_KEYS[key]] > 0:
            raise ConfigError(f"prior.{key}", f"must be > 0, got {fields[PRIOR_KEYS[key]]}")
    prior = PriorSpec(**fields)

    s_raw = raw.get("sampler", {}) or {}
    if not isinstance(s_raw, Mapping):
        raise ConfigError("sampler", "must be an object")
    for key in s_raw:
        if key not in SAMPLER_KEYS:
            raise ConfigError(f"sampler.{key}", "unknown key")
    defaults = SamplerConfig()
    kwargs: dict[str, Any] = {}
    for key, attr in (("iterations", "iterations"), ("burn_in", "burn_in")):
        value = _number(f"sampler.{key}", s_raw.get(key, getattr(defaults, attr)), integer=True)
        if value < 0:
            raise ConfigError(f"sampler.{key}", f"must be >= 0, got {value}")
        kwargs[attr] = value
    seed = s_raw.get("seed")
    kwargs["seed"] = default_seed() if seed is None else _number("sampler.seed", seed, integer=True)
    try:
        kwargs["scan"] = ScanPolicy.parse(str(s_raw.get("scan", "uniform")))
    except ValueError as exc:
        raise ConfigError("sampler.scan", str(exc)) from None
    proposals = s_raw.get("proposals", {}) or {}
    if not isinstance(proposals, Mapping):
        raise ConfigError("sampler.proposals", "must be an object")
    sd = dict(DEFAULT_PROPOSAL_SD)
    for key, value in proposals.items():
        if key not in sd:
            raise ConfigError(f"sampler.proposals.{key}", "unknown key")
        sd[key] = _number(f"sampler.proposals.{key}", value)
        if not sd[key] > 0:
            raise ConfigError(f"sampler.proposals.{key}", "must be > 0")
    kwargs["proposal_sd"] = sd
    try:
        kwargs["trunc"] = TruncPolicy.parse(s_raw.get("trunc", "auto"))
    except (ValueError, TypeError) as exc:
        raise ConfigError("sampler.trunc", str(exc)) from None
    adapt = s_raw.get("adapt", True)
    if not isinstance(adapt, bool):
        raise ConfigError("sampler.adapt", f"expected true or false, got {adapt!r}")
    kwargs["adapt_during_burnin"] = adapt
    return RunConfig(prior, SamplerConfig(**kwargs))


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    raw = read_raw_config(path)
    for assignment in overrides or []:
        apply_override(raw, assignment)
    return resolve_config(raw)
