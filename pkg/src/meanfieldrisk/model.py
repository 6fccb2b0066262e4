"""Population description and parameter validation.

A population is a list of homogeneous groups, each holding `count` agents
that share a mean-reversion rate `alpha` and a volatility `sigma`.  Every
simulation and every analytic formula in this package is driven by the
per-agent or per-group arrays derived here.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NotApplicableError

DEFAULT_DT = 1e-3
DEFAULT_Y0 = 0.0
DEFAULT_SEED = 0
DEFAULT_REPLICATIONS = 10_000

_MAX_SEED = 2**64


@dataclass(frozen=True)
class GroupSpec:
    """One homogeneous group of agents.

    alpha: mean-reversion rate towards the population mean (1/time, >= 0)
    sigma: volatility (state units per sqrt(time), > 0)
    count: number of agents in the group (>= 1)
    """

    alpha: float
    sigma: float
    count: int


@dataclass(frozen=True)
class SystemConfig:
    """Full declarative description of one experiment.

    `horizon` is the simulated time span T, `eta` the (negative) default
    level, `dt` the Euler step, `seed` the 64-bit master RNG seed and
    `replications` the default Monte Carlo sample size.
    """

    groups: tuple[GroupSpec, ...]
    horizon: float
    eta: float
    dt: float = DEFAULT_DT
    y0: float = DEFAULT_Y0
    seed: int = DEFAULT_SEED
    replications: int = DEFAULT_REPLICATIONS

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        """Build a config from the JSON wire schema.

        Schema: {"groups": [{"alpha", "sigma", "count"}], "T", "eta",
        "dt"?, "y0"?, "seed"?, "replications"?}.  Unknown keys are
        rejected so typos do not silently fall back to defaults.
        """
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {"groups", "T", "eta", "dt", "y0", "seed", "replications"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        for required in ("groups", "T", "eta"):
            if required not in data:
                raise ConfigError(f"missing required config field: {required}")
        raw_groups = data["groups"]
        if not isinstance(raw_groups, list) or not raw_groups:
            raise ConfigError("groups must be a non-empty list")
        groups = []
        for k, g in enumerate(raw_groups):
            if not isinstance(g, dict):
                raise ConfigError(f"group {k}: must be an object")
            extra = sorted(set(g) - {"alpha", "sigma", "count"})
            if extra:
                raise ConfigError(f"group {k}: unknown field(s): {', '.join(extra)}")
            for required in ("alpha", "sigma", "count"):
                if required not in g:
                    raise ConfigError(f"group {k}: missing field {required}")
            groups.append(GroupSpec(float(g["alpha"]), float(g["sigma"]), int(g["count"])))
        return cls(
            groups=tuple(groups),
            horizon=float(data["T"]),
            eta=float(data["eta"]),
            dt=float(data.get("dt", DEFAULT_DT)),
            y0=float(data.get("y0", DEFAULT_Y0)),
            seed=int(data.get("seed", DEFAULT_SEED)),
            replications=int(data.get("replications", DEFAULT_REPLICATIONS)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "groups": [
                {"alpha": g.alpha, "sigma": g.sigma, "count": g.count} for g in self.groups
            ],
            "T": self.horizon,
            "eta": self.eta,
            "dt": self.dt,
            "y0": self.y0,
            "seed": self.seed,
            "replications": self.replications,
        }

    def fingerprint(self) -> str:
        """Stable hex digest of the config, for tagging result objects."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def with_counts(self, counts: Sequence[int]) -> "SystemConfig":
        """Same parameters with a different head count per group."""
        if len(counts) != len(self.groups):
            raise ConfigError("counts must match the number of groups")
        groups = tuple(
            replace(g, count=int(c)) for g, c in zip(self.groups, counts)
        )
        return replace(self, groups=groups)


@dataclass(frozen=True)
class PopulationLayout:
    """Per-agent and per-group arrays expanded from a validated config.

    Agents of the same group are contiguous; `rho` holds the group
    fractions count_k / N.
    """

    alpha: np.ndarray        # (N,) per-agent mean-reversion rates
    sigma: np.ndarray        # (N,) per-agent volatilities
    group_index: np.ndarray  # (N,) group id per agent
    group_alpha: np.ndarray  # (K,)
    group_sigma: np.ndarray  # (K,)
    counts: np.ndarray       # (K,) int
    rho: np.ndarray          # (K,) fractions, sums to 1

    @property
    def n_agents(self) -> int:
        return int(self.alpha.size)

    @property
    def n_groups(self) -> int:
        return int(self.group_alpha.size)

    @property
    def homogeneous_alpha(self) -> bool:
        return bool(np.all(self.group_alpha == self.group_alpha[0]))


@dataclass(frozen=True)
class ExpansionCoefficients:
    """Relative heterogeneity of the rates around their weighted mean.

    eps_k = alpha_k / alpha_bar - 1, so sum_k rho_k * eps_k = 0 by
    construction.  These are the inputs of the second-order variance
    approximation.
    """

    alpha_bar: float
    eps: np.ndarray  # (K,)


def _frozen(values: Iterable[float], dtype=float) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def step_count(horizon: float, dt: float) -> int:
    """Number of Euler steps; requires T/dt to be an integer within 1 ulp."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    quotient = horizon / dt
    n = round(quotient)
    if n < 1 or abs(quotient - n) > math.ulp(quotient):
        raise ConfigError(
            f"dt must divide T: T/dt = {quotient!r} is not an integer step count"
        )
    return int(n)


def _validated_layout(groups: Sequence[GroupSpec], dt: float | None = None) -> PopulationLayout:
    if len(groups) == 0:
        raise ConfigError("config needs at least one group")
    for k, g in enumerate(groups):
        if not float(g.count).is_integer() or g.count < 1:
            raise ConfigError(f"group {k}: count must be a positive integer")
        if not math.isfinite(g.sigma) or g.sigma <= 0:
            raise ConfigError(f"group {k}: sigma must be positive and finite")
        if not math.isfinite(g.alpha) or g.alpha < 0:
            raise ConfigError(f"group {k}: alpha must be nonnegative and finite")
    pairs = [(g.alpha, g.sigma) for g in groups]
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            if pairs[i] == pairs[j]:
                raise ConfigError(
                    f"groups {i} and {j} have identical (alpha, sigma) pairs"
                )
    if dt is not None:
        worst = max(g.alpha for g in groups)
        if dt * worst >= 1.0:
            raise ConfigError(
                f"dt*max(alpha) = {dt * worst:g} >= 1: the explicit Euler step is "
                "unstable; reduce dt"
            )
    counts = np.asarray([g.count for g in groups], dtype=np.int64)
    n_agents = int(counts.sum())
    group_alpha = _frozen([g.alpha for g in groups])
    group_sigma = _frozen([g.sigma for g in groups])
    group_index = _frozen(np.repeat(np.arange(len(groups)), counts), dtype=np.int64)
    return PopulationLayout(
        alpha=_frozen(np.repeat(group_alpha, counts)),
        sigma=_frozen(np.repeat(group_sigma, counts)),
        group_index=group_index,
        group_alpha=group_alpha,
        group_sigma=group_sigma,
        counts=_frozen(counts, dtype=np.int64),
        rho=_frozen(counts / n_agents),
    )


def validate_and_expand(config: SystemConfig) -> PopulationLayout:
    """Check every config invariant and expand groups into per-agent arrays.

    Raises ConfigError with a distinct message for each violated rule.
    """
    if not math.isfinite(config.horizon) or config.horizon <= 0:
        raise ConfigError("T must be positive and finite")
    if not math.isfinite(config.eta) or config.eta >= 0:
        raise ConfigError("eta must be negative")
    if not math.isfinite(config.dt) or config.dt <= 0:
        raise ConfigError("dt must be positive and finite")
    if config.dt > config.horizon:
        raise ConfigError("dt must not exceed T")
    step_count(config.horizon, config.dt)
    if not math.isfinite(config.y0):
        raise ConfigError("y0 must be finite")
    if not (0 <= config.seed < _MAX_SEED):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if config.replications < 1:
        raise ConfigError("replications must be a positive integer")
    return _validated_layout(config.groups, dt=config.dt)


def layout_from_groups(
    alpha: Sequence[float], sigma: Sequence[float], counts: Sequence[int]
) -> PopulationLayout:
    """Expand raw group arrays without a full SystemConfig (analytics helper)."""
    if not (len(alpha) == len(sigma) == len(counts)):
        raise ConfigError("alpha, sigma and counts must have equal length")
    groups = tuple(
        GroupSpec(float(a), float(s), int(c)) for a, s, c in zip(alpha, sigma, counts)
    )
    return _validated_layout(groups)


def layout_from_fractions(
    alpha: Sequence[float],
    sigma: Sequence[float],
    rho: Sequence[float],
    max_denominator: int = 10_000,
) -> PopulationLayout:
    """Expand group fractions into the smallest integer head counts.

    Each rho_k must be a rational with denominator at most
    `max_denominator` (e.g. 0.2, 0.5, 0.3 -> counts 2, 5, 3).
    """
    rho_arr = np.asarray(rho, dtype=float)
    if rho_arr.ndim != 1 or rho_arr.size == 0:
        raise ConfigError("rho must be a non-empty vector")
    if np.any(rho_arr <= 0):
        raise ConfigError("every rho_k must be positive")
    if abs(rho_arr.sum() - 1.0) > 1e-12:
        raise ConfigError(f"rho must sum to 1, got {rho_arr.sum()!r}")
    fracs = [Fraction(r).limit_denominator(max_denominator) for r in rho_arr]
    denom = math.lcm(*(f.denominator for f in fracs))
    counts = [int(f * denom) for f in fracs]
    rebuilt = np.asarray(counts, dtype=float) / denom
    if np.max(np.abs(rebuilt - rho_arr)) > 1e-12:
        raise ConfigError(
            f"rho is not representable with denominator <= {max_denominator}"
        )
    return layout_from_groups(alpha, sigma, counts)


def expansion_coefficients(layout: PopulationLayout) -> ExpansionCoefficients:
    """Weighted mean rate and the relative deviations eps_k = alpha_k/abar - 1."""
    alpha_bar = float(layout.rho @ layout.group_alpha)
    if alpha_bar <= 0.0:
        raise NotApplicableError(
            "expansion undefined: the weighted mean alpha is zero"
        )
    eps = layout.group_alpha / alpha_bar - 1.0
    return ExpansionCoefficients(alpha_bar=alpha_bar, eps=_frozen(eps))
