"""Ensemble estimation on top of the path simulator.

Replications are split into fixed-size blocks that depend only on the
problem dimensions, never on the worker count, and every replication
draws from its own keyed stream; estimates are therefore bitwise
reproducible for a given (config, reps, seed) no matter how the work is
scheduled.  Concurrency uses worker processes: the per-step arrays are
small enough that Python threads serialize on the interpreter lock and
run slower than a single thread.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytics
from .errors import ConfigError
from .model import (
    PopulationLayout,
    SystemConfig,
    expansion_coefficients,
    layout_from_fractions,
    validate_and_expand,
)
from .sde import TimeGrid, run_replications

# Replications per block are sized so one block's increment array stays
# around 32 MB regardless of N and the step count.
_BLOCK_TARGET_ELEMENTS = 4_000_000

MIN_REPLICATIONS = 100


@dataclass(frozen=True)
class LossDistribution:
    """Histogram of the number of defaulted agents across replications."""

    probabilities: np.ndarray  # (N+1,) bin k = P(defaulted_count == k)
    stderr: np.ndarray         # (N+1,) binomial standard errors
    tail_default_probability: float  # top bin: all agents defaulted
    replications: int
    config_fingerprint: str


@dataclass(frozen=True)
class EstimateWithError:
    """A probability estimate with its binomial standard error.

    `log_rate` is -(1/N) log(estimate) when the estimate is positive.
    When no replication hit the event, `upper_bound` carries the
    rule-of-three bound 3/replications instead.
    """

    estimate: float
    stderr: float
    replications: int
    log_rate: float | None = None
    upper_bound: float | None = None


@dataclass(frozen=True)
class ConvergenceRow:
    """One population size of a rate-convergence study."""

    n_agents: int
    p_hat: float
    log_rate: float | None
    asymptote: float
    gap: float | None  # |log_rate - asymptote| / asymptote


@dataclass(frozen=True)
class ExpansionErrorRow:
    """Quadrature vs expansion value of V_T^2 at one heterogeneity scale."""

    delta: float
    v2_quadrature: float
    v2_expansion: float
    abs_error: float


def resolve_threads(threads: int | None = None) -> int:
    """Worker count from the argument, MEANFIELD_THREADS, or the CPU count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("MEANFIELD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"MEANFIELD_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _block_size(layout: PopulationLayout, grid: TimeGrid) -> int:
    per_rep = layout.n_agents * grid.n_steps
    return max(16, _BLOCK_TARGET_ELEMENTS // max(1, per_rep))


def _block_worker(args):
    layout, grid, y0, seed, start, count, eta, track_deviation = args
    stats = run_replications(
        layout, grid, y0, seed, start, count, eta, track_deviation=track_deviation
    )
    return start, count, stats


def _collect(
    config: SystemConfig,
    reps: int,
    seed: int,
    *,
    track_deviation: bool = False,
    threads: int | None = None,
):
    """Per-replication statistics for `reps` replications of `config`."""
    layout = validate_and_expand(config)
    grid = TimeGrid.from_horizon(config.horizon, config.dt)
    block = _block_size(layout, grid)
    jobs = [
        (layout, grid, config.y0, seed, start, min(start + block, reps) - start,
         config.eta, track_deviation)
        for start in range(0, reps, block)
    ]
    counts = np.empty(reps, dtype=np.int64)
    systemic = np.empty(reps, dtype=bool)
    max_dev = np.empty((reps, layout.n_agents)) if track_deviation else None

    n_workers = resolve_threads(threads)
    if n_workers == 1 or len(jobs) == 1:
        results = map(_block_worker, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=min(n_workers, len(jobs)))
        results = pool.map(_block_worker, jobs)
    for start, count, stats in results:
        stop = start + count
        counts[start:stop] = stats.defaulted_counts
        systemic[start:stop] = stats.systemic
        if track_deviation:
            max_dev[start:stop] = stats.max_deviation
    if n_workers > 1 and len(jobs) > 1:
        pool.shutdown()
    return layout, counts, systemic, max_dev


def _resolve_reps_seed(config: SystemConfig, reps: int | None, seed: int | None):
    return (
        config.replications if reps is None else int(reps),
        config.seed if seed is None else int(seed),
    )


def estimate_loss_distribution(
    config: SystemConfig,
    reps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> LossDistribution:
    """Histogram of defaulted-agent counts over independent replications."""
    reps, seed = _resolve_reps_seed(config, reps, seed)
    if reps < MIN_REPLICATIONS:
        raise ConfigError(f"loss distributions need at least {MIN_REPLICATIONS} replications")
    layout, counts, _, _ = _collect(config, reps, seed, threads=threads)
    n = layout.n_agents
    bins = np.bincount(counts, minlength=n + 1)
    probabilities = bins / reps
    stderr = np.sqrt(probabilities * (1.0 - probabilities) / reps)
    return LossDistribution(
        probabilities=probabilities,
        stderr=stderr,
        tail_default_probability=float(probabilities[n]),
        replications=reps,
        config_fingerprint=config.fingerprint(),
    )


def estimate_systemic_event(
    config: SystemConfig,
    reps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> EstimateWithError:
    """Frequency of the mean path reaching the default level."""
    reps, seed = _resolve_reps_seed(config, reps, seed)
    if reps < MIN_REPLICATIONS:
        raise ConfigError(f"event estimation needs at least {MIN_REPLICATIONS} replications")
    layout, _, systemic, _ = _collect(config, reps, seed, threads=threads)
    hits = int(systemic.sum())
    p_hat = hits / reps
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / reps)
    if hits > 0:
        return EstimateWithError(
            estimate=p_hat, stderr=stderr, replications=reps,
            log_rate=-math.log(p_hat) / layout.n_agents,
        )
    return EstimateWithError(
        estimate=0.0, stderr=0.0, replications=reps, upper_bound=3.0 / reps
    )


def estimate_flocking_exceedance(
    config: SystemConfig,
    agent: int,
    delta: float,
    reps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> EstimateWithError:
    """Frequency of one agent's maximal distance from the mean exceeding delta."""
    if delta <= 0:
        raise ConfigError("delta must be positive")
    reps, seed = _resolve_reps_seed(config, reps, seed)
    if reps < MIN_REPLICATIONS:
        raise ConfigError(f"event estimation needs at least {MIN_REPLICATIONS} replications")
    layout, _, _, max_dev = _collect(
        config, reps, seed, track_deviation=True, threads=threads
    )
    if not 0 <= agent < layout.n_agents:
        raise IndexError(f"agent index {agent} out of range [0, {layout.n_agents})")
    p_hat = float((max_dev[:, agent] > delta).mean())
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / reps)
    return EstimateWithError(estimate=p_hat, stderr=stderr, replications=reps)


def convergence_study(
    config: SystemConfig,
    n_list: list[int],
    reps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    tol: float = 1e-10,
) -> list[ConvergenceRow]:
    """Empirical decay rate of the systemic event against its asymptote.

    Every N must scale the base composition exactly, so the group
    fractions, and with them the asymptote eta^2 / (2 V_T^2), stay fixed
    while N grows.
    """
    layout = validate_and_expand(config)
    counts = layout.counts
    units = counts // math.gcd(*(int(c) for c in counts))
    unit_total = int(units.sum())
    for n in n_list:
        if n % unit_total != 0:
            admissible = ", ".join(str(unit_total * k) for k in range(1, 4))
            raise ConfigError(
                f"N = {n} does not preserve the {':'.join(str(u) for u in units)} "
                f"composition; admissible N are multiples of {unit_total} "
                f"({admissible}, ...)"
            )
    v2 = analytics.variance_quadrature(layout, config.horizon, tol)
    asymptote = config.eta**2 / (2.0 * v2)
    rows = []
    for n in n_list:
        scaled = config.with_counts([int(u) * (n // unit_total) for u in units])
        est = estimate_systemic_event(scaled, reps=reps, seed=seed, threads=threads)
        gap = None
        if est.log_rate is not None:
            gap = abs(est.log_rate - asymptote) / asymptote
        rows.append(
            ConvergenceRow(
                n_agents=n, p_hat=est.estimate, log_rate=est.log_rate,
                asymptote=asymptote, gap=gap,
            )
        )
    return rows


def expansion_error_study(
    c: list[float],
    rho: list[float],
    sigma: list[float],
    alpha_bar: float,
    horizon: float,
    deltas: list[float],
    tol: float = 1e-10,
) -> list[ExpansionErrorRow]:
    """Expansion error |V_T^2(quadrature) - V_T^2(expansion)| per scale delta.

    The direction c fixes the relative rate offsets; at each delta the
    rates
    are alpha_k = alpha_bar * (1 + delta * c_k).  Requires the weighted
    direction to be centered (sum rho_k c_k = 0) and every delta small
    enough to keep all rates positive.
    """
    c_arr = np.asarray(c, dtype=float)
    rho_arr = np.asarray(rho, dtype=float)
    sigma_arr = np.asarray(sigma, dtype=float)
    if not (c_arr.shape == rho_arr.shape == sigma_arr.shape):
        raise ConfigError("c, rho and sigma must have equal length")
    if abs(float(rho_arr @ c_arr)) > 1e-12:
        raise ConfigError(
            f"direction must satisfy sum(rho*c) = 0, got {float(rho_arr @ c_arr)!r}"
        )
    if alpha_bar <= 0:
        raise ConfigError("alpha_bar must be positive")
    for delta in deltas:
        if delta < 0 or delta * float(np.abs(c_arr).max()) >= 1.0:
            raise ConfigError(
                f"delta = {delta!r} leaves some alpha_k nonpositive; "
                "every delta*|c_k| must be < 1"
            )
    rows = []
    for delta in deltas:
        alphas = alpha_bar * (1.0 + delta * c_arr)
        layout = layout_from_fractions(alphas, sigma_arr, rho_arr)
        v2_quad = analytics.variance_quadrature(layout, horizon, tol)
        v2_hat = analytics.variance_delta_expansion(
            expansion_coefficients(layout), layout, horizon
        )
        rows.append(
            ExpansionErrorRow(
                delta=float(delta), v2_quadrature=v2_quad, v2_expansion=v2_hat,
                abs_error=abs(v2_quad - v2_hat),
            )
        )
    return rows
