"""Euler discretization of the interacting-diffusion system.

The state of agent i follows

    Y[m+1, i] = Y[m, i] + alpha_i * (Ybar[m] - Y[m, i]) * dt
                + sigma_i * sqrt(dt) * Z[m, i]

with Ybar the arithmetic mean over agents, recomputed every step, and
Z i.i.d. standard normal.  Each (replication, agent) pair owns an
independent counter-based Gaussian stream derived from the master seed,
so replications are reproducible and order-independent.

The per-agent mean is computed by sorting each cross-section before
summing.  A sorted sum depends only on the multiset of values, which
makes the mean path bitwise invariant under permutations of agents and
therefore keeps results identical no matter how replications are
batched or scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .model import PopulationLayout, step_count


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0, dt, 2*dt, ..., n_steps*dt."""

    n_steps: int
    dt: float

    @classmethod
    def from_horizon(cls, horizon: float, dt: float) -> "TimeGrid":
        return cls(n_steps=step_count(horizon, dt), dt=dt)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class TrajectorySet:
    """Sampled paths of one replication plus the empirical mean path."""

    paths: np.ndarray      # (N, n_steps + 1)
    mean_path: np.ndarray  # (n_steps + 1,)
    replication_index: int
    seed: int


@dataclass(frozen=True)
class DefaultRecord:
    """Which agents crossed the default level, and whether the mean did."""

    flags: np.ndarray  # (N,) bool, min over the grid <= eta
    defaulted_count: int
    systemic_flag: bool


@dataclass(frozen=True)
class ReplicationStats:
    """Summary statistics of a batch of replications (no stored paths)."""

    defaulted_counts: np.ndarray      # (B,) int
    systemic: np.ndarray              # (B,) bool
    max_deviation: np.ndarray | None  # (B, N) when tracked


def _mean_rows(y: np.ndarray) -> np.ndarray:
    """Permutation-invariant arithmetic mean along the last axis."""
    return np.sort(y, axis=-1).sum(axis=-1) / y.shape[-1]


def gaussian_increments(
    seed: int, replication_index: int, n_agents: int, n_steps: int
) -> np.ndarray:
    """Standard-normal increments, one independent stream per agent.

    Stream identity is the key (seed, replication_index, agent), hashed
    through numpy's SeedSequence into a Philox counter-based generator.
    """
    z = np.empty((n_agents, n_steps))
    for agent in range(n_agents):
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication_index), agent))
        z[agent] = np.random.Generator(np.random.Philox(ss)).standard_normal(n_steps)
    return z


def _raise_blowup(y: np.ndarray, step: int) -> None:
    bad = np.argwhere(~np.isfinite(y))
    rep, agent = int(bad[0][0]), int(bad[0][1])
    raise NumericalError(
        f"non-finite state at step {step} for agent {agent} "
        f"(replication offset {rep} in batch)"
    )


def _euler_batch(
    layout: PopulationLayout,
    grid: TimeGrid,
    y0: float,
    z: np.ndarray,
    *,
    track_deviation: bool = False,
    store_paths: bool = False,
):
    """Advance a (B, N) block of replications through the full grid.

    z has shape (B, N, n_steps).  Returns (paths, mean_paths, agent_min,
    mean_min, max_dev); the first two are None unless store_paths is set,
    the last is None unless track_deviation is set.
    """
    n_reps, n_agents, n_steps = z.shape
    if n_agents != layout.n_agents or n_steps != grid.n_steps:
        raise ConfigError("increment array shape does not match layout and grid")
    drift = layout.alpha * grid.dt
    diffusion = layout.sigma * math.sqrt(grid.dt)

    y = np.full((n_reps, n_agents), float(y0))
    mean = _mean_rows(y)
    agent_min = y.copy()
    mean_min = mean.copy()
    max_dev = np.zeros((n_reps, n_agents)) if track_deviation else None
    paths = mean_paths = None
    if store_paths:
        paths = np.empty((n_reps, n_agents, n_steps + 1))
        mean_paths = np.empty((n_reps, n_steps + 1))
        paths[:, :, 0] = y
        mean_paths[:, 0] = mean

    for m in range(n_steps):
        y = y + drift * (mean[:, None] - y) + diffusion * z[:, :, m]
        if not np.isfinite(y).all():
            _raise_blowup(y, m + 1)
        mean = _mean_rows(y)
        np.minimum(agent_min, y, out=agent_min)
        np.minimum(mean_min, mean, out=mean_min)
        if track_deviation:
            np.maximum(max_dev, np.abs(y - mean[:, None]), out=max_dev)
        if store_paths:
            paths[:, :, m + 1] = y
            mean_paths[:, m + 1] = mean

    return paths, mean_paths, agent_min, mean_min, max_dev


def simulate_replication(
    layout: PopulationLayout,
    grid: TimeGrid,
    y0: float,
    seed: int,
    replication_index: int,
) -> TrajectorySet:
    """Simulate one replication and keep the full paths.

    Deterministic in (seed, replication_index); agents draw from the same
    streams whether they are simulated alone or inside a batch.
    """
    z = gaussian_increments(seed, replication_index, layout.n_agents, grid.n_steps)
    paths, mean_paths, _, _, _ = _euler_batch(
        layout, grid, y0, z[None, :, :], store_paths=True
    )
    return TrajectorySet(
        paths=paths[0],
        mean_path=mean_paths[0],
        replication_index=int(replication_index),
        seed=int(seed),
    )


def euler_paths(
    layout: PopulationLayout, grid: TimeGrid, y0: float, increments: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic kernel: paths and mean path for given increments.

    `increments` has shape (N, n_steps).  Exposed so tests can drive the
    recursion with hand-chosen noise.
    """
    paths, mean_paths, _, _, _ = _euler_batch(
        layout, grid, y0, np.asarray(increments, dtype=float)[None, :, :],
        store_paths=True,
    )
    return paths[0], mean_paths[0]


def run_replications(
    layout: PopulationLayout,
    grid: TimeGrid,
    y0: float,
    seed: int,
    first_replication: int,
    n_replications: int,
    eta: float,
    *,
    track_deviation: bool = False,
) -> ReplicationStats:
    """Simulate a contiguous block of replications, keeping only statistics.

    Results are a pure function of (seed, replication indices); block
    boundaries do not affect any value.
    """
    if eta >= 0:
        raise ConfigError("eta must be negative")
    n_agents, n_steps = layout.n_agents, grid.n_steps
    z = np.empty((n_replications, n_agents, n_steps))
    for b in range(n_replications):
        z[b] = gaussian_increments(seed, first_replication + b, n_agents, n_steps)
    _, _, agent_min, mean_min, max_dev = _euler_batch(
        layout, grid, y0, z, track_deviation=track_deviation
    )
    flags = agent_min <= eta
    return ReplicationStats(
        defaulted_counts=flags.sum(axis=1),
        systemic=mean_min <= eta,
        max_deviation=max_dev,
    )


def detect_defaults(traj: TrajectorySet, eta: float) -> DefaultRecord:
    """Flag every agent whose grid minimum reached eta; no bridge correction."""
    if eta >= 0:
        raise ConfigError("eta must be negative")
    flags = traj.paths.min(axis=1) <= eta
    return DefaultRecord(
        flags=flags,
        defaulted_count=int(flags.sum()),
        systemic_flag=bool(traj.mean_path.min() <= eta),
    )


def max_deviation(traj: TrajectorySet, agent: int) -> float:
    """Largest distance of one agent from the mean path over the grid."""
    n_agents = traj.paths.shape[0]
    if not 0 <= agent < n_agents:
        raise IndexError(f"agent index {agent} out of range [0, {n_agents})")
    return float(np.abs(traj.paths[agent] - traj.mean_path).max())
