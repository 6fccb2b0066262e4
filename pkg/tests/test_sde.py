"""Path simulation: Euler recursion, defaults, deviations, determinism."""

import math

import numpy as np
import pytest

from meanfieldrisk import (
    ConfigError,
    NumericalError,
    SystemConfig,
    TimeGrid,
    detect_defaults,
    estimate_systemic_event,
    euler_paths,
    gaussian_increments,
    layout_from_groups,
    max_deviation,
    simulate_replication,
    validate_and_expand,
    variance_quadrature,
)
from meanfieldrisk.sde import TrajectorySet, _euler_batch, run_replications

# frozen oracle: 2*Phi(-0.7) via the reflection principle for Brownian motion
TWO_PHI_07 = 0.4839273044461461

GROUP_A = dict(
    groups=[
        {"alpha": 1.0, "sigma": 2.0, "count": 2},
        {"alpha": 10.0, "sigma": 1.0, "count": 5},
        {"alpha": 100.0, "sigma": 0.5, "count": 3},
    ],
    T=1.0, eta=-0.7, dt=1e-3,
)


def grid(n_steps=100, dt=1e-3):
    return TimeGrid(n_steps=n_steps, dt=dt)


class TestTimeGrid:
    def test_from_horizon(self):
        g = TimeGrid.from_horizon(1.0, 1e-3)
        assert g.n_steps == 1000
        assert abs(g.n_steps * g.dt - 1.0) <= math.ulp(1.0)
        assert g.times.shape == (1001,)
        assert g.times[0] == 0.0

    def test_non_divisible_rejected(self):
        with pytest.raises(ConfigError, match="integer step count"):
            TimeGrid.from_horizon(1.0, 3e-4)


class TestEulerKernel:
    def test_noiseless_system_stays_at_zero(self):
        layout = layout_from_groups([1.0, 10.0], [1.0, 2.0], [2, 2])
        z = np.zeros((4, 50))
        paths, mean_path = euler_paths(layout, grid(50), 0.0, z)
        assert np.all(paths == 0.0)
        assert np.all(mean_path == 0.0)
        traj = TrajectorySet(paths, mean_path, 0, 0)
        record = detect_defaults(traj, -0.7)
        assert record.defaulted_count == 0
        assert not record.systemic_flag
        assert max_deviation(traj, 0) == 0.0

    def test_mean_path_is_arithmetic_mean(self):
        layout = layout_from_groups([3.0], [1.0], [7])
        z = np.random.default_rng(0).standard_normal((7, 200))
        paths, mean_path = euler_paths(layout, grid(200), 0.3, z)
        np.testing.assert_allclose(mean_path, paths.mean(axis=0), rtol=1e-12)
        assert np.all(paths[:, 0] == 0.3)

    def test_equal_alpha_drift_cancels_on_grid(self):
        # with one alpha the agent sum is exactly the accumulated noise sum
        layout = layout_from_groups([5.0, 5.0], [2.0, 0.5], [3, 4])
        n_steps = 400
        z = np.random.default_rng(1).standard_normal((7, n_steps))
        paths, mean_path = euler_paths(layout, grid(n_steps), 0.0, z)
        noise_sum = (layout.sigma[:, None] * z).sum(axis=0).cumsum() * math.sqrt(1e-3)
        lhs = 7 * mean_path[1:]
        scale = np.maximum(np.abs(noise_sum), 1.0)
        assert np.max(np.abs(lhs - noise_sum) / scale) < 1e-10

    def test_exchangeability_bitwise(self):
        # swapping two same-group agents together with their noise streams
        # swaps their paths and leaves the mean path bitwise unchanged
        layout = layout_from_groups([2.0], [1.5], [5])
        z = np.random.default_rng(2).standard_normal((5, 300))
        paths, mean_path = euler_paths(layout, grid(300), 0.0, z)
        z_swapped = z.copy()
        z_swapped[[1, 3]] = z_swapped[[3, 1]]
        paths2, mean_path2 = euler_paths(layout, grid(300), 0.0, z_swapped)
        np.testing.assert_array_equal(paths2[1], paths[3])
        np.testing.assert_array_equal(paths2[3], paths[1])
        np.testing.assert_array_equal(paths2[[0, 2, 4]], paths[[0, 2, 4]])
        np.testing.assert_array_equal(mean_path2, mean_path)

    def test_scaling_by_two_preserves_default_flags(self):
        # doubling every sigma and |eta| rescales paths exactly (powers of two
        # commute with rounding), so the default record is bitwise identical
        config = SystemConfig.from_dict({**GROUP_A, "seed": 9})
        doubled = {**GROUP_A, "seed": 9}
        doubled["groups"] = [dict(g, sigma=2 * g["sigma"]) for g in doubled["groups"]]
        config2 = SystemConfig.from_dict(doubled)
        g = TimeGrid.from_horizon(1.0, 1e-3)
        t1 = simulate_replication(validate_and_expand(config), g, 0.0, 9, 0)
        t2 = simulate_replication(validate_and_expand(config2), g, 0.0, 9, 0)
        np.testing.assert_array_equal(t2.paths, 2.0 * t1.paths)
        r1 = detect_defaults(t1, -0.7)
        r2 = detect_defaults(t2, -1.4)
        np.testing.assert_array_equal(r1.flags, r2.flags)
        assert r1.systemic_flag == r2.systemic_flag

    def test_blowup_raises_with_location(self):
        layout = layout_from_groups([1.0], [1.0], [2])
        z = np.zeros((2, 10))
        z[1, 3] = np.inf
        with pytest.raises(NumericalError, match="step 4.*agent 1"):
            euler_paths(layout, grid(10), 0.0, z)


class TestStreams:
    def test_deterministic_in_seed_and_replication(self):
        a = gaussian_increments(7, 11, 4, 50)
        b = gaussian_increments(7, 11, 4, 50)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, gaussian_increments(7, 12, 4, 50))
        assert not np.array_equal(a, gaussian_increments(8, 11, 4, 50))

    def test_agent_streams_do_not_depend_on_population_size(self):
        # agent i draws the same numbers whether or not more agents exist
        small = gaussian_increments(3, 0, 2, 40)
        large = gaussian_increments(3, 0, 5, 40)
        np.testing.assert_array_equal(small, large[:2])

    def test_batch_matches_single_replication(self):
        config = SystemConfig.from_dict({**GROUP_A, "seed": 21})
        layout = validate_and_expand(config)
        g = TimeGrid.from_horizon(1.0, 1e-3)
        stats = run_replications(layout, g, 0.0, 21, 0, 4, -0.7, track_deviation=True)
        for rep in range(4):
            traj = simulate_replication(layout, g, 0.0, 21, rep)
            record = detect_defaults(traj, -0.7)
            assert record.defaulted_count == stats.defaulted_counts[rep]
            assert record.systemic_flag == stats.systemic[rep]
            assert max_deviation(traj, 2) == stats.max_deviation[rep, 2]

    def test_block_partition_invariance(self):
        config = SystemConfig.from_dict({**GROUP_A, "seed": 5})
        layout = validate_and_expand(config)
        g = TimeGrid.from_horizon(1.0, 1e-3)
        whole = run_replications(layout, g, 0.0, 5, 0, 6, -0.7)
        tail = run_replications(layout, g, 0.0, 5, 3, 3, -0.7)
        np.testing.assert_array_equal(whole.defaulted_counts[3:], tail.defaulted_counts)
        np.testing.assert_array_equal(whole.systemic[3:], tail.systemic)


class TestDefaultsAndDeviation:
    def test_threshold_crossing_at_grid_point(self):
        paths = np.zeros((2, 4))
        paths[1, 2] = -0.71
        traj = TrajectorySet(paths, paths.mean(axis=0), 0, 0)
        record = detect_defaults(traj, -0.7)
        assert record.flags.tolist() == [False, True]
        assert record.defaulted_count == 1

    def test_positive_eta_rejected(self):
        traj = TrajectorySet(np.zeros((1, 2)), np.zeros(2), 0, 0)
        with pytest.raises(ConfigError, match="eta"):
            detect_defaults(traj, 0.1)

    def test_single_agent_never_deviates(self):
        layout = layout_from_groups([4.0], [1.0], [1])
        g = TimeGrid.from_horizon(1.0, 1e-3)
        traj = simulate_replication(layout, g, 0.0, 3, 0)
        assert max_deviation(traj, 0) == 0.0

    def test_agent_index_out_of_range(self):
        traj = TrajectorySet(np.zeros((2, 3)), np.zeros(3), 0, 0)
        with pytest.raises(IndexError):
            max_deviation(traj, 2)


class TestAgainstAnalyticLaw:
    def test_single_agent_default_matches_reflection_principle(self):
        # N = 1: the self-interaction cancels, so the path is a scaled random
        # walk and the crossing probability is 2*Phi(eta / (sigma sqrt(T)))
        # up to the discrete-monitoring bias of the grid minimum.
        config = SystemConfig.from_dict(
            {"groups": [{"alpha": 7.0, "sigma": 1.0, "count": 1}],
             "T": 1.0, "eta": -0.7, "dt": 1e-3, "seed": 77, "replications": 100_000}
        )
        est = estimate_systemic_event(config)
        se = math.sqrt(TWO_PHI_07 * (1 - TWO_PHI_07) / config.replications)
        assert abs(est.estimate - TWO_PHI_07) <= 3 * se + 0.02

    def test_mean_path_variance_matches_quadrature(self):
        # the population mean is exactly Gaussian with variance V_T^2 / N
        config = SystemConfig.from_dict({**GROUP_A, "seed": 11})
        layout = validate_and_expand(config)
        g = TimeGrid.from_horizon(1.0, 1e-3)
        reps = 10_000
        finals = np.empty(reps)
        block = 1000
        for start in range(0, reps, block):
            z = np.stack([
                gaussian_increments(11, r, layout.n_agents, g.n_steps)
                for r in range(start, start + block)
            ])
            _, mean_paths, _, _, _ = _euler_batch(layout, g, 0.0, z, store_paths=True)
            finals[start:start + block] = mean_paths[:, -1]
        target = variance_quadrature(layout, 1.0) / layout.n_agents
        sample = finals.var(ddof=1)
        se = sample * math.sqrt(2.0 / (reps - 1))
        assert abs(sample - target) <= 3 * se
