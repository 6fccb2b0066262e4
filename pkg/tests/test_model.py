"""Population validation, layout expansion, and heterogeneity coefficients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfieldrisk import (
    ConfigError,
    GroupSpec,
    NotApplicableError,
    SystemConfig,
    expansion_coefficients,
    layout_from_fractions,
    layout_from_groups,
    validate_and_expand,
)


def make_config(groups, **overrides):
    base = dict(horizon=1.0, eta=-0.7, dt=1e-3)
    base.update(overrides)
    return SystemConfig(groups=tuple(GroupSpec(*g) for g in groups), **base)


GROUP_A = [(1.0, 2.0, 2), (10.0, 1.0, 5), (100.0, 0.5, 3)]


class TestValidateAndExpand:
    def test_group_a_layout(self):
        layout = validate_and_expand(make_config(GROUP_A))
        assert layout.n_agents == 10
        assert layout.n_groups == 3
        np.testing.assert_allclose(layout.rho, [0.2, 0.5, 0.3], rtol=0, atol=0)
        # agents of one group are contiguous
        assert layout.group_index.tolist() == [0, 0, 1, 1, 1, 1, 1, 2, 2, 2]
        np.testing.assert_array_equal(layout.alpha[:2], 1.0)
        np.testing.assert_array_equal(layout.sigma[7:], 0.5)

    def test_single_degenerate_agent(self):
        layout = validate_and_expand(make_config([(0.0, 1.0, 1)]))
        assert layout.n_agents == 1
        assert layout.rho.tolist() == [1.0]

    def test_duplicate_pairs_rejected(self):
        with pytest.raises(ConfigError, match="identical"):
            validate_and_expand(make_config([(10.0, 1.0, 5), (10.0, 1.0, 5)]))

    @pytest.mark.parametrize(
        "groups,overrides,match",
        [
            ([(1.0, -1.0, 1)], {}, "sigma"),
            ([(1.0, 0.0, 1)], {}, "sigma"),
            ([(-2.0, 1.0, 1)], {}, "alpha"),
            ([(1.0, 1.0, 0)], {}, "count"),
            ([], {}, "at least one group"),
            ([(1.0, 1.0, 1)], {"eta": 0.7}, "eta must be negative"),
            ([(1.0, 1.0, 1)], {"eta": 0.0}, "eta must be negative"),
            ([(1.0, 1.0, 1)], {"horizon": -1.0}, "T must be positive"),
            ([(1.0, 1.0, 1)], {"dt": 0.0}, "dt must be positive"),
            ([(1.0, 1.0, 1)], {"dt": 2.0}, "dt must not exceed"),
            ([(1.0, 1.0, 1)], {"dt": 3e-4}, "integer step count"),
            ([(2000.0, 1.0, 1)], {}, "unstable"),
            ([(1.0, 1.0, 1)], {"y0": float("nan")}, "y0"),
            ([(1.0, 1.0, 1)], {"seed": -1}, "seed"),
            ([(1.0, 1.0, 1)], {"seed": 2**64}, "seed"),
            ([(1.0, 1.0, 1)], {"replications": 0}, "replications"),
        ],
    )
    def test_distinct_diagnostics(self, groups, overrides, match):
        with pytest.raises(ConfigError, match=match):
            validate_and_expand(make_config(groups, **overrides))

    def test_stability_guard_boundary(self):
        # dt * max(alpha) = 0.999 < 1 passes, = 1.0 is rejected
        validate_and_expand(make_config([(999.0, 1.0, 1)]))
        with pytest.raises(ConfigError, match="unstable"):
            validate_and_expand(make_config([(1000.0, 1.0, 1)]))

    def test_pure_function(self):
        a = validate_and_expand(make_config(GROUP_A))
        b = validate_and_expand(make_config(GROUP_A))
        for name in ("alpha", "sigma", "group_index", "rho", "counts"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_layout_arrays_are_readonly(self):
        layout = validate_and_expand(make_config(GROUP_A))
        with pytest.raises(ValueError):
            layout.alpha[0] = 5.0


class TestExpansionCoefficients:
    def test_near_homogeneous_abar_10(self):
        layout = layout_from_groups([9.4, 10.0, 10.4], [5.0, 2.0, 1.0], [2, 5, 3])
        coeffs = expansion_coefficients(layout)
        assert coeffs.alpha_bar == pytest.approx(10.0, abs=1e-12)
        np.testing.assert_allclose(coeffs.eps, [-0.06, 0.0, 0.04], atol=1e-12)

    def test_near_homogeneous_abar_50(self):
        layout = layout_from_groups([47.0, 50.0, 52.0], [5.0, 2.0, 1.0], [2, 5, 3])
        coeffs = expansion_coefficients(layout)
        assert coeffs.alpha_bar == pytest.approx(50.0, abs=1e-12)
        np.testing.assert_allclose(coeffs.eps, [-0.06, 0.0, 0.04], atol=1e-12)

    def test_homogeneous_alpha_gives_zero_eps(self):
        layout = layout_from_groups([7.0, 7.0], [1.0, 2.0], [3, 1])
        coeffs = expansion_coefficients(layout)
        assert coeffs.alpha_bar == 7.0
        np.testing.assert_array_equal(coeffs.eps, [0.0, 0.0])

    def test_all_zero_alpha_rejected(self):
        layout = layout_from_groups([0.0], [1.0], [4])
        with pytest.raises(NotApplicableError, match="expansion undefined"):
            expansion_coefficients(layout)


@st.composite
def group_arrays(draw, max_groups=4):
    k = draw(st.integers(1, max_groups))
    alpha_ticks = draw(
        st.lists(st.integers(0, 120), min_size=k, max_size=k, unique=True)
    )
    sigma_ticks = draw(st.lists(st.integers(1, 40), min_size=k, max_size=k))
    counts = draw(st.lists(st.integers(1, 6), min_size=k, max_size=k))
    return [a / 2.0 for a in alpha_ticks], [s / 8.0 for s in sigma_ticks], counts


@given(group_arrays())
@settings(max_examples=80, deadline=None)
def test_fractions_sum_to_one_and_eps_centered(arrays):
    alpha, sigma, counts = arrays
    layout = layout_from_groups(alpha, sigma, counts)
    assert abs(layout.rho.sum() - 1.0) <= 1e-15
    if layout.rho @ layout.group_alpha > 0:
        coeffs = expansion_coefficients(layout)
        assert abs(float(layout.rho @ coeffs.eps)) <= 1e-12


class TestLayoutFromFractions:
    def test_exact_tenths(self):
        layout = layout_from_fractions([9.4, 10.0, 10.4], [5.0, 2.0, 1.0], [0.2, 0.5, 0.3])
        assert layout.counts.tolist() == [2, 5, 3]

    def test_thirds(self):
        layout = layout_from_fractions([1.0, 2.0], [1.0, 1.0], [1 / 3, 2 / 3])
        assert layout.counts.tolist() == [1, 2]

    def test_unrepresentable_rejected(self):
        with pytest.raises(ConfigError, match="sum to 1"):
            layout_from_fractions([1.0, 2.0], [1.0, 1.0], [0.3, 0.6])


class TestConfigSchema:
    def test_round_trip(self):
        config = make_config(GROUP_A, seed=42, replications=500)
        assert SystemConfig.from_dict(config.to_dict()) == config

    def test_defaults(self):
        config = SystemConfig.from_dict(
            {"groups": [{"alpha": 1, "sigma": 1, "count": 1}], "T": 1.0, "eta": -0.7}
        )
        assert config.dt == 1e-3
        assert config.y0 == 0.0
        assert config.seed == 0
        assert config.replications == 10_000

    def test_missing_field_named(self):
        with pytest.raises(ConfigError, match="eta"):
            SystemConfig.from_dict({"groups": [{"alpha": 1, "sigma": 1, "count": 1}], "T": 1.0})

    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match="Eta"):
            SystemConfig.from_dict(
                {"groups": [{"alpha": 1, "sigma": 1, "count": 1}], "T": 1.0, "eta": -0.7,
                 "Eta": -0.7}
            )

    def test_fingerprint_stable_and_sensitive(self):
        config = make_config(GROUP_A)
        assert config.fingerprint() == make_config(GROUP_A).fingerprint()
        assert config.fingerprint() != make_config(GROUP_A, seed=1).fingerprint()

    def test_with_counts(self):
        scaled = make_config(GROUP_A).with_counts([4, 10, 6])
        assert validate_and_expand(scaled).n_agents == 20
