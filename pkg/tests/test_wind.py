"""Wind scenario tests: piecewise schedule, bounded residual statistics, measurement."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadtrack.wind import WindScenario, aero_force, measured_wind, sample_residual


def test_no_segments_gives_zero():
    s = WindScenario()
    assert np.array_equal(aero_force(s, 0.0), np.zeros(3))
    assert np.array_equal(aero_force(s, 100.0), np.zeros(3))


def test_single_segment_schedule():
    s = WindScenario(segments=[(0.0, (0.0, 2.0, 0.0))])
    assert np.allclose(aero_force(s, 1.0), [0.0, 2.0, 0.0])
    assert np.allclose(aero_force(s, 0.0), [0.0, 2.0, 0.0])  # right-continuous at start


def test_two_segment_switch_is_right_continuous():
    s = WindScenario(segments=[(0.0, (1.0, 0.0, 0.0)), (5.0, (0.0, -2.0, 0.0))])
    assert np.allclose(aero_force(s, 4.999), [1.0, 0.0, 0.0])
    assert np.allclose(aero_force(s, 5.0), [0.0, -2.0, 0.0])
    assert np.allclose(aero_force(s, 7.3), [0.0, -2.0, 0.0])


def test_zero_before_first_segment():
    s = WindScenario(segments=[(2.0, (1.0, 1.0, 1.0))])
    assert np.array_equal(aero_force(s, 1.0), np.zeros(3))


def test_aero_force_returns_copy():
    s = WindScenario(segments=[(0.0, (1.0, 0.0, 0.0))])
    out = aero_force(s, 1.0)
    out[0] = 99.0
    assert np.allclose(aero_force(s, 1.0), [1.0, 0.0, 0.0])


def test_scenario_validation():
    with pytest.raises(ValueError):
        WindScenario(segments=[(5.0, (1, 0, 0)), (2.0, (0, 0, 0))])  # unsorted
    with pytest.raises(ValueError):
        WindScenario(segments=[(0.0, (1, 0))])  # bad shape
    with pytest.raises(ValueError):
        WindScenario(noise_std=-0.1)
    with pytest.raises(ValueError):
        WindScenario(residual_bound=0.0)
    with pytest.raises(ValueError):
        WindScenario(residual_mean=(4.0, 0, 0), residual_bound=3.0)
    with pytest.raises(ValueError):
        aero_force(WindScenario(), np.nan)


def test_residual_zero_noise_is_exact_mean():
    s = WindScenario(residual_mean=(0.5, -0.25, 0.1), noise_std=0.0)
    rng = np.random.default_rng(0)
    w = sample_residual(s, rng)
    assert np.array_equal(w, [0.5, -0.25, 0.1])
    w[0] = 99.0
    assert np.array_equal(s.residual_mean, [0.5, -0.25, 0.1])  # copy, not a view


def test_residual_respects_bound():
    s = WindScenario(residual_mean=(0.5, 0.0, 0.0), noise_std=1.5, residual_bound=1.0)
    rng = np.random.default_rng(7)
    draws = np.array([sample_residual(s, rng) for _ in range(5_000)])
    assert np.all(np.abs(draws) <= 1.0 + 1e-12)


def test_residual_mean_statistics():
    """With a loose bound the truncation barely bites: empirical mean ~ configured mean."""
    mean = np.array([0.4, -0.2, 0.0])
    s = WindScenario(residual_mean=mean, noise_std=0.25, residual_bound=3.0)
    rng = np.random.default_rng(11)
    n = 20_000
    draws = np.array([sample_residual(s, rng) for _ in range(n)])
    tol = 4.0 * 0.25 / np.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < tol)
    assert np.all(np.abs(draws.std(axis=0) - 0.25) < 0.01)


def test_residual_impossible_bound_raises():
    # mean right at the bound edge with a huge std: nearly every draw rejected
    s = WindScenario(residual_mean=(0.0, 0.0, 0.0), noise_std=1e6, residual_bound=1e-6)
    with pytest.raises(RuntimeError):
        sample_residual(s, np.random.default_rng(0))


def test_residual_reproducible():
    s = WindScenario(residual_mean=(0.1, 0.2, 0.3), noise_std=0.5)
    a = [sample_residual(s, np.random.default_rng(42)) for _ in range(10)]
    b = [sample_residual(s, np.random.default_rng(42)) for _ in range(10)]
    assert np.array_equal(np.array(a), np.array(b))


def test_measured_wind_noiseless_passthrough():
    s = WindScenario(segments=[(0.0, (1.0, -1.0, 0.5))], measurement_std=0.0)
    rng = np.random.default_rng(0)
    assert np.array_equal(measured_wind(s, 3.0, rng), [1.0, -1.0, 0.5])


def test_measured_wind_unbiased():
    s = WindScenario(segments=[(0.0, (2.0, 0.0, 0.0))], measurement_std=0.05)
    rng = np.random.default_rng(3)
    n = 20_000
    draws = np.array([measured_wind(s, 1.0, rng) for _ in range(n)])
    tol = 4.0 * 0.05 / np.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - [2.0, 0.0, 0.0]) < tol)
    assert np.all(np.abs(draws.std(axis=0) - 0.05) < 0.005)


@settings(max_examples=40, deadline=None)
@given(
    mean=st.tuples(*[st.floats(-1.0, 1.0) for _ in range(3)]),
    std=st.floats(0.01, 1.0),
    bound=st.floats(1.5, 4.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_residual_bound_property(mean, std, bound, seed):
    s = WindScenario(residual_mean=mean, noise_std=std, residual_bound=bound)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        w = sample_residual(s, rng)
        assert w.shape == (3,)
        assert np.all(np.abs(w) <= bound)


@settings(max_examples=30, deadline=None)
@given(
    starts=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=4),
    t=st.floats(-1.0, 12.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_schedule_selects_last_started_segment(starts, t, seed):
    r = np.random.default_rng(seed)
    starts = sorted(starts)
    segments = [(s0, r.uniform(-2, 2, 3)) for s0 in starts]
    scen = WindScenario(segments=segments)
    expected = np.zeros(3)
    for s0, accel in segments:
        if t >= s0:
            expected = accel
    assert np.allclose(aero_force(scen, t), expected)
