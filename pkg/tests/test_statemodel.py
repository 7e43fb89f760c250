import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from arnapf.statemodel import (
    OUTSIDE_PENALTY, DynamicsParams, Frame, ObservationParams, StateVector,
    expected_intensity, log_likelihood, log_likelihood_ratio, outside_floor, propagate,
)
from arnapf.synth import mean_frame

ZERO = DynamicsParams(0.0, 0.0, 0.0)
OBS = ObservationParams(sigma_psf=1.5, background=10.0, roi_radius=5, width=64, height=64)


def test_propagate_noise_free_advection():
    rng = np.random.default_rng(0)
    out = propagate(StateVector(10, 10, 1, 0, 100).array, ZERO, rng)
    assert np.array_equal(out, [11, 10, 1, 0, 100])


def test_propagate_fixed_point():
    out = propagate(StateVector(10, 10, 0, 0, 100).array, ZERO, np.random.default_rng(1))
    assert np.array_equal(out, [10, 10, 0, 0, 100])


def test_propagate_moments():
    n = 10 ** 5
    s = np.tile([0.0, 0.0, 0.0, 0.0, 100.0], (n, 1))
    out = propagate(s, DynamicsParams(0.5, 0.0, 0.0), np.random.default_rng(2))
    assert abs(out[:, 0].mean()) < 3 * 0.5 / math.sqrt(n)
    assert abs(out[:, 0].std() - 0.5) < 0.02 * 0.5


def test_propagate_clamps_intensity():
    s = np.tile([5.0, 5.0, 0.0, 0.0, 0.0], (1000, 1))
    out = propagate(s, DynamicsParams(0.0, 0.0, 3.0), np.random.default_rng(3))
    assert out[:, 4].min() == 0.0
    assert (out[:, 4] > 0).any()


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(0, 1e3))
def test_propagate_zero_noise_is_exact_map(x, y, vx, vy, i0):
    out = propagate(np.array([x, y, vx, vy, i0]), ZERO, np.random.default_rng(0))
    assert out[0] == x + vx and out[1] == y + vy
    assert out[2] == vx and out[3] == vy and out[4] == i0


def test_state_vector_invariants():
    with pytest.raises(ValueError):
        StateVector(0, 0, 0, 0, -1)
    with pytest.raises(ValueError):
        StateVector(float("nan"), 0, 0, 0, 1)
    s = StateVector(1, 2, 3, 4, 5)
    assert StateVector.from_array(s.array) == s


def test_param_validation():
    with pytest.raises(ValueError):
        ObservationParams(sigma_psf=2.0, roi_radius=5)
    with pytest.raises(ValueError):
        DynamicsParams(sigma_pos=-1)
    with pytest.raises(ValueError):
        Frame(np.array([[1.0, -1.0]]))


def test_expected_intensity_values():
    s = StateVector(16, 16, 0, 0, 100).array
    assert expected_intensity(s, OBS, 16, 16) == pytest.approx(110.0)
    assert expected_intensity(s, OBS, 16 + 1.5, 16) == pytest.approx(10 + 100 * math.exp(-0.5))
    # i0 * exp(-18) at exactly 6 sigma is 1.5e-6 for i0 = 100
    assert abs(expected_intensity(s, OBS, 16 + 9, 16) - 10) < 1e-6 * 100
    assert abs(expected_intensity(s, OBS, 16 + 10.5, 16) - 10) < 1e-6


@given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 2 * math.pi))
def test_expected_intensity_monotone_and_symmetric(r1, r2, angle):
    s = np.array([30.0, 30.0, 0, 0, 50.0])
    c, sn = math.cos(angle), math.sin(angle)
    a = expected_intensity(s, OBS, 30 + r1 * c, 30 + r1 * sn)
    b = expected_intensity(s, OBS, 30 + r2 * c, 30 + r2 * sn)
    if r1 <= r2:
        assert a >= b
    mirrored = expected_intensity(s, OBS, 30 - r1 * c, 30 - r1 * sn)
    assert mirrored == pytest.approx(a, rel=1e-12)


def _brute_force_ll(state, pixels, o):
    """Poisson log pmf summed pixel by pixel with scipy, for cross-checking."""
    cx, cy = math.floor(state[0] + 0.5), math.floor(state[1] + 0.5)
    total = 0.0
    for v in range(cy - o.roi_radius, cy + o.roi_radius + 1):
        for u in range(cx - o.roi_radius, cx + o.roi_radius + 1):
            if 0 <= u < pixels.shape[1] and 0 <= v < pixels.shape[0]:
                lam = expected_intensity(state, o, u, v)
                total += poisson.logpmf(pixels[v, u], lam)
    return total


def test_log_likelihood_matches_scipy_poisson():
    rng = np.random.default_rng(4)
    truth = np.array([20.3, 40.8, 0, 0, 30.0])
    frame = Frame(rng.poisson(mean_frame(truth, OBS)).astype(float))
    for s in ([20.3, 40.8, 0, 0, 30.0], [22.0, 39.1, 0, 0, 12.0], [1.2, 62.7, 0, 0, 5.0]):
        s = np.array(s)
        assert log_likelihood(s, frame, OBS) == pytest.approx(
            _brute_force_ll(s, frame.pixels, OBS), rel=1e-10)


def test_log_likelihood_grid_scan_peaks_at_truth():
    truth = np.array([31.0, 27.0, 0, 0, 40.0])
    frame = Frame(mean_frame(truth, OBS))
    grid = [truth + [dx, dy, 0, 0, 0] for dx in (-2, 0, 2) for dy in (-2, 0, 2)]
    for fn in (log_likelihood, log_likelihood_ratio):
        scores = fn(np.array(grid), frame, OBS)
        assert np.argmax(scores) == 4


def test_log_likelihood_translation_symmetry_on_uniform_frame():
    frame = Frame(np.full((64, 64), 10.0))
    a = log_likelihood(np.array([20.0, 20.0, 0, 0, 30.0]), frame, OBS)
    b = log_likelihood(np.array([40.0, 33.0, 0, 0, 30.0]), frame, OBS)
    assert abs(a - b) < 1e-9


def test_log_likelihood_zero_frame():
    frame = Frame(np.zeros((64, 64)))
    s = np.array([30.0, 30.0, 0, 0, 20.0])
    u, v = np.meshgrid(np.arange(25, 36), np.arange(25, 36))
    expected = -expected_intensity(s, OBS, u, v).sum()
    got = log_likelihood(s, frame, OBS)
    assert got == pytest.approx(expected, rel=1e-12)
    assert np.isfinite(got) and got < 0


def test_outside_state_gets_floor():
    frame = Frame(np.full((64, 64), 10.0))
    far = np.array([-100.0, 30.0, 0, 0, 20.0])
    assert log_likelihood(far, frame, OBS) == outside_floor(OBS)
    inside = log_likelihood(np.array([30.0, 30.0, 0, 0, 0.0]), frame, OBS)
    assert outside_floor(OBS) == pytest.approx(inside - OUTSIDE_PENALTY)
    assert log_likelihood_ratio(far, frame, OBS) == -OUTSIDE_PENALTY


def test_ratio_is_full_frame_likelihood_up_to_constant():
    rng = np.random.default_rng(5)
    o = ObservationParams(1.5, 10.0, 5, 40, 30)
    frame = Frame(rng.poisson(mean_frame([12.0, 14.0, 0, 0, 25.0], o)).astype(float))
    background = np.full((30, 40), 10.0)
    states = np.array([[12.0, 14.0, 0, 0, 25.0], [25.4, 9.6, 0, 0, 8.0], [0.6, 29.2, 0, 0, 15.0]])
    ratio = log_likelihood_ratio(states, frame, o)
    full = []
    for s in states:
        lam = mean_frame(s, o)
        # ROI truncation: pixels outside the window use the background rate
        u, v = np.meshgrid(np.arange(40), np.arange(30))
        cx, cy = math.floor(s[0] + 0.5), math.floor(s[1] + 0.5)
        inside = (abs(u - cx) <= 5) & (abs(v - cy) <= 5)
        lam = np.where(inside, lam, background)
        full.append(poisson.logpmf(frame.pixels, lam).sum())
    const = poisson.logpmf(frame.pixels, background).sum()
    assert np.allclose(ratio, np.array(full) - const, rtol=0, atol=1e-8)


@settings(max_examples=200)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e4),
       st.floats(0, 50), st.integers(0, 2 ** 31))
def test_log_likelihood_never_nan_or_inf(x, y, i0, background, seed):
    o = ObservationParams(1.5, background, 5, 24, 20)
    rng = np.random.default_rng(seed)
    frame = Frame(rng.poisson(5.0, size=(20, 24)).astype(float))
    s = np.array([x, y, 0.0, 0.0, i0])
    for fn in (log_likelihood, log_likelihood_ratio):
        val = fn(s, frame, o)
        assert np.isfinite(val)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(6)
    frame = Frame(rng.poisson(10.0, size=(64, 64)).astype(float))
    states = np.column_stack([rng.uniform(-5, 70, 50), rng.uniform(-5, 70, 50),
                              np.zeros(50), np.zeros(50), rng.uniform(0, 50, 50)])
    batch = log_likelihood(states, frame, OBS)
    single = [log_likelihood(s, frame, OBS) for s in states]
    assert np.array_equal(batch, single)
