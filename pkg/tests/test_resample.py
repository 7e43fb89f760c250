import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arnapf.resample import (
    FilterDivergence, WeightedEnsemble, effective_sample_size, estimate, normalize,
    sir_step, systematic_resample,
)
from arnapf.statemodel import DynamicsParams, ObservationParams
from arnapf.statemodel import Frame, log_likelihood
from arnapf.synth import mean_frame

ZERO = DynamicsParams(0.0, 0.0, 0.0)
OBS = ObservationParams(1.5, 10.0, 5, 64, 64)


def _ens(weights, n=None):
    n = len(weights) if n is None else n
    states = np.zeros((n, 5))
    states[:, 0] = np.arange(n)
    return WeightedEnsemble.from_weights(states, weights, ids=np.arange(n))


@pytest.mark.parametrize("w, expected", [
    ((2, 2), (0.5, 0.5)),
    ((1, 0, 0), (1, 0, 0)),
    ((1, 2, 3, 4), (0.1, 0.2, 0.3, 0.4)),
])
def test_normalize(w, expected):
    e = normalize(_ens(w))
    np.testing.assert_allclose(e.weights, expected, atol=1e-12)
    assert abs(e.weights.sum() - 1) < 1e-12


def test_normalize_divergence():
    with pytest.raises(FilterDivergence):
        normalize(_ens((0.0, 0.0)))


def test_normalize_handles_huge_log_weights():
    e = WeightedEnsemble(np.zeros((3, 5)), np.array([-2000.0, -2001.0, -5000.0]))
    w = normalize(e).weights
    assert abs(w.sum() - 1) < 1e-12 and w[0] > w[1] > 0


@pytest.mark.parametrize("w, expected", [
    ((0.25,) * 4, 4.0), ((1, 0, 0, 0), 1.0), ((0.5, 0.5, 0, 0), 2.0),
])
def test_effective_sample_size(w, expected):
    assert effective_sample_size(w) == pytest.approx(expected)


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=30), st.randoms())
def test_ess_permutation_and_scale_invariant(w, rnd):
    w = np.array(w)
    base = effective_sample_size(w / w.sum())
    perm = w.copy()
    rnd.shuffle(perm)
    assert effective_sample_size(perm / perm.sum()) == pytest.approx(base, rel=1e-9)
    assert effective_sample_size(3.7 * w / (3.7 * w).sum()) == pytest.approx(base, rel=1e-9)
    assert 1 - 1e-9 <= base <= len(w) + 1e-9


def test_resample_degenerate():
    out = systematic_resample(_ens((1, 0, 0, 0)), np.random.default_rng(0))
    assert np.array_equal(out.ids, [0, 0, 0, 0])
    np.testing.assert_allclose(out.weights, 0.25)


def test_resample_uniform_keeps_everyone():
    out = systematic_resample(_ens((0.2,) * 5), np.random.default_rng(1))
    assert sorted(out.ids) == [0, 1, 2, 3, 4]


def test_resample_unbiased_offspring():
    rng = np.random.default_rng(2)
    e = normalize(_ens((0.5, 0.3, 0.2)))
    counts = np.zeros(3)
    for _ in range(10 ** 5):
        counts += np.bincount(systematic_resample(e, rng, n=10).ids, minlength=3)
    np.testing.assert_allclose(counts / 10 ** 5, (5, 3, 2), rtol=0.01)


@settings(max_examples=200)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40).filter(lambda w: sum(w) > 1e-6),
       st.integers(1, 100), st.integers(0, 2 ** 32 - 1))
def test_offspring_within_floor_ceil(w, n, seed):
    e = normalize(_ens(w))
    out = systematic_resample(e, np.random.default_rng(seed), n=n)
    counts = np.bincount(out.ids, minlength=len(w))
    target = n * e.weights
    assert len(out) == n
    assert np.all(counts >= np.floor(target - 1e-9)) and np.all(counts <= np.ceil(target + 1e-9))


def test_resample_mean_unbiased():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    w = rng.uniform(size=20)
    e = normalize(WeightedEnsemble.from_weights(np.column_stack([x, np.zeros((20, 4))]), w))
    target = estimate(e)[0]
    r = 10 ** 5
    means = np.array([systematic_resample(e, rng).states[:, 0].mean() for _ in range(r)])
    assert abs(means.mean() - target) < 3 * means.std() / np.sqrt(r)


@pytest.mark.parametrize("w, xs, expected", [
    ((1.0,), (7.0,), 7.0),
    ((0.5, 0.5), (0.0, 2.0), 1.0),
    ((0.9, 0.1), (0.0, 10.0), 1.0),
])
def test_estimate(w, xs, expected):
    states = np.zeros((len(xs), 5))
    states[:, 0] = xs
    assert estimate(WeightedEnsemble.from_weights(states, w))[0] == pytest.approx(expected)


def _noise_free_frame(truth):
    return Frame(mean_frame(truth, OBS))


def test_sir_step_at_truth_is_exact():
    truth = np.array([30.0, 30.0, 0.0, 0.0, 40.0])
    e = WeightedEnsemble.uniform(np.tile(truth, (20, 1)))
    out, est = sir_step(e, _noise_free_frame(truth), ZERO, OBS, None, np.random.default_rng(0))
    np.testing.assert_allclose(est, truth, rtol=0, atol=1e-12)
    assert len(out) == 20


def test_sir_threshold_semantics():
    truth = np.array([30.0, 30.0, 0.0, 0.0, 40.0])
    rng = np.random.default_rng(1)
    states = np.tile(truth, (50, 1)) + rng.normal(0, 1, (50, 5)) * [1, 1, 0, 0, 0]
    e = WeightedEnsemble.uniform(states, ids=np.arange(50))
    frame = _noise_free_frame(truth)
    never, _ = sir_step(e, frame, ZERO, OBS, 0, np.random.default_rng(2))
    always, _ = sir_step(e, frame, ZERO, OBS, 51, np.random.default_rng(2))
    assert np.array_equal(never.ids, np.arange(50))
    assert np.ptp(never.weights) > 0
    np.testing.assert_allclose(always.weights, 1 / 50)
    assert len(set(always.ids)) < 50


def test_sir_step_converges_from_box():
    truth = np.array([31.3, 28.6, 0.0, 0.0, 60.0])
    rng = np.random.default_rng(4)
    states = np.tile(truth, (500, 1))
    states[:, :2] += rng.uniform(-3, 3, (500, 2))
    frame = _noise_free_frame(truth)
    _, est = sir_step(WeightedEnsemble.uniform(states), frame, ZERO, OBS, None, rng)
    assert np.hypot(*(est[:2] - truth[:2])) < 0.5
    # oracle: the best particle on the likelihood scan is also close to the truth
    best = states[np.argmax(log_likelihood(states, frame, OBS))]
    assert np.hypot(*(best[:2] - truth[:2])) < 0.5


def test_ensemble_validation():
    with pytest.raises(ValueError):
        WeightedEnsemble(np.zeros((2, 5)), np.zeros(3))
    with pytest.raises(ValueError):
        WeightedEnsemble.from_weights(np.zeros((2, 5)), [1.0, -1.0])
