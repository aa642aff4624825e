import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pftrack.errors import DegenerateWeightsError, InvalidArgumentError
from pftrack.particles import (
    ParticleSet,
    RougheningParams,
    effective_sample_size,
    multinomial_resample,
    normalize,
    resample_indices,
    roughen,
    roughening_std,
    sample_indices_scan,
    sample_indices_stratified,
    systematic_resample,
    weighted_mean_cov,
    weighted_resample,
)

log_weight_vectors = arrays(np.float64, st.integers(1, 60), elements=st.floats(-50, 50))


def _set(w, d=1):
    w = np.asarray(w, float)
    states = np.arange(w.size * d, dtype=float).reshape(w.size, d)
    with np.errstate(divide="ignore"):
        return ParticleSet(states, np.log(w))


def test_normalize_equal_pair():
    assert np.allclose(normalize([3.0, 3.0]), [math.log(0.5)] * 2)


def test_normalize_keeps_zero_weight():
    out = normalize([0.0, -np.inf])
    assert out[0] == 0.0 and out[1] == -np.inf


def test_normalize_random_vector():
    rng = np.random.default_rng(0)
    lw = rng.normal(0, 30, 1000)
    out = normalize(lw)
    assert abs(np.exp(out).sum() - 1) < 1e-12
    assert np.argmax(out) == np.argmax(lw)


@pytest.mark.parametrize("bad", [[-np.inf, -np.inf], [np.nan, 0.0], [np.inf, 0.0]])
def test_normalize_rejects_degenerate(bad):
    with pytest.raises(DegenerateWeightsError):
        normalize(bad)


@settings(max_examples=200)
@given(log_weight_vectors)
def test_normalize_sums_to_one_and_preserves_ratios(lw):
    out = normalize(lw)
    assert abs(np.exp(out).sum() - 1) < 1e-10
    assert np.allclose(out - out[0], lw - lw[0], atol=1e-9)


def test_ess_examples():
    assert effective_sample_size(np.full(100, 0.01)) == pytest.approx(100)
    assert effective_sample_size([1.0, 0, 0, 0]) == pytest.approx(1)
    assert effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(8 / 3)


def test_ess_rejects_unnormalized():
    with pytest.raises(InvalidArgumentError):
        effective_sample_size([0.5, 0.6])


@settings(max_examples=200)
@given(log_weight_vectors)
def test_ess_bounds(lw):
    w = np.exp(normalize(lw))
    n = effective_sample_size(w)
    assert 1 - 1e-9 <= n <= w.size + 1e-9


def test_multinomial_single_particle():
    out = multinomial_resample(ParticleSet(np.array([[7.0, 1.0]]), [0.0]), np.random.default_rng(0))
    assert out.n == 1 and np.array_equal(out.states, [[7.0, 1.0]]) and out.weights[0] == 1.0


@pytest.mark.parametrize("resample", [multinomial_resample, systematic_resample])
def test_point_mass_resamples_to_copies(resample):
    out = resample(_set([1.0, 0.0, 0.0]), np.random.default_rng(1))
    assert np.all(out.states == 0.0)
    assert np.allclose(out.weights, 1 / 3)


def test_multinomial_expected_count():
    rng = np.random.default_rng(2)
    w = np.array([0.7, 0.2, 0.1])
    trials = 100_000
    counts = np.array([np.sum(sample_indices_scan(w, 3, rng) == 0) for _ in range(trials)])
    se = math.sqrt(3 * 0.7 * 0.3 / trials)
    assert abs(counts.mean() - 2.1) < 4 * se


def test_systematic_uniform_weights_each_once():
    out = systematic_resample(_set(np.full(10, 0.1)), np.random.default_rng(3))
    assert sorted(out.states[:, 0]) == list(range(10))


def test_systematic_floor_ceil_count():
    rng = np.random.default_rng(4)
    w = np.full(100, (1 - 0.355) / 99)
    w[17] = 0.355
    for _ in range(500):
        c = np.sum(resample_indices(np.log(w), "systematic", rng) == 17)
        assert c in (35, 36)


@settings(max_examples=150, deadline=None)
@given(log_weight_vectors, st.integers(0, 2**32 - 1))
def test_systematic_counts_within_floor_ceil(lw, seed):
    w = np.exp(normalize(lw))
    n = w.size
    counts = np.bincount(sample_indices_stratified(w, n, np.random.default_rng(seed)), minlength=n)
    assert np.all(counts >= np.floor(n * w - 1e-9)) and np.all(counts <= np.ceil(n * w + 1e-9))


def test_scan_point_mass_and_range():
    rng = np.random.default_rng(5)
    assert np.all(sample_indices_scan([0, 0, 1.0, 0], 50, rng) == 2)
    idx = sample_indices_scan(np.full(7, 1 / 7), 1000, rng)
    assert idx.min() >= 0 and idx.max() <= 6


def test_scan_uniform_frequencies():
    idx = sample_indices_scan(np.full(4, 0.25), 100_000, np.random.default_rng(6))
    freq = np.bincount(idx, minlength=4) / idx.size
    assert np.all(np.abs(freq - 0.25) < 0.006)


def test_stratified_examples():
    rng = np.random.default_rng(7)
    assert sorted(sample_indices_stratified([0.5, 0.5], 2, rng)) == [0, 1]
    for _ in range(200):
        c = np.bincount(sample_indices_stratified([0.355, 0.645], 100, rng), minlength=2)
        assert c[0] in (35, 36) and c[1] in (64, 65)


def test_stratified_single_draw_frequency():
    rng = np.random.default_rng(8)
    draws = np.array([sample_indices_stratified([0.2, 0.8], 1, rng)[0] for _ in range(20_000)])
    p = np.mean(draws == 0)
    assert abs(p - 0.2) < 4 * math.sqrt(0.2 * 0.8 / draws.size)


def test_resample_indices_unknown_scheme():
    with pytest.raises(InvalidArgumentError):
        resample_indices([0.0, 0.0], "residual", np.random.default_rng(0))


def test_roughen_zero_constant_is_noop():
    ps = _set(np.full(5, 0.2), d=4)
    out = roughen(ps, RougheningParams(0.0), np.random.default_rng(0))
    assert np.array_equal(out.states, ps.states)


def test_roughen_identical_particles_noop():
    ps = ParticleSet.uniform(np.ones((10, 4)))
    out = roughen(ps, RougheningParams(0.2), np.random.default_rng(0))
    assert np.array_equal(out.states, ps.states)


def test_roughen_single_particle_noop():
    ps = ParticleSet.uniform(np.array([[1.0, 2.0]]))
    assert np.array_equal(roughen(ps, RougheningParams(), np.random.default_rng(0)).states, ps.states)


def test_roughening_noise_std():
    rng = np.random.default_rng(9)
    states = rng.uniform(-3, 3, (100, 4))
    spread = states.max(axis=0) - states.min(axis=0)
    p = RougheningParams(0.2, 4)
    expect = np.sqrt(0.2 * spread * 100 ** -0.25)
    assert np.allclose(roughening_std(states, p), expect)
    ps = ParticleSet.uniform(states)
    noise = np.stack([roughen(ps, p, rng).states - states for _ in range(1000)])
    got = noise.reshape(-1, 4).std(axis=0)
    assert np.all(np.abs(got / expect - 1) < 0.05)


def test_roughening_std_scale_option():
    states = np.array([[0.0, 0.0], [4.0, 1.0]])
    p = RougheningParams(0.5, 2, scale="std")
    assert np.allclose(roughening_std(states, p), 0.5 * np.array([4.0, 1.0]) * 2 ** -0.5)


@settings(max_examples=50, deadline=None)
@given(log_weight_vectors, st.integers(0, 2**32 - 1))
def test_roughen_leaves_weights(lw, seed):
    lw = normalize(lw)
    ps = ParticleSet(np.random.default_rng(seed).normal(size=(lw.size, 3)), lw)
    out = roughen(ps, RougheningParams(), np.random.default_rng(seed))
    assert np.array_equal(out.log_weights, ps.log_weights)


def test_roughen_mean_unbiased():
    rng = np.random.default_rng(10)
    states = rng.normal(size=(200, 2))
    ps = ParticleSet.uniform(states)
    p = RougheningParams()
    shifts = np.array([roughen(ps, p, rng).states.mean(axis=0) - states.mean(axis=0) for _ in range(400)])
    se = roughening_std(states, p) / math.sqrt(200 * 400)
    assert np.all(np.abs(shifts.mean(axis=0)) < 4 * se)


def test_weighted_resample_single_particle():
    ps = ParticleSet(np.array([[2.0]]), [0.0])
    out = weighted_resample(ps, [3.0], np.random.default_rng(0))
    assert out.states[0, 0] == 2.0 and out.weights[0] == 1.0


def test_weighted_resample_rejects_nonpositive():
    with pytest.raises(InvalidArgumentError):
        weighted_resample(_set([0.5, 0.5]), [1.0, 0.0], np.random.default_rng(0))


@pytest.mark.parametrize("peaked", [False, True])
def test_weighted_resample_preserves_mean(peaked):
    # the compensated copies form an unbiased importance estimate of the input mean;
    # copies are traced back to their source particle through the (distinct) states
    rng = np.random.default_rng(11)
    n = 50
    states = rng.normal(size=(n, 1))
    w = rng.dirichlet(np.ones(n))
    ps = ParticleSet(states, np.log(w))
    g = np.ones(n)
    if peaked:
        g = np.exp(-0.5 * ((states[:, 0] - states[0, 0]) / 0.3) ** 2) + 1e-3
    rho = g / g.sum()
    truth = w @ states[:, 0]
    lookup = {v: i for i, v in enumerate(states[:, 0])}
    means = []
    for _ in range(10_000):
        out = weighted_resample(ps, g, rng)
        idx = np.array([lookup[v] for v in out.states[:, 0]])
        ratio = w[idx] / rho[idx]
        assert np.allclose(out.weights, ratio / ratio.sum())
        means.append(np.mean(ratio * states[idx, 0]))
    means = np.array(means)
    assert abs(means.mean() - truth) < 3 * means.std() / math.sqrt(means.size)


def test_weighted_mean_cov_examples():
    m, c = weighted_mean_cov(ParticleSet(np.array([[3.0, 4.0]]), [0.0]))
    assert np.array_equal(m, [3.0, 4.0]) and np.array_equal(c, np.zeros((2, 2)))
    m, c = weighted_mean_cov(ParticleSet(np.array([[0.0], [2.0]]), np.log([0.5, 0.5])))
    assert m[0] == pytest.approx(1.0) and c[0, 0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(log_weight_vectors, st.integers(0, 2**32 - 1))
def test_weighted_cov_symmetric_psd(lw, seed):
    ps = ParticleSet(np.random.default_rng(seed).normal(size=(lw.size, 3)), normalize(lw))
    _, c = weighted_mean_cov(ps)
    assert np.allclose(c, c.T)
    assert np.linalg.eigvalsh(c).min() > -1e-9


def test_particle_set_validation():
    with pytest.raises(InvalidArgumentError):
        ParticleSet(np.zeros((3, 2)), [0.0, 0.0])
