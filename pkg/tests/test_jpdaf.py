import math

import numpy as np
import pytest

from oracles import brute_force_beta, direct_predictive
from pftrack.association import AssociationModel
from pftrack.errors import InvalidArgumentError
from pftrack.filters import FilterConfig, GaussianBelief, bootstrap_step, sample_prior
from pftrack.jpdaf import ObservationFrame, jpda_loglik, mcjpdaf_step, mcmmjpdaf_step
from pftrack.mmpf import AugmentedParticleSet
from pftrack.models import (
    LinearGaussianDynamics,
    MeasurementNoise,
    RangeBearingModel,
    SensorPose,
    TransitionModel,
    range_bearing,
    white_noise_q,
)
from pftrack.particles import ParticleSet

SENSORS = [RangeBearingModel(SensorPose(-45, -45), MeasurementNoise(5.0, 0.05)),
           RangeBearingModel(SensorPose(45, 45), MeasurementNoise(5.0, 0.05))]
DYN = LinearGaussianDynamics(TransitionModel("cv", 1.0).matrix(), white_noise_q(0.05, 0.05, 1.0))


def _clouds(rng, n=100):
    inits = [[-50, 1, 50, -1.5], [-50, 1, 0, 0], [-50, 1, -50, 0.75]]
    return [sample_prior(GaussianBelief(m, np.diag([5, 0.1, 5, 0.1])), n, rng) for m in inits]


def test_frame_reshapes():
    f = ObservationFrame(0, [1.0, 2.0, 3.0, 4.0])
    assert f.measurements.shape == (2, 2) and f.m == 2
    assert ObservationFrame(1, np.zeros((0, 2))).m == 0


def test_single_target_collapses_to_bootstrap():
    sensor = [SENSORS[0]]
    model = AssociationModel(1.0, 0.0, 2 * math.pi * 100)
    cfg = FilterConfig(100, n_thr=100)
    ps = sample_prior(GaussianBelief([-50, 1, 0, 0], np.diag([5, 0.1, 5, 0.1])), 100, np.random.default_rng(0))
    a, b = [ps], ps
    ra, rb = np.random.default_rng(1), np.random.default_rng(1)
    for t in range(1, 11):
        z = range_bearing([-50 + t, 1, 0, 0], sensor[0].sensor)
        res = mcjpdaf_step(a, [np.array([z])], sensor, model, [DYN], cfg, ra, chi2=math.inf)
        a = res.particles
        b, est = bootstrap_step(b, z, DYN, sensor[0], cfg, rb)
        assert np.allclose(res.estimates[0].mean, est.mean, atol=1e-10)
        assert np.allclose(a[0].states, b.states, atol=1e-10)
        assert np.allclose(res.info.betas[0][:, 0], [0.0, 1.0])


def test_empty_frames_are_pure_prediction():
    rng = np.random.default_rng(2)
    sets = [ParticleSet(c.states, np.log(rng.dirichlet(np.ones(100)))) for c in _clouds(rng)]
    model = AssociationModel.for_range(0.9, 5.0, 100.0)
    empty = [np.zeros((0, 2)), np.zeros((0, 2))]
    res = mcjpdaf_step(sets, empty, SENSORS, model, [DYN] * 3, FilterConfig(100, n_thr=1), np.random.default_rng(3))
    first = DYN.sample(sets[0].states, np.random.default_rng(3))
    for k, s in enumerate(sets):
        assert np.allclose(res.particles[k].log_weights, s.log_weights, atol=1e-12)
    w = np.exp(sets[0].log_weights)
    assert np.allclose(res.estimates[0].mean, w @ first, atol=1e-9)
    assert all(np.allclose(b[0], 1.0) for b in res.info.betas)


def test_association_stage_matches_brute_force():
    rng = np.random.default_rng(4)
    sets = _clouds(rng, 60)
    prev = [np.log(rng.dirichlet(np.ones(60))) for _ in sets]
    proposed = [DYN.sample(s.states, rng) for s in sets]
    frames = []
    for s in SENSORS:
        truth = [range_bearing(p.mean(axis=0), s.sensor) for p in proposed]
        frames.append(np.array(truth[:2]) + rng.normal(0, [3, 0.03], (2, 2)))
    model = AssociationModel.for_range(0.9, 2.0, 100.0)
    _, info = jpda_loglik(prev, proposed, frames, SENSORS, model, math.inf)
    for i, s in enumerate(SENSORS):
        pred = np.array([[direct_predictive(y, proposed[k], np.exp(prev[k]), (s.sensor.x0, s.sensor.y0), 5.0, 0.05)
                          for k in range(3)] for y in frames[i]])
        assert np.allclose(info.betas[i], brute_force_beta(pred, 0.9, 2.0, model.volume), atol=1e-10)


def test_far_measurement_is_gated_out():
    rng = np.random.default_rng(5)
    sets = _clouds(rng, 80)
    proposed = [DYN.sample(s.states, rng) for s in sets]
    prev = [s.log_weights for s in sets]
    far = np.array([[99.0, -2.5]])
    near = np.array([range_bearing(proposed[1].mean(axis=0), SENSORS[0].sensor)])
    model = AssociationModel.for_range(0.9, 1.0, 100.0)
    _, info = jpda_loglik(prev, proposed, [np.vstack([near, far])], SENSORS[:1], model)
    assert 2 not in info.gated[0][1]
    assert info.betas[0][2].sum() == 0.0


def test_unsatisfiable_sure_detection_falls_back_to_clutter():
    rng = np.random.default_rng(6)
    sets = _clouds(rng, 50)
    model = AssociationModel.for_range(1.0, 0.5, 100.0)
    res = mcjpdaf_step(sets, [np.zeros((0, 2))], SENSORS[:1], model, [DYN] * 3, FilterConfig(50), rng)
    assert res.info.warnings == 1
    assert np.allclose(res.info.betas[0][0], 1.0)


def test_mismatched_frames_rejected():
    rng = np.random.default_rng(7)
    with pytest.raises(InvalidArgumentError):
        mcjpdaf_step(_clouds(rng, 10), [np.zeros((0, 2))], SENSORS, AssociationModel(0.9, 1, 10), [DYN] * 3,
                     FilterConfig(10), rng)


def test_single_regime_matches_plain_jpdaf():
    rng = np.random.default_rng(8)
    sets = _clouds(rng)
    aug = [AugmentedParticleSet(s.states, np.zeros(s.n, int), s.log_weights) for s in sets]
    model = AssociationModel.for_range(0.9, 5.0, 100.0)
    cfg = FilterConfig(100)
    ra, rb = np.random.default_rng(9), np.random.default_rng(9)
    meas_rng = np.random.default_rng(10)
    for t in range(1, 8):
        frames = []
        for s in SENSORS:
            ys = [range_bearing(x, s.sensor) for x in ([-50 + t, 0, 50 - 1.5 * t, 0], [-50 + t, 0, 0, 0])]
            frames.append(np.array(ys) + meas_rng.normal(0, [5, 0.05], (2, 2)))
        a = mcjpdaf_step(sets, frames, SENSORS, model, [DYN] * 3, cfg, ra)
        b = mcmmjpdaf_step(aug, frames, [[1.0]], [DYN], SENSORS, model, cfg, rb)
        sets, aug = a.particles, b.particles
        for k in range(3):
            assert np.array_equal(sets[k].states, aug[k].states)
            assert np.array_equal(a.estimates[k].mean, b.estimates[k].mean)
        assert all(np.allclose(p, [1.0]) for p in b.mode_probs)


def test_multiple_model_per_target_lists():
    rng = np.random.default_rng(11)
    sets = _clouds(rng, 40)[:2]
    aug = [AugmentedParticleSet(s.states, np.zeros(s.n, int), s.log_weights) for s in sets]
    ct = LinearGaussianDynamics(TransitionModel("ct", 1.0, 0.1641).matrix(), DYN.Q)
    pi = [[0.8, 0.2], [0.2, 0.8]]
    res = mcmmjpdaf_step(aug, [np.zeros((0, 2))] * 2, pi, [[DYN, ct], [DYN, ct]], SENSORS,
                         AssociationModel.for_range(0.9, 0.5, 100.0), FilterConfig(40), rng)
    assert len(res.mode_probs) == 2 and all(p.shape == (2,) for p in res.mode_probs)
    with pytest.raises(InvalidArgumentError):
        mcmmjpdaf_step(aug, [np.zeros((0, 2))] * 2, pi, [DYN], SENSORS,
                       AssociationModel.for_range(0.9, 0.5, 100.0), FilterConfig(40), rng)
