"""Independent brute-force references used by several test modules.

Nothing here calls into the association code under test.
"""

import itertools
import math

import numpy as np


def all_assignments(K, M, validated=None):
    """Every target-to-measurement tuple (0 = undetected) with distinct detections."""
    out = []
    for rt in itertools.product(range(M + 1), repeat=K):
        used = [j for j in rt if j]
        if len(used) != len(set(used)):
            continue
        if validated is not None and any(j and j not in validated[k] for k, j in enumerate(rt)):
            continue
        out.append(rt)
    return out


def closed_form_prior(rt, M, p_detect, rate):
    """Non-factorized association prior.

    Detection pattern probability, Poisson clutter count, and a uniform choice
    among the ``M! / (M - M_T)!`` ways of placing the detections.
    """
    mt = sum(1 for j in rt if j)
    mc = M - mt
    p = p_detect ** mt * (1 - p_detect) ** (len(rt) - mt)
    p *= math.exp(-rate) * rate ** mc / math.factorial(mc) if rate > 0 else float(mc == 0)
    return p * math.factorial(M - mt) / math.factorial(M)


def brute_force_beta(pred, p_detect, rate, volume, validated=None):
    """Marginal association probabilities by full enumeration in the linear domain.

    ``pred[j, k]`` is the predictive likelihood of measurement ``j+1`` under
    target ``k+1``. Returns the ``(M+1, K)`` matrix.
    """
    M, K = pred.shape
    hyps = all_assignments(K, M, validated)
    scores = []
    for rt in hyps:
        mc = M - sum(1 for j in rt if j)
        s = closed_form_prior(rt, M, p_detect, rate) * volume ** (-mc)
        for k, j in enumerate(rt):
            if j:
                s *= pred[j - 1, k]
        scores.append(s)
    scores = np.array(scores)
    post = scores / scores.sum()
    beta = np.zeros((M + 1, K))
    for rt, p in zip(hyps, post):
        for k, j in enumerate(rt):
            beta[j, k] += p
    return beta


def direct_predictive(meas, particles, alpha, sensor_xy, sigma_r, sigma_t):
    """``sum_n alpha_n N(y; h(x_n), diag)`` written out with plain loops."""
    sx, sy = sensor_xy
    total = 0.0
    for a, x in zip(alpha, particles):
        dx, dy = x[0] - sx, x[2] - sy
        r = math.hypot(dx, dy)
        th = math.atan2(dy, dx)
        e_t = (meas[1] - th + math.pi) % (2 * math.pi) - math.pi
        e_r = meas[0] - r
        dens = math.exp(-0.5 * ((e_r / sigma_r) ** 2 + (e_t / sigma_t) ** 2)) / (2 * math.pi * sigma_r * sigma_t)
        total += a * dens
    return total
