"""Benchmark data generation shared by tests."""

import numpy as np

from conftest import A_TRUE, B_TRUE, C_P, G_H, G_P, K0
from zonosafe.closed_loop import PriorKnowledge, build_family
from zonosafe.data import LinearSystem, build_batch, simulate, t_concat_disturbance
from zonosafe.identification import build_info_set, interval_hull_prior, refine_prior
from zonosafe.sets import Zonotope

THETA = np.hstack([A_TRUE, B_TRUE])
LOOSE_CENTER = np.array([[0.7, 0.6, 0.1], [-0.3, 1.1, 0.9]])


def system(alpha=1.0):
    return LinearSystem(A_TRUE, B_TRUE, Zonotope(np.zeros(2), alpha * G_H))


def collect(sys_, T, rng, excitation=4.0, radius=4.0):
    tr = simulate(sys_, rng.uniform(-radius, radius, 2), T, rng, gain=K0, excitation=excitation)
    return tr, build_batch(tr)


def source_data(rng, T=10):
    src_sys = LinearSystem(A_TRUE, B_TRUE, Zonotope(C_P, G_P))
    return collect(src_sys, T, rng)[1], src_sys.disturbance


def learned_prior(rng, T_s=10, hull=True):
    src, w = source_data(rng, T_s)
    refined = refine_prior(PriorKnowledge.box(LOOSE_CENTER, 0.5), build_info_set(src, w))
    return interval_hull_prior(refined) if hull else refined


def benchmark_family(rng, T=10, alpha=1.0, refinement="full", prior=None):
    sys_ = system(alpha)
    tr, batch = collect(sys_, T, rng)
    prior = learned_prior(rng) if prior is None and refinement == "full" else prior
    dc = t_concat_disturbance(sys_.disturbance, T)
    return sys_, tr, batch, dc, prior, build_family(batch, dc, prior, refinement)
