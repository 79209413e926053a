import numpy as np
import pytest

from helpers import THETA, benchmark_family, collect, learned_prior, system
from zonosafe import setops
from zonosafe.closed_loop import (
    PriorKnowledge,
    VK_from_gain,
    build_family,
    build_Mdp,
    build_noise_refined_W,
    build_prior_conformant_W,
    disturbance_from_latent,
    gain_from_VK,
    instantiate_Mcl,
)
from zonosafe.data import t_concat_disturbance
from zonosafe.exceptions import InconsistentGainError, ShapeError


def random_valid_VK(batch, rng):
    """``pinv(X0) + N R`` with ``N`` spanning the null space of ``X0``."""
    _, _, Vt = np.linalg.svd(batch.X0)
    N = Vt[batch.n:].T
    return np.linalg.pinv(batch.X0) + N @ rng.standard_normal((N.shape[1], batch.n))


def test_true_closed_loop_is_member(rng):
    sys_, _, batch, _, _, fam = benchmark_family(rng)
    for _ in range(5):
        g = gain_from_VK(batch, random_valid_VK(batch, rng))
        res = setops.membership_residual(sys_.A + sys_.B @ g.K, instantiate_Mcl(fam, g))[0]
        assert res <= 1e-6


def test_realized_disturbance_is_in_every_refinement(rng):
    sys_, tr, batch, dc, prior, _ = benchmark_family(rng)
    W0 = tr.disturbances
    mW = build_noise_refined_W(dc, batch)
    mD = build_prior_conformant_W(prior, batch)
    for s in (mW, mD, build_Mdp(mW, mD)):
        assert setops.cmz_membership(W0, s, 1e-8)


def test_family_shapes_for_box_prior(rng):
    # box prior: s_theta = 6 generators, no constraints
    _, _, _, _, prior, fam = benchmark_family(rng, T=10)
    assert prior.s_theta == 6 and prior.m_theta == 0
    assert fam.s_c == 6 + 10 * 2
    assert fam.A_C.shape == (26, 2 + 0 + 2, 10)
    assert fam.B_C.shape == (4, 10)
    assert fam.padding_case == "m_theta<=T"


def test_wide_prior_constraints_pad_to_prior_width(rng):
    sys_, _, batch, dc, _, _ = benchmark_family(rng, T=5, refinement="noise")
    prior = learned_prior(rng, T_s=10, hull=False)
    assert prior.m_theta > 5
    fam = build_family(batch, dc, prior, "full")
    assert fam.padding_case == "m_theta>T"
    assert fam.A_C.shape[2] == prior.m_theta


def test_nesting_of_refinements(rng):
    sys_, _, batch, dc, prior, full = benchmark_family(rng)
    V_K = VK_from_gain(batch, [[0.28, -1.83]]).V_K
    sets = {r: instantiate_Mcl(build_family(batch, dc, prior, r), V_K) for r in ("full", "noise", "none")}
    for M in setops.cmz_sample(sets["full"], rng, 20):
        assert setops.cmz_membership(M, sets["noise"], 1e-8)
        assert setops.cmz_membership(M, sets["none"], 1e-8)
    outside = [not setops.cmz_membership(M, sets["full"], 1e-8)
               for M in setops.cmz_sample(sets["none"], rng, 30)]
    assert any(outside)


def test_disturbance_from_latent(rng):
    _, _, batch, dc, _, fam = benchmark_family(rng)
    beta = rng.uniform(-1, 1, fam.s_c)
    W = disturbance_from_latent(fam, dc, beta)
    assert W.shape == (2, batch.T)
    assert setops.cmz_membership(W, dc.mz.to_constrained(), 1e-9)


def test_gain_parametrization(rng):
    _, batch = collect(system(), 8, rng)
    g = VK_from_gain(batch, [[0.1, -0.5]])
    np.testing.assert_allclose(batch.X0 @ g.V_K, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(batch.U0 @ g.V_K, [[0.1, -0.5]], atol=1e-10)
    np.testing.assert_allclose(gain_from_VK(batch, g.V_K).K, g.K, atol=1e-10)
    with pytest.raises(InconsistentGainError):
        gain_from_VK(batch, np.zeros((8, 2)))
    with pytest.raises(ShapeError):
        gain_from_VK(batch, np.zeros((7, 2)))


def test_prior_helpers():
    p = PriorKnowledge.box(THETA, 0.1)
    assert p.contains(THETA) and p.contains(THETA + 0.09)
    assert not p.contains(THETA + 0.2)
    s = PriorKnowledge.singleton(THETA)
    assert s.s_theta == 0 and s.contains(THETA)
    with pytest.raises(ShapeError):
        PriorKnowledge.box(np.zeros((2, 2)), 1.0)


def test_full_refinement_needs_prior(rng):
    _, batch = collect(system(), 6, rng)
    with pytest.raises(ValueError):
        build_family(batch, t_concat_disturbance(system().disturbance, 6), None, "full")
