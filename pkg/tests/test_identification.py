import warnings

import numpy as np
import pytest

from conftest import random_cmz
from helpers import LOOSE_CENTER, THETA, source_data
from zonosafe import setops
from zonosafe.closed_loop import PriorKnowledge
from zonosafe.identification import (
    build_info_set,
    cmz_hyperplane_intersects,
    cmz_intersect_inequality,
    interval_hull_prior,
    recover_slack_latents,
    refine_online,
    refine_prior,
    slack_width,
    unified_pipeline,
)
from zonosafe.sets import ConstrainedMatrixZonotope, MatrixZonotope


def test_true_model_survives_refinement(rng):
    for _ in range(3):
        src, w = source_data(rng)
        info = build_info_set(src, w)
        assert info.contains(THETA)
        refined = refine_prior(PriorKnowledge.box(LOOSE_CENTER, 0.5), info)
        assert refined.contains(THETA)


def test_refinement_shrinks_hull(rng):
    src, w = source_data(rng, T=12)
    base = PriorKnowledge.box(LOOSE_CENTER, 0.5)
    small = refine_prior(base, build_info_set(src.head(6), w))
    big = refine_prior(base, build_info_set(src, w))
    h0 = setops.cmz_interval_hull(base.model_set)
    h1 = setops.cmz_interval_hull(small.model_set)
    h2 = setops.cmz_interval_hull(big.model_set)
    assert h1.is_subset_of(h0, 1e-9) and h2.is_subset_of(h1, 1e-9)
    assert np.all(h2.width < h0.width)


def test_online_updates_keep_true_model(rng):
    src, w = source_data(rng, T=6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prior = refine_online(PriorKnowledge.box(LOOSE_CENTER, 0.5), src, w)
    assert prior.contains(THETA)


def test_single_and_sequential_paths_agree(rng):
    src, w = source_data(rng, T=3)
    info = build_info_set(src, w)
    base = PriorKnowledge.box(LOOSE_CENTER, 0.5)
    joint = refine_prior(base, info)
    ms = base.model_set
    seq = cmz_intersect_inequality(ms, info.D, info.F_upper)
    seq = cmz_intersect_inequality(seq, -info.D, info.F_lower_rhs)
    h1 = setops.cmz_interval_hull(joint.model_set)
    h2 = setops.cmz_interval_hull(seq)
    np.testing.assert_allclose(h1.lower, h2.lower, atol=1e-8)
    np.testing.assert_allclose(h1.upper, h2.upper, atol=1e-8)
    for th in setops.cmz_sample(ms, rng, 30):
        a = setops.membership_residual(th, joint.model_set)[0] <= 1e-8
        b = setops.membership_residual(th, seq)[0] <= 1e-8
        assert a == b


def test_small_source_warns_and_uses_sequential_path(rng):
    src, w = source_data(rng, T=4)
    base = refine_prior(PriorKnowledge.box(LOOSE_CENTER, 0.5), build_info_set(src, w))
    assert base.m_theta >= 2
    with pytest.warns(UserWarning, match="sequentially"):
        out = refine_prior(base, build_info_set(src.columns([0]), w))
    assert out.contains(THETA)


def test_shared_slack_shapes(rng):
    src, w = source_data(rng, T=4)
    info = build_info_set(src, w)
    base = PriorKnowledge.box(LOOSE_CENTER, 0.5)
    out = refine_prior(base, info, slack="shared")
    s, n = base.s_theta, 2
    assert out.model_set.con_A.shape == (s + 1, n, 2 * 4)
    assert out.model_set.con_B.shape == (n, 2 * 4)


def test_shared_slack_is_inner_approximation(rng):
    m = random_cmz(rng, nc=0)
    X = rng.standard_normal((3, 2))
    F = m.center @ X + 0.5
    exact = cmz_intersect_inequality(m, X, F, "entrywise")
    inner = cmz_intersect_inequality(m, X, F, "shared")
    for th in setops.cmz_sample(inner, rng, 10):
        assert setops.cmz_membership(th, exact, 1e-8)


def test_recovered_shared_slack_is_in_unit_interval(rng):
    m = random_cmz(rng, nc=0)
    X = rng.standard_normal((3, 2))
    F = m.center @ X + 0.5
    out = cmz_intersect_inequality(m, X, F, "shared")
    _, Z = setops.cmz_sample(out, rng, 30, return_latent=True)
    for z in Z:
        zs = recover_slack_latents(m, X, F, z[:m.n_generators], "shared")
        assert -1 - 1e-9 <= zs[0] <= 1 + 1e-9
        assert zs[0] == pytest.approx(z[-1], abs=1e-7)


def test_zero_slack_gives_equality_slice():
    # one generator: theta = z, X = 1, F = -1 gives L_M = -1 + 1 = 0
    m = MatrixZonotope(np.zeros((1, 1)), np.ones((1, 1, 1)))
    out = cmz_intersect_inequality(m, np.ones((1, 1)), -np.ones((1, 1)))
    assert slack_width(m, np.ones((1, 1)), -np.ones((1, 1)))[0, 0] == pytest.approx(0.0)
    assert out.n_generators == 1
    assert setops.cmz_membership(np.array([[-1.0]]), out)
    assert not setops.cmz_membership(np.array([[-0.5]]), out)


def test_negative_slack_is_empty():
    m = MatrixZonotope(np.zeros((1, 1)), np.ones((1, 1, 1)))
    out = cmz_intersect_inequality(m, np.ones((1, 1)), -2 * np.ones((1, 1)))
    assert setops.is_empty(out)


def test_hyperplane_test_necessary_and_exact():
    m = ConstrainedMatrixZonotope(np.zeros((1, 2)), np.array([[[1.0, 0.0]], [[0.0, 1.0]]]),
                                  np.array([[[1.0]], [[-1.0]]]), np.zeros((1, 1)))
    X = np.eye(2)
    F = np.array([[1.0, -1.0]])
    # entry-wise bounds pass but the constraint z1 = z2 rules the point out
    assert cmz_hyperplane_intersects(m, X, F)
    assert not cmz_hyperplane_intersects(m, X, F, exact=True)
    assert cmz_hyperplane_intersects(m, X, np.array([[0.5, 0.5]]), exact=True)


def test_unified_pipeline_contains_truth(rng):
    from helpers import collect, system
    from zonosafe.closed_loop import instantiate_Mcl, VK_from_gain
    from zonosafe.data import t_concat_disturbance
    src, w_s = source_data(rng)
    sys_ = system()
    _, tgt = collect(sys_, 10, rng)
    fam = unified_pipeline(PriorKnowledge.box(LOOSE_CENTER, 0.5), src, tgt,
                           t_concat_disturbance(w_s, src.T), t_concat_disturbance(sys_.disturbance, 10))
    g = VK_from_gain(tgt, [[0.28, -1.83]])
    assert setops.cmz_membership(sys_.A + sys_.B @ g.K, instantiate_Mcl(fam, g))


def test_interval_hull_prior_is_box(rng):
    src, w = source_data(rng)
    refined = refine_prior(PriorKnowledge.box(LOOSE_CENTER, 0.5), build_info_set(src, w))
    box = interval_hull_prior(refined)
    assert box.m_theta == 0 and box.contains(THETA)
