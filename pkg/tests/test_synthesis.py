import dataclasses

import numpy as np
import pytest

from conftest import G_H, H_S
from helpers import benchmark_family
from zonosafe import lp, setops
from zonosafe.closed_loop import instantiate_Mcl
from zonosafe.sets import Polytope
from zonosafe.synthesis import (
    SynthesisProblem,
    build_polytope_lp,
    certificate_from_dict,
    certificate_to_dict,
    closed_loop_member,
    compute_l,
    compute_y,
    next_state_set,
    sample_polytope,
    synth_cz,
    synth_polytope,
    verify_contractive,
    worst_case_polytope_margin,
)

SAFE = Polytope(H_S, np.ones(4))


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(0)
    return benchmark_family(rng, T=10)


def test_disturbance_term_frozen():
    np.testing.assert_allclose(compute_y(H_S, G_H), [0.054, 0.054, 0.0055, 0.0055])
    np.testing.assert_allclose(compute_y(H_S, G_H, "literal"), [0.054, 0.054, 0.0055, 0.0055])
    with pytest.raises(ValueError):
        compute_y(H_S, G_H, "other")


def test_unconstrained_l_closed_form(setup):
    fam = setup[-1]
    np.testing.assert_allclose(compute_l(fam, H_S, 6.0, constrained=False, norm="l1"),
                               [3.24, 3.24, 0.33, 0.33])
    np.testing.assert_allclose(compute_l(fam, H_S, 6.0, constrained=False, norm="linf"),
                               [0.324, 0.324, 0.033, 0.033])


def test_constraint_never_increases_l(setup):
    fam = setup[-1]
    for norm in ("l1", "linf"):
        con = compute_l(fam, H_S, 6.0, True, norm)
        unc = compute_l(fam, H_S, 6.0, False, norm)
        assert np.all(con <= unc + 1e-12)


def test_polytope_certificate_is_sound(setup):
    sys_, _, batch, _, _, fam = setup
    cert = synth_polytope(SynthesisProblem(fam, SAFE, sys_.disturbance, 0.98, batch))
    assert cert
    d = cert.diagnostics
    assert d["dual_residual"] < 1e-6 and d["gain_residual"] < 1e-6
    assert d["norm_VK"] <= cert.rho + 1e-7
    assert np.all(cert.P >= -1e-9)
    assert closed_loop_member(fam, cert, sys_.A + sys_.B @ cert.K)
    rep = verify_contractive(cert, sys_, SAFE, 0.98, 4000, np.random.default_rng(1))
    assert rep.passed and rep.violations == 0


def test_rho_optimality_bracket(setup):
    sys_, _, batch, _, _, fam = setup
    prob = SynthesisProblem(fam, SAFE, sys_.disturbance, 0.98, batch)
    cert = synth_polytope(prob)
    d = cert.diagnostics
    built = build_polytope_lp(prob, d["l"], d["y"])
    idx = built.layout["rho"]

    def capped(bound):
        upper = built.program.upper.copy()
        upper[idx] = bound
        return lp.solve(dataclasses.replace(built.program, upper=upper))

    assert capped(cert.rho + 1e-6).optimal
    assert capped(cert.rho - 1e-3).status is lp.LPStatus.INFEASIBLE


def test_tight_contraction_is_infeasible(setup):
    sys_, _, batch, _, _, fam = setup
    out = synth_polytope(SynthesisProblem(fam, SAFE, sys_.disturbance, 0.3, batch))
    assert not out
    assert "l" in out.diagnostics


def test_zonotope_synthesis(setup):
    sys_, _, batch, _, _, fam = setup
    safe = setops.symmetric_polytope_to_zonotope(SAFE).to_constrained()
    cert = synth_cz(SynthesisProblem(fam, safe, sys_.disturbance, 0.98, batch))
    assert cert
    assert max(cert.diagnostics["residuals"].values()) < 1e-6
    A_K = sys_.A + sys_.B @ cert.K
    # the true next-state set is inside the certified one-step set
    inner = next_state_set(fam, cert.V_K, safe, sys_.disturbance)
    rng = np.random.default_rng(2)
    for x in setops.cz_sample(safe, rng, 5):
        w = G_H @ rng.uniform(-1, 1, 2)
        assert setops.cz_membership(A_K @ x + w, inner, 1e-7)
    # the gain is contractive for the true system on the equivalent polytope
    assert worst_case_polytope_margin(A_K, SAFE, sys_.disturbance, 0.98) <= 1e-9
    assert setops.cmz_membership(A_K, instantiate_Mcl(fam, cert.V_K))


def test_norm_tiebreak_keeps_feasibility(setup):
    sys_, _, batch, _, _, fam = setup
    safe = setops.symmetric_polytope_to_zonotope(SAFE).to_constrained()
    cert = synth_cz(SynthesisProblem(fam, safe, sys_.disturbance, 0.98, batch), minimize_norm=True)
    assert cert


def test_certificate_roundtrip(setup):
    sys_, _, batch, _, _, fam = setup
    cert = synth_polytope(SynthesisProblem(fam, SAFE, sys_.disturbance, 0.98, batch))
    back = certificate_from_dict(certificate_to_dict(cert))
    np.testing.assert_array_equal(back.K, cert.K)
    np.testing.assert_array_equal(back.diagnostics["l"], cert.diagnostics["l"])
    assert back.rho == cert.rho


def test_boundary_samples_lie_on_boundary():
    x = sample_polytope(SAFE, np.random.default_rng(0), 500, boundary_fraction=1.0)
    slack = (x @ SAFE.H.T - SAFE.h).max(axis=1)
    np.testing.assert_allclose(slack, 0.0, atol=1e-12)


def test_verifier_catches_bad_gain(setup):
    sys_ = setup[0]
    rep = verify_contractive(np.array([[0.0, 0.0]]), sys_, SAFE, 0.98, 2000, np.random.default_rng(0))
    assert not rep.passed and rep.violations > 0
