"""Set of closed-loop matrices ``A + B K`` consistent with data and prior knowledge.

With ``K = U0 V_K`` and ``X0 V_K = I`` every consistent system satisfies
``A + B K = (X1 - W0) V_K`` for a disturbance sequence ``W0`` that is

* a member of the T-concatenated disturbance set,
* explainable by *some* linear model (``W0`` annihilates the right null
  space of ``D0 = [X0; U0]`` up to the center), and
* explainable by a model inside the prior set.

The last two restrictions are equality constraints on the latent variables
of the disturbance set; they do not depend on ``V_K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import setops
from .data import DataBatch, DisturbanceConcat, right_annihilator
from .exceptions import InconsistentGainError, ShapeError
from .sets import ConstrainedMatrixZonotope, MatrixZonotope

GAIN_TOL = 1e-6
REFINEMENTS = ("full", "noise", "none")


@dataclass(frozen=True)
class PriorKnowledge:
    """A constrained matrix zonotope known to contain ``[A B]``."""

    model_set: ConstrainedMatrixZonotope

    def __post_init__(self):
        ms = self.model_set
        if isinstance(ms, MatrixZonotope):
            ms = ms.to_constrained()
        n, p = ms.shape
        if p <= n:
            raise ShapeError(f"prior center must be n x (n+m) with m >= 1, got {ms.shape}")
        object.__setattr__(self, "model_set", ms)

    @property
    def n(self):
        return self.model_set.shape[0]

    @property
    def m(self):
        return self.model_set.shape[1] - self.n

    @property
    def s_theta(self):
        return self.model_set.n_generators

    @property
    def m_theta(self):
        return self.model_set.constraint_shape[1]

    @property
    def n_theta(self):
        return self.model_set.constraint_shape[0]

    @classmethod
    def box(cls, center, radius):
        """Independent interval on every entry: one generator per nonzero radius."""
        center = np.asarray(center, dtype=float)
        radius = np.broadcast_to(np.asarray(radius, dtype=float), center.shape)
        idx = np.argwhere(radius > 0)
        gens = np.zeros((len(idx),) + center.shape)
        for k, (r, c) in enumerate(idx):
            gens[k, r, c] = radius[r, c]
        return cls(MatrixZonotope(center, gens).to_constrained())

    @classmethod
    def singleton(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(MatrixZonotope(theta, np.zeros((0,) + theta.shape)).to_constrained())

    def contains(self, theta, tol=setops.MEMBERSHIP_TOL):
        return setops.cmz_membership(theta, self.model_set, tol)


@dataclass(frozen=True)
class GainParam:
    V_K: np.ndarray
    K: np.ndarray


def gain_from_VK(batch: DataBatch, V_K, tol=GAIN_TOL) -> GainParam:
    """``K = U0 V_K`` after checking ``X0 V_K = I``."""
    V_K = np.asarray(V_K, dtype=float)
    if V_K.shape != (batch.T, batch.n):
        raise ShapeError(f"V_K must be {batch.T}x{batch.n}, got {V_K.shape}")
    resid = np.max(np.abs(batch.X0 @ V_K - np.eye(batch.n)))
    if resid > tol:
        raise InconsistentGainError(f"X0 V_K deviates from identity by {resid:.3e}")
    return GainParam(V_K, batch.U0 @ V_K)


def VK_from_gain(batch: DataBatch, K, tol=1e-8) -> GainParam:
    """Minimum-norm ``V_K`` with ``[X0; U0] V_K = [I; K]``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (batch.m, batch.n):
        raise ShapeError(f"K must be {batch.m}x{batch.n}, got {K.shape}")
    rhs = np.vstack([np.eye(batch.n), K])
    V_K = np.linalg.lstsq(batch.D0, rhs, rcond=None)[0]
    resid = np.max(np.abs(batch.D0 @ V_K - rhs))
    if resid > tol:
        raise InconsistentGainError(f"no V_K reproduces K (residual {resid:.3e})")
    return GainParam(V_K, K)


def build_noise_refined_W(dc: DisturbanceConcat, batch: DataBatch) -> ConstrainedMatrixZonotope:
    """Disturbance sequences for which ``theta D0 = X1 - W0`` has a solution."""
    if dc.T != batch.T:
        raise ShapeError(f"disturbance horizon {dc.T} != batch length {batch.T}")
    Dp = right_annihilator(batch.D0)
    Gw, Cw = dc.mz.generators, dc.mz.center
    return ConstrainedMatrixZonotope(Cw, Gw, Gw @ Dp, (batch.X1 - Cw) @ Dp)


def build_prior_conformant_W(prior: PriorKnowledge, batch: DataBatch) -> ConstrainedMatrixZonotope:
    """``X1 - theta D0`` for ``theta`` in the prior."""
    if prior.n != batch.n or prior.m != batch.m:
        raise ShapeError("prior and batch dimensions disagree")
    t = setops.cmz_transform(prior.model_set, batch.D0)
    return ConstrainedMatrixZonotope(batch.X1 - t.center, -t.generators, t.con_A, t.con_B)


def build_Mdp(mW: ConstrainedMatrixZonotope, mD: ConstrainedMatrixZonotope) -> ConstrainedMatrixZonotope:
    """Disturbances explainable by data and by the prior.

    The constraint blocks are padded to ``max(T, m_theta)`` columns: when the
    prior constraint width ``m_theta`` does not exceed ``T`` only the
    annihilator blocks (by ``n+m``) and the prior blocks are padded; otherwise
    every block, generator and center is padded to ``m_theta``.
    """
    return setops.cmz_intersect(mW, mD)


@dataclass(frozen=True)
class ClosedLoopFamily:
    """Everything of the closed-loop set except the gain parameter ``V_K``.

    Generators are ordered ``T*s_w`` disturbance generators followed by
    ``s_theta`` prior generators (which map to zero closed-loop matrices).
    """

    X1_minus_Cw: np.ndarray
    Gw: np.ndarray
    s_theta: int
    A_C: np.ndarray
    B_C: np.ndarray
    n: int
    m: int
    T: int
    s_w: int
    refinement: str = "full"
    padding_case: str = ""

    @property
    def s_c(self):
        return self.s_theta + self.T * self.s_w

    @property
    def Gw_neg(self):
        return -self.Gw

    def constraint_equations(self, drop_trivial=True):
        """``(E, f)`` with ``E beta = f`` equivalent to ``sum_i A_C_i beta_i = B_C``."""
        shell = ConstrainedMatrixZonotope(np.zeros((self.n, self.n)),
                                          np.zeros((self.s_c, self.n, self.n)),
                                          self.A_C, self.B_C)
        return shell.latent_equations(drop_trivial=drop_trivial)

    def generator_bounds(self):
        """Range of each latent variable over the family's constraint set."""
        shell = ConstrainedMatrixZonotope(np.zeros((1, 1)), np.zeros((self.s_c, 1, 1)),
                                          self.A_C, self.B_C)
        return setops.all_generator_bounds(shell)


def build_family(batch: DataBatch, dc: DisturbanceConcat, prior: PriorKnowledge | None = None,
                 refinement: str = "full") -> ClosedLoopFamily:
    """Assemble the closed-loop family.

    ``refinement="full"`` intersects the noise-refined and prior-conformant
    disturbance sets (requires ``prior``); ``"noise"`` keeps only the
    annihilator constraints; ``"none"`` leaves the concatenated disturbance
    set unconstrained.
    """
    if refinement not in REFINEMENTS:
        raise ValueError(f"refinement must be one of {REFINEMENTS}")
    if dc.T != batch.T:
        raise ShapeError(f"disturbance horizon {dc.T} != batch length {batch.T}")
    n, m, T = batch.n, batch.m, batch.T
    Gw, Cw = dc.mz.generators, dc.mz.center
    case = ""
    if refinement == "none":
        s_theta = 0
        A_C = np.zeros((Gw.shape[0], 0, 0))
        B_C = np.zeros((0, 0))
    elif refinement == "noise":
        s_theta = 0
        mW = build_noise_refined_W(dc, batch)
        A_C, B_C = mW.con_A, mW.con_B
    else:
        if prior is None:
            raise ValueError("full refinement needs prior knowledge")
        mW = build_noise_refined_W(dc, batch)
        mD = build_prior_conformant_W(prior, batch)
        mdp = build_Mdp(mW, mD)
        s_theta = prior.s_theta
        A_C, B_C = mdp.con_A, mdp.con_B
        case = "m_theta>T" if prior.m_theta > T else "m_theta<=T"
    return ClosedLoopFamily(np.asarray(batch.X1 - Cw), np.asarray(Gw), s_theta,
                            np.asarray(A_C), np.asarray(B_C), n, m, T, dc.s_w,
                            refinement, case)


def instantiate_Mcl(fam: ClosedLoopFamily, g) -> ConstrainedMatrixZonotope:
    """The closed-loop constrained matrix zonotope for gain parameter ``V_K``."""
    V_K = g.V_K if isinstance(g, GainParam) else np.asarray(g, dtype=float)
    if V_K.shape != (fam.T, fam.n):
        raise ShapeError(f"V_K must be {fam.T}x{fam.n}, got {V_K.shape}")
    gens = np.concatenate([-(fam.Gw @ V_K), np.zeros((fam.s_theta, fam.n, fam.n))], axis=0)
    return ConstrainedMatrixZonotope(fam.X1_minus_Cw @ V_K, gens, fam.A_C, fam.B_C)


def disturbance_from_latent(fam: ClosedLoopFamily, dc: DisturbanceConcat, beta):
    """``W0 = C_w + sum_i G_w_i beta_i`` for the disturbance part of ``beta``."""
    beta = np.asarray(beta, dtype=float)
    k = fam.T * fam.s_w
    return dc.mz.center + np.tensordot(beta[:k], fam.Gw, axes=1)
