"""Zonotopic set-membership identification of ``theta = [A B]``.

Source data ``(X0s, U0s, X1s)`` with bounded disturbances confines ``theta``
to the inequality set ``|theta D - X1s + C_w| <= dG_w``. Intersecting that
set with the prior gives a refined prior, which then feeds the closed-loop
family.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import setops
from .closed_loop import ClosedLoopFamily, PriorKnowledge, build_family
from .data import DataBatch, DisturbanceConcat, t_concat_disturbance
from .exceptions import ShapeError
from .sets import ConstrainedMatrixZonotope, MatrixZonotope, Zonotope

SLACK_MODES = ("entrywise", "shared")


@dataclass(frozen=True)
class InequalityInfoSet:
    """``{theta : theta D <= F_upper, theta (-D) <= F_lower_rhs}``."""

    D: np.ndarray
    F_upper: np.ndarray
    F_lower_rhs: np.ndarray

    @property
    def T(self):
        return self.D.shape[1]

    def contains(self, theta, tol=1e-9):
        theta = np.asarray(theta, dtype=float)
        r = theta @ self.D
        return bool(np.all(r <= self.F_upper + tol) and np.all(-r <= self.F_lower_rhs + tol))


def build_info_set(source: DataBatch, dc: DisturbanceConcat | Zonotope) -> InequalityInfoSet:
    """Information set of ``source``; ``dc`` may be the base disturbance zonotope.

    The interval half-width is always derived for the source horizon.
    """
    if isinstance(dc, Zonotope):
        dc = t_concat_disturbance(dc, source.T)
    if dc.T != source.T:
        raise ShapeError(f"disturbance horizon {dc.T} != source length {source.T}")
    Cw, dG = dc.mz.center, dc.delta
    return InequalityInfoSet(source.D0, source.X1 - Cw + dG, -source.X1 + Cw + dG)


def _as_cmz(m):
    if isinstance(m, PriorKnowledge):
        return m.model_set
    if isinstance(m, MatrixZonotope):
        return m.to_constrained()
    return m


def cmz_hyperplane_intersects(m, X, F, exact=False) -> bool:
    """Interval test for ``m`` meeting ``{theta : theta X = F}``.

    Checks ``|F - C X| <= sum_i |G_i X|`` and ``|B_C| <= sum_i |A_C_i|``
    entry-wise. This is necessary for a nonempty intersection; it is also
    sufficient for unconstrained single-column slices but not in general.
    ``exact=True`` decides the question with a feasibility LP instead.
    """
    m = _as_cmz(m)
    X, F = np.asarray(X, dtype=float), np.asarray(F, dtype=float)
    if X.shape[0] != m.shape[1] or F.shape != (m.shape[0], X.shape[1]):
        raise ShapeError("X must have p rows and F must be n x q")
    GX = m.generators @ X
    if exact:
        slice_set = ConstrainedMatrixZonotope(
            m.center, m.generators,
            _stack_blocks(m.con_A, GX), _stack_rhs(m.con_B, F - m.center @ X))
        return not setops.is_empty(slice_set)
    ok = np.all(np.abs(F - m.center @ X) <= np.abs(GX).sum(axis=0) + 1e-12)
    if m.con_B.size:
        ok = ok and np.all(np.abs(m.con_B) <= np.abs(m.con_A).sum(axis=0) + 1e-12)
    return bool(ok)


def _pad(M, width):
    return setops._pad_cols(M, width)


def _stack_blocks(A, extra):
    """Stack constraint blocks ``A`` (s, k, pc) over ``extra`` (s, r, q), padding widths."""
    w = max(A.shape[2], extra.shape[2])
    return np.concatenate([_pad(A, w), _pad(extra, w)], axis=1)


def _stack_rhs(B, extra):
    w = max(B.shape[1], extra.shape[1])
    return np.vstack([_pad(B, w), _pad(extra, w)])


def slack_width(m, X, F):
    """``L_M = F - C X + sum_i |G_i X|``; negative entries mean an empty intersection."""
    m = _as_cmz(m)
    return F - m.center @ X + np.abs(m.generators @ X).sum(axis=0)


def cmz_intersect_inequality(m, X, F, slack="entrywise") -> ConstrainedMatrixZonotope:
    """``m`` intersected with ``{theta : theta X <= F}``.

    Each inequality entry gets a slack latent ``z_e`` in ``[-1, 1]`` through the
    constraint ``sum_i G_i X z_i + (L_M/2) z = F - C X - L_M/2``, which pins
    ``(F - theta X)_e`` to ``[0, L_M_e]``. With ``slack="entrywise"`` every
    entry with ``L_M_e > 0`` has its own slack generator and the result is
    exactly the intersection. ``slack="shared"`` uses a single slack generator
    carrying the whole matrix ``L_M / 2``; that set is contained in the
    intersection but can be strictly smaller when ``theta X <= F`` has more
    than one entry. Entries with ``L_M_e <= 0`` get no slack, so
    ``L_M_e = 0`` yields the equality slice and ``L_M_e < 0`` an empty set.
    """
    if slack not in SLACK_MODES:
        raise ValueError(f"slack must be one of {SLACK_MODES}")
    m = _as_cmz(m)
    X, F = np.asarray(X, dtype=float), np.asarray(F, dtype=float)
    n, p = m.shape
    if X.ndim != 2 or X.shape[0] != p or F.shape != (n, X.shape[1]):
        raise ShapeError(f"X must be {p} x q and F must be {n} x q")
    GX = m.generators @ X
    L = F - m.center @ X + np.abs(GX).sum(axis=0)
    Lp = np.maximum(L, 0.0)
    if slack == "entrywise":
        idx = np.argwhere(Lp > 0)
        slack_blocks = np.zeros((len(idx),) + F.shape)
        for k, (r, c) in enumerate(idx):
            slack_blocks[k, r, c] = Lp[r, c] / 2
    else:
        slack_blocks = (Lp / 2)[None]
    e = slack_blocks.shape[0]
    top = np.concatenate([m.con_A, np.zeros((e,) + m.con_A.shape[1:])], axis=0)
    bottom = np.concatenate([GX, slack_blocks], axis=0)
    w = max(top.shape[2], bottom.shape[2])
    con_A = np.concatenate([_pad(top, w), _pad(bottom, w)], axis=1)
    con_B = _stack_rhs(m.con_B, F - m.center @ X - Lp / 2)
    gens = np.concatenate([m.generators, np.zeros((e, n, p))], axis=0)
    return ConstrainedMatrixZonotope(m.center, gens, con_A, con_B)


def recover_slack_latents(m, X, F, zeta, slack="entrywise"):
    """Slack latents that place the member ``C + sum G_i zeta_i`` in the intersection.

    For ``"shared"`` this is the trace formula
    ``2 tr(L^T (F - C X - L/2 - sum G_i X zeta_i)) / tr(L^T L)``.
    """
    m = _as_cmz(m)
    zeta = np.asarray(zeta, dtype=float)
    GX = m.generators @ X
    L = np.maximum(F - m.center @ X + np.abs(GX).sum(axis=0), 0.0)
    R = F - m.center @ X - L / 2 - np.tensordot(zeta, GX, axes=1)
    if slack == "shared":
        denom = np.sum(L * L)
        return np.array([2 * np.sum(L * R) / denom]) if denom > 0 else np.zeros(1)
    pos = L > 0
    return (2 * R[pos] / L[pos]).reshape(-1) if pos.any() else np.zeros(0)


def refine_prior(prior: PriorKnowledge, info: InequalityInfoSet, slack="entrywise") -> PriorKnowledge:
    """Intersect the prior with the information set.

    Both inequality families are handled in one half-space intersection with
    ``X = [D, -D]`` when ``2 T_s > m_theta``. Otherwise the prior constraint
    width dominates and the two families are applied one after the other.
    """
    ms = _as_cmz(prior)
    n_plus_m = ms.shape[1]
    if info.D.shape[0] != n_plus_m:
        raise ShapeError(f"information set acts on {info.D.shape[0]} columns, prior has {n_plus_m}")
    m_theta = ms.constraint_shape[1]
    if 2 * info.T > m_theta:
        X = np.hstack([info.D, -info.D])
        F = np.hstack([info.F_upper, info.F_lower_rhs])
        out = cmz_intersect_inequality(ms, X, F, slack)
    else:
        warnings.warn(f"2*T_s = {2 * info.T} <= m_theta = {m_theta}; "
                      "applying the two inequality families sequentially", stacklevel=2)
        out = cmz_intersect_inequality(ms, info.D, info.F_upper, slack)
        out = cmz_intersect_inequality(out, -info.D, info.F_lower_rhs, slack)
    return PriorKnowledge(out)


def refine_online(prior: PriorKnowledge, batch: DataBatch, disturbance: Zonotope,
                  slack="entrywise") -> PriorKnowledge:
    """Apply one-sample updates column by column."""
    for t in range(batch.T):
        prior = refine_prior(prior, build_info_set(batch.columns([t]), disturbance), slack)
    return prior


def interval_hull_prior(prior: PriorKnowledge) -> PriorKnowledge:
    """Box prior covering the interval hull of ``prior``."""
    hull = setops.cmz_interval_hull(_as_cmz(prior))
    return PriorKnowledge.box(hull.center, hull.width / 2)


def unified_pipeline(prior: PriorKnowledge, source_batch: DataBatch, target_batch: DataBatch,
                     dc_s: DisturbanceConcat, dc_t: DisturbanceConcat,
                     slack="entrywise") -> ClosedLoopFamily:
    """Refine the prior on source data, then build the closed-loop family on target data."""
    refined = refine_prior(prior, build_info_set(source_batch, dc_s), slack)
    return build_family(target_batch, dc_t, refined, refinement="full")
