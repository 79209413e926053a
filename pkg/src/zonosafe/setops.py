"""Set algebra on constrained (matrix) zonotopes plus LP-backed utilities.

Exact operations (Minkowski sum, intersection, linear maps, interval hulls)
are closed form. Membership, emptiness, latent-variable bounds and the
inclusion certificate each compile to one or more linear programs through
:mod:`zonosafe.lp`.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import lp as _lp
from .exceptions import EmptySetError, LPError, ShapeError, UnboundedSetError
from .sets import (
    ConstrainedMatrixZonotope,
    ConstrainedZonotope,
    InclusionCertificate,
    MatrixInterval,
    MatrixZonotope,
    Polytope,
    Zonotope,
    vec,
)

EQ_TOL = 1e-8
MEMBERSHIP_TOL = 1e-6


def _as_cz(c):
    if isinstance(c, Zonotope):
        return c.to_constrained()
    return c


def _latent_form(c):
    """Return ``(Gmat, center_vec, E, f)`` describing ``{Gmat z + c : E z = f, |z| <= 1}``."""
    c = _as_cz(c)
    if isinstance(c, ConstrainedZonotope):
        return c.generators, c.center, c.con_A, c.con_b
    if isinstance(c, MatrixZonotope):
        c = c.to_constrained()
    if isinstance(c, ConstrainedMatrixZonotope):
        E, f = c.latent_equations(drop_trivial=True)
        return c.generator_matrix(), vec(c.center), E, f
    raise TypeError(f"unsupported set type {type(c).__name__}")


def _check_lp(outcome, what):
    if outcome.status is _lp.LPStatus.NUMERICAL_FAILURE:
        raise LPError(f"{what}: {outcome.message}")
    return outcome


# ---------------------------------------------------------------- exact algebra

def cz_minkowski_sum(a: ConstrainedZonotope, b: ConstrainedZonotope) -> ConstrainedZonotope:
    """``a (+) b`` with concatenated generators and block-diagonal constraints."""
    a, b = _as_cz(a), _as_cz(b)
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    G = np.hstack([a.generators, b.generators])
    A = sla.block_diag(a.con_A, b.con_A) if (a.n_constraints or b.n_constraints) else None
    if A is not None:
        A = np.asarray(A).reshape(a.n_constraints + b.n_constraints, G.shape[1])
    bb = np.concatenate([a.con_b, b.con_b])
    return ConstrainedZonotope(G, a.center + b.center, A, bb if A is not None else None)


def padding_width(a: ConstrainedMatrixZonotope, b: ConstrainedMatrixZonotope) -> int:
    """Common column width used to stack the constraint blocks of an intersection."""
    return max(a.shape[1], a.constraint_shape[1], b.constraint_shape[1])


def _pad_cols(M, width):
    M = np.asarray(M)
    extra = width - M.shape[-1]
    if extra < 0:
        raise ShapeError(f"cannot pad width {M.shape[-1]} down to {width}")
    if extra == 0:
        return M
    pad = [(0, 0)] * (M.ndim - 1) + [(0, extra)]
    return np.pad(M, pad)


def cmz_intersect(a: ConstrainedMatrixZonotope, b: ConstrainedMatrixZonotope) -> ConstrainedMatrixZonotope:
    """Exact intersection of two constrained matrix zonotopes.

    The result keeps the generators and center of ``a`` (with ``b``'s
    generators appended as zero matrices) and stacks three block rows of
    constraints: ``a``'s constraints, ``b``'s constraints, and the coupling
    ``sum G^a_i z_i - sum G^b_j z'_j = C^b - C^a``. Every block is zero-padded
    on the right to ``padding_width(a, b)`` columns.
    """
    if isinstance(a, MatrixZonotope):
        a = a.to_constrained()
    if isinstance(b, MatrixZonotope):
        b = b.to_constrained()
    if a.shape != b.shape:
        raise ShapeError(f"center shapes differ: {a.shape} vs {b.shape}")
    n, p = a.shape
    s1, s2 = a.n_generators, b.n_generators
    k1, k2 = a.constraint_shape[0], b.constraint_shape[0]
    w = padding_width(a, b)
    A1 = _pad_cols(a.con_A, w)
    A2 = _pad_cols(b.con_A, w)
    G1 = _pad_cols(a.generators, w)
    G2 = _pad_cols(b.generators, w)
    blocks = np.zeros((s1 + s2, k1 + k2 + n, w))
    blocks[:s1, :k1] = A1
    blocks[:s1, k1 + k2:] = G1
    blocks[s1:, k1:k1 + k2] = A2
    blocks[s1:, k1 + k2:] = -G2
    B = np.vstack([_pad_cols(a.con_B, w), _pad_cols(b.con_B, w),
                   _pad_cols(b.center, w) - _pad_cols(a.center, w)])
    gens = np.concatenate([a.generators, np.zeros((s2, n, p))], axis=0)
    return ConstrainedMatrixZonotope(a.center, gens, blocks, B)


def mz_interval_hull(m: MatrixZonotope) -> MatrixInterval:
    """``[C - dG, C + dG]`` with ``dG = sum_i |G_i|``."""
    if isinstance(m, ConstrainedMatrixZonotope):
        m = MatrixZonotope(m.center, m.generators)
    dG = np.abs(m.generators).sum(axis=0)
    return MatrixInterval(m.center - dG, m.center + dG)


def mz_transform(m: MatrixZonotope, N) -> MatrixZonotope:
    """``{X N : X in m}``; every generator is right-multiplied by ``N``."""
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or N.shape[0] != m.shape[1]:
        raise ShapeError(f"N must have {m.shape[1]} rows, got shape {N.shape}")
    return MatrixZonotope(m.center @ N, m.generators @ N)


def cmz_transform(k: ConstrainedMatrixZonotope, N):
    """Right-multiply a constrained matrix zonotope by ``N``.

    A vector ``N`` yields a :class:`ConstrainedZonotope` whose constraints are
    the vectorized constraint blocks; a matrix ``N`` yields a constrained
    matrix zonotope with unchanged constraints.
    """
    if isinstance(k, MatrixZonotope):
        k = k.to_constrained()
    N = np.asarray(N, dtype=float)
    if N.shape[0] != k.shape[1] or N.ndim not in (1, 2):
        raise ShapeError(f"N must have {k.shape[1]} rows, got shape {N.shape}")
    if N.ndim == 1:
        G = (k.generators @ N).T.reshape(k.shape[0], k.n_generators)
        E, f = k.latent_equations()
        return ConstrainedZonotope(G, k.center @ N, E, f)
    return ConstrainedMatrixZonotope(k.center @ N, k.generators @ N, k.con_A, k.con_B)


def cz_scale_level_set(c: ConstrainedZonotope, lam: float) -> ConstrainedZonotope:
    """``<lam G, c, A, lam b>``: the level set scaled about the unscaled center."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    c = _as_cz(c)
    return ConstrainedZonotope(lam * c.generators, c.center, c.con_A, lam * c.con_b)


def symmetric_polytope_to_zonotope(p: Polytope) -> Zonotope:
    """Convert ``{x : |M x| <= r}`` given as paired rows ``(M_k, -M_k)`` to ``<M^-1 diag(r), 0>``.

    Only centrally symmetric polytopes with exactly ``n`` row pairs are
    supported (a parallelotope).
    """
    H, h = p.H, p.h
    used = np.zeros(len(h), dtype=bool)
    rows, radii = [], []
    for j in range(len(h)):
        if used[j]:
            continue
        partner = [k for k in range(len(h)) if not used[k] and k != j
                   and np.allclose(H[k], -H[j]) and np.isclose(h[k], h[j])]
        if not partner:
            raise ShapeError("polytope is not centrally symmetric about the origin")
        used[j] = used[partner[0]] = True
        rows.append(H[j])
        radii.append(h[j])
    M = np.array(rows)
    if M.shape[0] != M.shape[1]:
        raise ShapeError("only parallelotopes (n row pairs) can be converted")
    G = np.linalg.solve(M, np.diag(radii))
    return Zonotope(np.zeros(p.dim), G)


# -------------------------------------------------------------- LP utilities

def _residual_program(Gm, d, E, f):
    """min t  s.t. |Gm z - d| <= t, |E z - f| <= t, |z| <= 1."""
    s = Gm.shape[1]
    M = np.vstack([Gm, E]) if E.size else Gm
    rhs = np.concatenate([d, f]) if E.size else d
    ones = np.ones((M.shape[0], 1))
    A_ub = sp.vstack([sp.hstack([sp.csr_matrix(M), -ones]),
                      sp.hstack([sp.csr_matrix(-M), -ones])])
    b_ub = np.concatenate([rhs, -rhs])
    c = np.zeros(s + 1)
    c[-1] = 1.0
    lower = np.concatenate([-np.ones(s), [0.0]])
    upper = np.concatenate([np.ones(s), [np.inf]])
    return _lp.LinearProgram(c, A_ub, b_ub, lower=lower, upper=upper)


def membership_residual(x, c):
    """Smallest achievable residual of ``x`` against the latent description of ``c``.

    Returns ``(residual, zeta)`` where ``zeta`` lies in the unit box and the
    residual is recomputed in numpy from that witness (not taken from the
    solver), so it can be trusted at tight tolerances.
    """
    Gm, cc, E, f = _latent_form(c)
    x = vec(x) if np.ndim(x) == 2 else np.asarray(x, dtype=float).reshape(-1)
    if x.size != cc.size:
        raise ShapeError(f"point has {x.size} entries, set has dimension {cc.size}")
    d = x - cc
    if Gm.shape[1] == 0:
        r = max(float(np.max(np.abs(d), initial=0.0)), float(np.max(np.abs(f), initial=0.0)))
        return r, np.zeros(0)
    out = _check_lp(_lp.solve(_residual_program(Gm, d, E, f)), "membership LP")
    if not out.optimal:
        raise LPError(f"membership LP returned {out.status.value}")
    z = np.clip(out.solution[:-1], -1.0, 1.0)
    r = float(np.max(np.abs(Gm @ z - d), initial=0.0))
    if E.size:
        r = max(r, float(np.max(np.abs(E @ z - f))))
    return r, z


def cz_membership(x, c: ConstrainedZonotope, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff some ``|z| <= 1`` reproduces ``x`` and the constraints within ``tol``."""
    c = _as_cz(c)
    if np.asarray(x).size != c.dim:
        raise ShapeError(f"point dimension {np.asarray(x).size} != set dimension {c.dim}")
    return membership_residual(x, c)[0] <= tol


def cmz_membership(X, k: ConstrainedMatrixZonotope, tol: float = MEMBERSHIP_TOL) -> bool:
    """Matrix analogue of :func:`cz_membership`."""
    X = np.asarray(X, dtype=float)
    if X.shape != k.shape:
        raise ShapeError(f"matrix shape {X.shape} != set shape {k.shape}")
    return membership_residual(X, k)[0] <= tol


def _feasibility_program(E, f, s):
    return _lp.LinearProgram(np.zeros(s), eq_A=E if E.size else None,
                             eq_b=f if E.size else None,
                             lower=-np.ones(s), upper=np.ones(s))


def is_empty(c) -> bool:
    """Emptiness of a constrained (matrix) zonotope via a latent feasibility LP."""
    Gm, _, E, f = _latent_form(c)
    s = Gm.shape[1]
    if E.shape[0] == 0:
        return False
    if s == 0:
        return bool(np.any(np.abs(f) > EQ_TOL))
    out = _check_lp(_lp.solve(_feasibility_program(E, f, s)), "emptiness LP")
    return out.status is _lp.LPStatus.INFEASIBLE


def all_generator_bounds(c):
    """Range of every latent variable over ``{|z| <= 1, E z = f}``.

    Returns arrays ``(lower, upper)``, each clipped into ``[-1, 1]``.
    """
    Gm, _, E, f = _latent_form(c)
    s = Gm.shape[1]
    lo, hi = -np.ones(s), np.ones(s)
    if E.shape[0] == 0 or s == 0:
        return lo, hi
    base = _feasibility_program(E, f, s)
    for i in range(s):
        for sign in (1.0, -1.0):
            obj = np.zeros(s)
            obj[i] = sign
            out = _check_lp(_lp.solve(base.with_objective(obj)), "generator bound LP")
            if out.status is _lp.LPStatus.INFEASIBLE:
                raise EmptySetError("constraint set is empty")
            if not out.optimal:
                raise LPError(f"generator bound LP returned {out.status.value}")
            if sign > 0:
                lo[i] = out.objective_value
            else:
                hi[i] = -out.objective_value
    lo = np.clip(lo, -1.0, 1.0)
    hi = np.clip(hi, -1.0, 1.0)
    hi = np.maximum(hi, lo)
    return lo, hi


def cz_generator_bounds(c, i: int):
    """``(min z_i, max z_i)`` over the latent set of ``c``."""
    Gm, _, E, f = _latent_form(c)
    s = Gm.shape[1]
    if not 0 <= i < s:
        raise IndexError(f"generator index {i} out of range for {s} generators")
    if E.shape[0] == 0:
        return -1.0, 1.0
    base = _feasibility_program(E, f, s)
    vals = []
    for sign in (1.0, -1.0):
        obj = np.zeros(s)
        obj[i] = sign
        out = _check_lp(_lp.solve(base.with_objective(obj)), "generator bound LP")
        if out.status is _lp.LPStatus.INFEASIBLE:
            raise EmptySetError("constraint set is empty")
        vals.append(sign * out.objective_value)
    lo, hi = float(np.clip(vals[0], -1, 1)), float(np.clip(vals[1], -1, 1))
    return lo, max(lo, hi)


def cmz_interval_hull(k: ConstrainedMatrixZonotope) -> MatrixInterval:
    """Tightest element-wise bounds of a constrained (matrix) zonotope, by 2 LPs per entry."""
    if isinstance(k, MatrixZonotope):
        return mz_interval_hull(k)
    Gm, cc, E, f = _latent_form(k)
    s = Gm.shape[1]
    if E.shape[0] == 0:
        d = np.abs(Gm).sum(axis=1)
        lo, hi = cc - d, cc + d
    else:
        base = _feasibility_program(E, f, s)
        lo, hi = cc.copy(), cc.copy()
        for r in range(Gm.shape[0]):
            if not np.any(Gm[r]):
                continue
            for sign in (1.0, -1.0):
                out = _check_lp(_lp.solve(base.with_objective(sign * Gm[r])), "hull LP")
                if out.status is _lp.LPStatus.INFEASIBLE:
                    raise EmptySetError("set is empty")
                if sign > 0:
                    lo[r] += out.objective_value
                else:
                    hi[r] -= out.objective_value
        hi = np.maximum(hi, lo)
    shape = k.shape if isinstance(k, ConstrainedMatrixZonotope) else (k.dim,)
    return MatrixInterval(lo.reshape(shape, order="F"), hi.reshape(shape, order="F"))


def polytope_interval_hull(p: Polytope):
    """Bounding box of a bounded polytope and ``M_x = max_i max(|lo_i|, |hi_i|)``.

    ``M_x`` bounds ``|x|_inf`` over the polytope.
    """
    n = p.dim
    lo, hi = np.zeros(n), np.zeros(n)
    base = _lp.LinearProgram(np.zeros(n), p.H, p.h)
    for i in range(n):
        for sign in (1.0, -1.0):
            obj = np.zeros(n)
            obj[i] = sign
            out = _check_lp(_lp.solve(base.with_objective(obj)), "polytope hull LP")
            if out.status is _lp.LPStatus.UNBOUNDED:
                raise UnboundedSetError(f"polytope is unbounded along coordinate {i}")
            if out.status is _lp.LPStatus.INFEASIBLE:
                raise EmptySetError("polytope is empty")
            if sign > 0:
                lo[i] = out.objective_value
            else:
                hi[i] = -out.objective_value
    M_x = float(np.max(np.maximum(np.abs(lo), np.abs(hi)), initial=0.0))
    return MatrixInterval(lo, hi), M_x


def support(c, direction) -> float:
    """``max d^T x`` over a constrained zonotope."""
    Gm, cc, E, f = _latent_form(c)
    direction = np.asarray(direction, dtype=float)
    s = Gm.shape[1]
    if E.shape[0] == 0:
        return float(direction @ cc + np.abs(direction @ Gm).sum())
    out = _check_lp(_lp.solve(_feasibility_program(E, f, s).with_objective(-(direction @ Gm))),
                    "support LP")
    if out.status is _lp.LPStatus.INFEASIBLE:
        raise EmptySetError("set is empty")
    return float(direction @ cc - out.objective_value)


# ------------------------------------------------------------- inclusion LP

def inclusion_program(outer: ConstrainedZonotope, G1, c1, A1, b1, n_extra=0,
                      G1_map=None, c1_map=None):
    """Assemble the inclusion-certificate LP for ``inner`` inside ``outer``.

    The inner generators and center may depend affinely on ``n_extra`` extra
    decision variables ``v``: ``Vec(G1) + G1_map v`` and ``c1 + c1_map v``.
    The variable vector is ``[v, Vec(Gamma), L, Vec(P), Vec(S_Gamma), S_L]``
    where the slacks bound ``|Gamma|`` and ``|L|`` element-wise.

    Returns ``(eq_A, eq_b, ub_A, ub_b, layout)``; ``layout`` maps block names to
    index slices. Callers add their own rows/objective on ``v``.
    """
    G2, c2, A2, b2 = outer.generators, outer.center, outer.con_A, outer.con_b
    n, s2 = G2.shape
    q2 = A2.shape[0]
    s1 = G1.shape[1]
    q1 = A1.shape[0]
    sizes = [("v", n_extra), ("Gamma", s2 * s1), ("L", s2), ("P", q2 * q1),
             ("SG", s2 * s1), ("SL", s2)]
    layout, start = {}, 0
    for name, size in sizes:
        layout[name] = slice(start, start + size)
        start += size
    nvar = start

    def block(rows, parts):
        given = dict(parts)
        return sp.hstack([sp.csr_matrix(given[name]) if name in given
                          else sp.csr_matrix((rows, size)) for name, size in sizes],
                         format="csr")

    Z = lambda r, c: sp.csr_matrix((r, c))  # noqa: E731
    G1_map = Z(n * s1, n_extra) if G1_map is None else sp.csr_matrix(G1_map)
    c1_map = Z(n, n_extra) if c1_map is None else sp.csr_matrix(c1_map)

    eqs, rhs = [], []
    # c2 - c1(v) = G2 L
    eqs.append(block(n, [("L", G2), ("v", c1_map)]))
    rhs.append(c2 - c1)
    # G1(v) = G2 Gamma
    eqs.append(block(n * s1, [("Gamma", sp.kron(sp.eye(s1), G2)), ("v", -G1_map)]))
    rhs.append(vec(G1))
    if q2:
        # P A1 = A2 Gamma
        eqs.append(block(q2 * s1, [("P", sp.kron(sp.csr_matrix(A1.T), sp.eye(q2))),
                                   ("Gamma", -sp.kron(sp.eye(s1), A2))]))
        rhs.append(np.zeros(q2 * s1))
        # P b1 = b2 + A2 L
        eqs.append(block(q2, [("P", sp.kron(sp.csr_matrix(b1.reshape(1, -1)), sp.eye(q2))),
                              ("L", -A2)]))
        rhs.append(b2)
    eq_A = sp.vstack(eqs, format="csr")
    eq_b = np.concatenate(rhs)

    I_g = sp.eye(s2 * s1)
    I_l = sp.eye(s2)
    ubs = [
        block(s2 * s1, [("Gamma", I_g), ("SG", -I_g)]),
        block(s2 * s1, [("Gamma", -I_g), ("SG", -I_g)]),
        block(s2, [("L", I_l), ("SL", -I_l)]),
        block(s2, [("L", -I_l), ("SL", -I_l)]),
        block(s2, [("SG", sp.kron(np.ones((1, s1)), sp.eye(s2))), ("SL", I_l)]),
    ]
    ub_b = np.concatenate([np.zeros(2 * s2 * s1 + 2 * s2), np.ones(s2)])
    return eq_A, eq_b, sp.vstack(ubs, format="csr"), ub_b, layout


def unpack_certificate(x, layout, s1, s2, q1, q2):
    Gamma = x[layout["Gamma"]].reshape(s2, s1, order="F")
    L = x[layout["L"]]
    P = x[layout["P"]].reshape(q2, q1, order="F")
    return InclusionCertificate(Gamma, L, P)


def cz_inclusion(inner: ConstrainedZonotope, outer: ConstrainedZonotope, tol: float = 1e-7):
    """Search for an inclusion certificate; ``None`` when the LP is infeasible.

    The condition is sufficient but not necessary, so ``None`` does not prove
    that ``inner`` is not a subset of ``outer``.
    """
    inner, outer = _as_cz(inner), _as_cz(outer)
    if inner.dim != outer.dim:
        raise ShapeError(f"dimension mismatch: {inner.dim} vs {outer.dim}")
    eq_A, eq_b, ub_A, ub_b, layout = inclusion_program(
        outer, inner.generators, inner.center, inner.con_A, inner.con_b)
    nvar = eq_A.shape[1]
    lower = np.full(nvar, -np.inf)
    lower[layout["SG"]] = 0.0
    lower[layout["SL"]] = 0.0
    prog = _lp.LinearProgram(np.zeros(nvar), ub_A, ub_b, eq_A, eq_b, lower=lower)
    out = _lp.solve(prog)
    if out.status is _lp.LPStatus.INFEASIBLE:
        return None
    if not out.optimal:
        raise LPError(f"inclusion LP returned {out.status.value}: {out.message}")
    cert = unpack_certificate(out.solution, layout, inner.n_generators, outer.n_generators,
                              inner.n_constraints, outer.n_constraints)
    if not cert.is_valid(inner, outer, tol=max(tol, 10 * out.residual)):
        raise LPError("inclusion LP returned a certificate that fails validation")
    return cert


# ------------------------------------------------------------------ sampling

def _null_space(E, tol=1e-12):
    if E.shape[0] == 0:
        return np.eye(E.shape[1])
    return sla.null_space(E, rcond=tol)


def _max_margin_point(E, f, s, fixed=None):
    """A latent point maximizing the distance to the box faces (free coords only)."""
    # variables [z, delta]
    fixed = np.zeros(s, dtype=bool) if fixed is None else fixed
    free = np.flatnonzero(~fixed)
    rows, rhs = [], []
    for i in free:
        r = np.zeros(s + 1)
        r[i], r[-1] = 1.0, 1.0
        rows.append(r)
        rhs.append(1.0)
        r = np.zeros(s + 1)
        r[i], r[-1] = -1.0, 1.0
        rows.append(r)
        rhs.append(1.0)
    c = np.zeros(s + 1)
    c[-1] = -1.0
    eq = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.size else None
    prog = _lp.LinearProgram(c, np.array(rows).reshape(-1, s + 1), rhs, eq,
                             f if E.size else None,
                             lower=np.concatenate([-np.ones(s), [0.0]]),
                             upper=np.concatenate([np.ones(s), [1.0]]))
    out = _check_lp(_lp.solve(prog, tol=1e-7), "max-margin LP")
    if out.status is _lp.LPStatus.INFEASIBLE:
        raise EmptySetError("constraint set is empty")
    if not out.optimal:
        raise LPError(f"max-margin LP returned {out.status.value}")
    return out.solution[:-1], out.solution[-1]


def _project(z, E, f, E_pinv):
    if E.shape[0] == 0:
        return z
    return z - (E_pinv @ (E @ z.T - f[:, None])).T


def _hit_and_run(E, f, s, rng, count, thin=None, burn=200):
    z0, margin = _max_margin_point(E, f, s)
    fixed = np.zeros(s, dtype=bool)
    if margin < 1e-9:
        lo, hi = np.empty(s), np.empty(s)
        base = _feasibility_program(E, f, s)
        for i in range(s):
            obj = np.zeros(s)
            obj[i] = 1.0
            lo[i] = _lp.solve(base.with_objective(obj)).objective_value
            hi[i] = -_lp.solve(base.with_objective(-obj)).objective_value
        fixed = (hi - lo) < 1e-9
        z_fixed = 0.5 * (hi + lo)
        E_ext = np.vstack([E, np.eye(s)[fixed]])
        f_ext = np.concatenate([f, z_fixed[fixed]])
        E, f = E_ext, f_ext
        z0, margin = _max_margin_point(E, f, s, fixed)
    N = _null_space(E)
    E_pinv = np.linalg.pinv(E) if E.shape[0] else None
    d = N.shape[1]
    out = np.empty((count, s))
    if d == 0:
        out[:] = z0
        return out
    thin = thin or max(3, d)
    z = z0.copy()
    taken = 0
    step = 0
    while taken < count:
        r = N @ rng.standard_normal(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_up = np.where(r > 1e-14, (1 - z) / r, np.where(r < -1e-14, (-1 - z) / r, np.inf))
            t_lo = np.where(r > 1e-14, (-1 - z) / r, np.where(r < -1e-14, (1 - z) / r, -np.inf))
        a, b = np.max(t_lo), np.min(t_up)
        if a < b:
            z = z + rng.uniform(a, b) * r
        step += 1
        if step % 50 == 0 and E.shape[0]:
            z = np.clip(_project(z[None, :], E, f, E_pinv)[0], -1, 1)
        if step > burn and step % thin == 0:
            out[taken] = z
            taken += 1
    if E.shape[0]:
        out = np.clip(_project(out, E, f, E_pinv), -1.0, 1.0)
    return out


def sample_latent(E, f, s, rng, count, method="auto", budget=200):
    """Draw latent vectors from ``{|z| <= 1, E z = f}``.

    ``method="project"`` draws uniformly in the box, applies the minimum-norm
    correction onto ``E z = f`` and rejects draws that leave the box; it raises
    :class:`EmptySetError` when fewer than ``count`` draws survive
    ``budget * count`` attempts. ``"auto"`` falls back to hit-and-run from an
    LP interior point when projection is too wasteful. Samples cover the set;
    they are not exactly uniform.
    """
    if s == 0:
        if E.shape[0] and np.any(np.abs(f) > EQ_TOL):
            raise EmptySetError("set is empty")
        return np.zeros((count, 0))
    if E.shape[0] == 0:
        return rng.uniform(-1.0, 1.0, size=(count, s))
    if method == "hit_and_run":
        return _hit_and_run(E, f, s, rng, count)
    E_pinv = np.linalg.pinv(E)
    if np.max(np.abs(E @ (E_pinv @ f) - f), initial=0.0) > 1e-9 * max(1.0, np.abs(f).max()):
        raise EmptySetError("constraint equations are inconsistent")
    accepted = []
    n_acc = 0
    tries = 0
    batch = max(count, 256)
    limit = budget * count if method == "project" else 20 * count
    while n_acc < count and tries < limit:
        z = _project(rng.uniform(-1.0, 1.0, size=(batch, s)), E, f, E_pinv)
        ok = np.all(np.abs(z) <= 1.0, axis=1)
        accepted.append(z[ok])
        n_acc += int(ok.sum())
        tries += batch
    if n_acc >= count:
        return np.vstack(accepted)[:count]
    if method == "project":
        raise EmptySetError(
            f"only {n_acc} of {count} samples accepted after {tries} draws; set may be empty")
    return _hit_and_run(E, f, s, rng, count)


def cz_sample(c: ConstrainedZonotope, rng, count: int, method="auto"):
    """Members of ``c`` as rows of a ``(count, n)`` array."""
    Gm, cc, E, f = _latent_form(c)
    z = sample_latent(E, f, Gm.shape[1], rng, count, method=method)
    return z @ Gm.T + cc


def cmz_sample(k: ConstrainedMatrixZonotope, rng, count: int, method="auto", return_latent=False):
    """Members of ``k`` as a ``(count, n, p)`` array (optionally with their latents)."""
    if isinstance(k, MatrixZonotope):
        k = k.to_constrained()
    E, f = k.latent_equations(drop_trivial=True)
    z = sample_latent(E, f, k.n_generators, rng, count, method=method)
    X = k.center[None] + np.tensordot(z, k.generators, axes=1)
    return (X, z) if return_latent else X
