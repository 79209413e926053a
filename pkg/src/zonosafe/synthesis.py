"""λ-contractive state-feedback synthesis from data.

Two safe-set shapes are supported:

* constrained zonotope: the one-step reachable set of the closed-loop family
  (a constrained zonotope whose generators are affine in ``V_K``) must be
  certified inside the λ-scaled safe set by the inclusion LP;
* polytope ``{x : H x <= h}``: a primal-dual LP in ``(P, V_K, rho)`` that
  bounds the disturbance-induced uncertainty of the closed-loop family by
  ``rho * l``.

Both return the gain ``K = U0 V_K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import lp as _lp
from . import setops
from .closed_loop import ClosedLoopFamily, instantiate_Mcl
from .data import DataBatch, LinearSystem
from .exceptions import EmptySetError, LPError, ShapeError
from .serialization import array_from_doc, array_to_doc
from .sets import ConstrainedZonotope, Polytope, Zonotope, vec


@dataclass(frozen=True)
class SynthesisProblem:
    family: ClosedLoopFamily
    safe_set: ConstrainedZonotope | Polytope
    disturbance: Zonotope
    lam: float
    batch: DataBatch

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0 + 1e-15:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        safe = self.safe_set
        if isinstance(safe, Zonotope):
            safe = safe.to_constrained()
            object.__setattr__(self, "safe_set", safe)
        if safe.dim != self.family.n or self.disturbance.dim != self.family.n:
            raise ShapeError("safe set, disturbance and family dimensions disagree")
        if self.batch.T != self.family.T:
            raise ShapeError("batch length differs from the family horizon")


@dataclass(frozen=True)
class SynthesisCertificate:
    V_K: np.ndarray
    K: np.ndarray
    lam: float
    rho: float | None = None
    P: np.ndarray | None = None
    Gamma: np.ndarray | None = None
    L: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __bool__(self):
        return True


@dataclass(frozen=True)
class Infeasible:
    """Synthesis found no certificate; ``diagnostics`` keeps the precomputed terms."""

    reason: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __bool__(self):
        return False


def _lin(M, g):
    """Matrix of ``vec(V) -> M V g`` for column-major ``vec``."""
    return np.kron(np.asarray(g, dtype=float).reshape(1, -1), M)


# ------------------------------------------------------- constrained zonotope

@dataclass(frozen=True)
class ProductGenerators:
    """Generators ``d_ij * (-G_w_i V_K) g_j`` of the product over-approximation.

    ``d`` is ``(s_c, s_x)``; ``maps[k]`` sends ``vec(V_K)`` to generator ``k``
    with ``k = i * s_x + j``. Prior-parameter generators map to zero.
    """

    d: np.ndarray
    maps: np.ndarray

    def evaluate(self, V_K):
        return (self.maps @ vec(V_K)).T


def compute_Gf(fam: ClosedLoopFamily, safe: ConstrainedZonotope, bounds=None) -> ProductGenerators:
    """Scaling factors ``d_ij`` and the V_K-linear maps of the product generators.

    ``d_ij`` is the largest absolute product of the latent ranges of family
    generator ``i`` and safe-set generator ``j``.
    """
    safe = safe.to_constrained() if isinstance(safe, Zonotope) else safe
    if bounds is None:
        try:
            ls, us = fam.generator_bounds()
            lx, ux = setops.all_generator_bounds(safe)
        except EmptySetError as exc:
            raise EmptySetError(f"family or safe set is empty: {exc}") from exc
    else:
        ls, us, lx, ux = bounds
    prods = np.stack([np.outer(ls, lx), np.outer(ls, ux), np.outer(us, lx), np.outer(us, ux)])
    d = np.abs(prods).max(axis=0)
    n, T = fam.n, fam.T
    s_x = safe.n_generators
    maps = np.zeros((fam.s_c * s_x, n, T * n))
    k_w = T * fam.s_w
    for i in range(k_w):
        for j in range(s_x):
            maps[i * s_x + j] = -d[i, j] * _lin(fam.Gw[i], safe.generators[:, j])
    return ProductGenerators(d, maps)


def _next_state_parts(fam: ClosedLoopFamily, safe: ConstrainedZonotope, dist: Zonotope,
                      gf: ProductGenerators):
    """Constant parts and V_K-linear maps of the one-step set's generators and center."""
    n, T = fam.n, fam.T
    M = fam.X1_minus_Cw
    cx, Gx = safe.center, safe.generators
    s_x = Gx.shape[1]
    k_w = T * fam.s_w
    nv = T * n
    maps = []
    for i in range(fam.s_c):
        maps.append(-_lin(fam.Gw[i], cx) if i < k_w else np.zeros((n, nv)))
    for j in range(s_x):
        maps.append(_lin(M, Gx[:, j]))
    maps.extend(gf.maps)
    maps.extend(np.zeros((dist.n_generators, n, nv)))
    maps = np.asarray(maps).reshape(-1, n, nv)
    s1 = maps.shape[0]
    G_const = np.zeros((n, s1))
    G_const[:, s1 - dist.n_generators:] = dist.generators
    G_map = maps.reshape(s1 * n, nv)  # row k*n + r is entry (r, k): column-major vec(G)
    c_map = _lin(M, cx)
    E, f = fam.constraint_equations(drop_trivial=True)
    A1 = np.zeros((E.shape[0] + safe.n_constraints, s1))
    A1[:E.shape[0], :fam.s_c] = E
    A1[E.shape[0]:, fam.s_c:fam.s_c + s_x] = safe.con_A
    b1 = np.concatenate([f, safe.con_b])
    return G_const, G_map, dist.center, c_map, A1, b1


def next_state_set(fam: ClosedLoopFamily, V_K, safe: ConstrainedZonotope, dist: Zonotope,
                   gf: ProductGenerators | None = None) -> ConstrainedZonotope:
    """Constrained zonotope containing every successor of the safe set under the family."""
    safe = safe.to_constrained() if isinstance(safe, Zonotope) else safe
    gf = compute_Gf(fam, safe) if gf is None else gf
    G_const, G_map, c_const, c_map, A1, b1 = _next_state_parts(fam, safe, dist, gf)
    v = vec(V_K)
    G = G_const + (G_map @ v).reshape(G_const.shape, order="F")
    return ConstrainedZonotope(G, c_const + c_map @ v, A1, b1)


def synth_cz(problem: SynthesisProblem, minimize_norm: bool = False, gf=None):
    """Gain whose one-step set is certified inside the λ-scaled safe set.

    Pure feasibility by default; ``minimize_norm`` adds ``min ||V_K||_inf``.
    """
    fam, safe, dist, batch = problem.family, problem.safe_set, problem.disturbance, problem.batch
    if not isinstance(safe, ConstrainedZonotope):
        raise TypeError("synth_cz needs a constrained zonotope safe set")
    n, T = fam.n, fam.T
    nvk = T * n
    gf = compute_Gf(fam, safe) if gf is None else gf
    G_const, G_map, c_const, c_map, A1, b1 = _next_state_parts(fam, safe, dist, gf)
    outer = setops.cz_scale_level_set(safe, problem.lam)
    # extra variables: vec(V_K), then (optionally) S (T x n) and rho
    n_extra = nvk + (nvk + 1 if minimize_norm else 0)
    pad = lambda M: sp.hstack([sp.csr_matrix(M), sp.csr_matrix((M.shape[0], n_extra - nvk))])  # noqa: E731
    eq_A, eq_b, ub_A, ub_b, layout = setops.inclusion_program(
        outer, G_const, c_const, A1, b1, n_extra=n_extra,
        G1_map=pad(G_map), c1_map=pad(c_map))
    nvar = eq_A.shape[1]
    v0 = layout["v"].start

    def on_v(M):
        M = sp.csr_matrix(M)
        return sp.hstack([sp.csr_matrix((M.shape[0], v0)), M,
                          sp.csr_matrix((M.shape[0], nvar - v0 - M.shape[1]))], format="csr")

    eq_rows = [eq_A, on_v(sp.kron(sp.eye(n), batch.X0))]
    eq_rhs = [eq_b, vec(np.eye(n))]
    ub_rows, ub_rhs = [ub_A], [ub_b]
    obj = np.zeros(nvar)
    lower = np.full(nvar, -np.inf)
    lower[layout["SG"]] = 0.0
    lower[layout["SL"]] = 0.0
    if minimize_norm:
        I = sp.eye(nvk)
        ub_rows += [on_v(sp.hstack([I, -I, sp.csr_matrix((nvk, 1))])),
                    on_v(sp.hstack([-I, -I, sp.csr_matrix((nvk, 1))])),
                    on_v(sp.hstack([sp.csr_matrix((T, nvk)),
                                    sp.kron(np.ones((1, n)), sp.eye(T)),
                                    -np.ones((T, 1))]))]
        ub_rhs += [np.zeros(2 * nvk + T)]
        obj[v0 + 2 * nvk] = 1.0
    prog = _lp.LinearProgram(obj, sp.vstack(ub_rows), np.concatenate(ub_rhs),
                             sp.vstack(eq_rows), np.concatenate(eq_rhs), lower=lower)
    out = _lp.solve(prog)
    diag = {"d": gf.d, "n_vars": nvar, "n_eq": prog.eq_A.shape[0], "n_ineq": prog.ineq_A.shape[0]}
    if out.status is _lp.LPStatus.INFEASIBLE:
        return Infeasible("inclusion LP infeasible", diag)
    if not out.optimal:
        raise LPError(f"synthesis LP returned {out.status.value}: {out.message}")
    x = out.solution
    V_K = x[layout["v"]][:nvk].reshape(T, n, order="F")
    s1, s2 = G_const.shape[1], outer.n_generators
    cert = setops.unpack_certificate(x, layout, s1, s2, A1.shape[0], outer.n_constraints)
    inner = next_state_set(fam, V_K, safe, dist, gf)
    diag.update(residuals=cert.residuals(inner, outer), lp_residual=out.residual,
                gain_residual=float(np.max(np.abs(batch.X0 @ V_K - np.eye(n)))))
    return SynthesisCertificate(V_K, batch.U0 @ V_K, problem.lam, None, cert.P,
                                cert.Gamma, cert.L, diag)


# ---------------------------------------------------------------- polytope

def compute_y(H, G_h, mode: str = "support"):
    """Disturbance term per facet.

    ``"support"`` gives ``sum_i |H_j G_h_i|``, the exact support of the
    generator part of the disturbance zonotope along ``H_j``. ``"literal"``
    gives ``|sum_i H_j G_h_i|``, which coincides with it when every
    ``H_j G_h_i`` has the same sign and is smaller otherwise.
    """
    HG = np.asarray(H, dtype=float) @ np.asarray(G_h, dtype=float)
    if mode == "support":
        return np.abs(HG).sum(axis=1)
    if mode == "literal":
        return np.abs(HG.sum(axis=1))
    raise ValueError(f"unknown y mode {mode!r}")


def _l_coefficients(fam: ClosedLoopFamily, H):
    """``coef[j, t, i]``: coefficient of ``beta_i`` in entry ``t`` of ``sum_i beta_i H_j G_w_i``."""
    HG = np.einsum("jr,irt->jti", H, fam.Gw)
    coef = np.zeros(HG.shape[:2] + (fam.s_c,))
    coef[:, :, :HG.shape[2]] = HG
    return coef


def compute_l(fam: ClosedLoopFamily, H, M_x: float, constrained: bool = True,
              norm: str = "l1"):
    """Bound ``l_j`` on the disturbance-uncertainty term for each facet ``j``.

    Entry ``t`` of ``a_j(beta) = sum_i beta_i H_j G_w_i`` is linear in
    ``beta``, so its largest magnitude over ``{|beta| <= 1, A_C beta = B_C}`` is
    found by two LPs (one per sign). ``norm="l1"`` sums these maxima over
    ``t``, which bounds ``max ||a_j(beta)||_1``, the dual of the row-sum norm
    used for ``V_K``. ``norm="linf"`` takes their maximum instead. Identical
    objectives (up to sign) are solved once. ``constrained=False`` drops the
    equality constraint, leaving the closed form ``sum_i |coef_i|``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if norm not in ("l1", "linf"):
        raise ValueError(f"unknown norm {norm!r}")
    coef = _l_coefficients(fam, H)
    q, T, s = coef.shape
    E, f = fam.constraint_equations(drop_trivial=True)
    peak = np.zeros((q, T))
    if not constrained or E.shape[0] == 0:
        peak = np.abs(coef).sum(axis=2)
    else:
        base = _lp.LinearProgram(np.zeros(s), eq_A=E, eq_b=f, lower=-np.ones(s), upper=np.ones(s))
        cache = {}
        for j in range(q):
            for t in range(T):
                c = coef[j, t]
                if not np.any(c):
                    continue
                key = tuple(np.round(c, 15))
                neg = tuple(np.round(-c, 15))
                if key in cache:
                    peak[j, t] = cache[key]
                    continue
                if neg in cache:
                    peak[j, t] = cache[neg]
                    continue
                vals = []
                for sign in (1.0, -1.0):
                    out = _lp.solve(base.with_objective(-sign * c))
                    if out.status is _lp.LPStatus.INFEASIBLE:
                        raise EmptySetError("family constraint set is empty")
                    if not out.optimal:
                        raise LPError(f"l-bound LP returned {out.status.value}")
                    vals.append(-out.objective_value)
                cache[key] = max(vals[0], vals[1], 0.0)
                peak[j, t] = cache[key]
    per_row = peak.sum(axis=1) if norm == "l1" else peak.max(axis=1)
    return M_x * per_row


@dataclass(frozen=True)
class PolytopeLP:
    program: _lp.LinearProgram
    layout: dict
    q: int
    T: int
    n: int


def build_polytope_lp(problem: SynthesisProblem, l, y) -> PolytopeLP:
    """``min rho`` over ``(P >= 0, V_K, rho, S)`` with the facet, duality and norm constraints."""
    fam, safe, batch = problem.family, problem.safe_set, problem.batch
    H, h = safe.H, safe.h
    q, n, T = H.shape[0], fam.n, fam.T
    nP, nV = q * q, T * n
    layout = {"P": slice(0, nP), "V": slice(nP, nP + nV), "rho": nP + nV,
              "S": slice(nP + nV + 1, nP + 2 * nV + 1)}
    nvar = nP + 2 * nV + 1

    def row(parts, rows):
        blocks = []
        for name, size in (("P", nP), ("V", nV), ("rho", 1), ("S", nV)):
            blocks.append(sp.csr_matrix(parts[name]) if name in parts
                          else sp.csr_matrix((rows, size)))
        return sp.hstack(blocks, format="csr")

    HM = H @ fam.X1_minus_Cw
    rhs = problem.lam * h - H @ problem.disturbance.center - y
    ub = [row({"P": sp.kron(h.reshape(1, -1), sp.eye(q)), "rho": np.asarray(l).reshape(-1, 1)}, q),
          row({"V": sp.eye(nV), "S": -sp.eye(nV)}, nV),
          row({"V": -sp.eye(nV), "S": -sp.eye(nV)}, nV),
          row({"S": sp.kron(np.ones((1, n)), sp.eye(T)), "rho": -np.ones((T, 1))}, T)]
    ub_b = np.concatenate([rhs, np.zeros(2 * nV + T)])
    eq = [row({"P": sp.kron(sp.csr_matrix(H.T), sp.eye(q)), "V": -sp.kron(sp.eye(n), HM)}, q * n),
          row({"V": sp.kron(sp.eye(n), batch.X0)}, n * n)]
    eq_b = np.concatenate([np.zeros(q * n), vec(np.eye(n))])
    lower = np.full(nvar, -np.inf)
    lower[layout["P"]] = 0.0
    lower[layout["S"]] = 0.0
    lower[layout["rho"]] = 0.0
    obj = np.zeros(nvar)
    obj[layout["rho"]] = 1.0
    prog = _lp.LinearProgram(obj, sp.vstack(ub), ub_b, sp.vstack(eq), eq_b, lower=lower)
    return PolytopeLP(prog, layout, q, T, n)


def polytope_terms(problem: SynthesisProblem, constrained=True, norm="l1", y_mode="support"):
    """``(M_x, l, y)`` for the polytope LP."""
    _, M_x = setops.polytope_interval_hull(problem.safe_set)
    l = compute_l(problem.family, problem.safe_set.H, M_x, constrained, norm)
    y = compute_y(problem.safe_set.H, problem.disturbance.generators, y_mode)
    return M_x, l, y


def synth_polytope(problem: SynthesisProblem, constrained: bool = True, norm: str = "l1",
                   y_mode: str = "support", terms=None):
    """Minimum-``rho`` gain making the polytope λ-contractive for the whole family.

    ``terms`` may carry precomputed ``(M_x, l, y)`` to share across λ values.
    """
    if not isinstance(problem.safe_set, Polytope):
        raise TypeError("synth_polytope needs a Polytope safe set")
    M_x, l, y = polytope_terms(problem, constrained, norm, y_mode) if terms is None else terms
    built = build_polytope_lp(problem, l, y)
    out = _lp.solve(built.program)
    diag = {"M_x": M_x, "l": l, "y": y, "constrained": constrained, "norm": norm}
    if out.status is _lp.LPStatus.INFEASIBLE:
        return Infeasible("contractivity LP infeasible", diag)
    if not out.optimal:
        raise LPError(f"contractivity LP returned {out.status.value}: {out.message}")
    x = out.solution
    lay = built.layout
    q, T, n = built.q, built.T, built.n
    P = x[lay["P"]].reshape(q, q, order="F")
    V_K = x[lay["V"]].reshape(T, n, order="F")
    rho = float(x[lay["rho"]])
    H = problem.safe_set.H
    diag.update(
        lp_residual=out.residual,
        dual_residual=float(np.max(np.abs(P @ H - H @ problem.family.X1_minus_Cw @ V_K))),
        gain_residual=float(np.max(np.abs(problem.batch.X0 @ V_K - np.eye(n)))),
        norm_VK=float(np.abs(V_K).sum(axis=1).max()),
    )
    return SynthesisCertificate(V_K, problem.batch.U0 @ V_K, problem.lam, rho, P,
                                diagnostics=diag)


# ------------------------------------------------------------ verification

@dataclass(frozen=True)
class ContractivityReport:
    trials: int
    violations: int
    max_violation: float
    worst_case_margin: float | None = None

    @property
    def pass_rate(self):
        return 1.0 - self.violations / self.trials if self.trials else 1.0

    @property
    def passed(self):
        ok = self.violations == 0
        if self.worst_case_margin is not None:
            ok = ok and self.worst_case_margin <= 0
        return ok


def _polytope_interior_point(p: Polytope):
    """Chebyshev center."""
    norms = np.linalg.norm(p.H, axis=1)
    c = np.zeros(p.dim + 1)
    c[-1] = -1.0
    A = np.hstack([p.H, norms[:, None]])
    out = _lp.solve(_lp.LinearProgram(c, A, p.h, lower=np.r_[np.full(p.dim, -np.inf), 0.0]))
    if not out.optimal:
        raise EmptySetError("polytope has no interior")
    return out.solution[:-1]


def sample_polytope(p: Polytope, rng, count, boundary_fraction=0.5):
    """Ray samples from the Chebyshev center; a share lands exactly on the boundary."""
    c0 = _polytope_interior_point(p)
    d = rng.standard_normal((count, p.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    Hd = d @ p.H.T
    slack = p.h - p.H @ c0
    with np.errstate(divide="ignore"):
        ratio = np.where(Hd > 1e-15, slack / np.where(Hd > 1e-15, Hd, 1.0), np.inf)
    tmax = ratio.min(axis=1)
    on_edge = rng.random(count) < boundary_fraction
    scale = np.where(on_edge, 1.0, rng.random(count) ** (1.0 / p.dim))
    return c0 + (tmax * scale)[:, None] * d


def worst_case_polytope_margin(A_K, p: Polytope, dist: Zonotope, lam):
    """``max_j (max_{x in P} H_j A_K x + h_w(H_j)) - lam h_j`` by one LP per facet."""
    H, h = p.H, p.h
    worst = -np.inf
    base = _lp.LinearProgram(np.zeros(p.dim), H, h)
    for j in range(H.shape[0]):
        out = _lp.solve(base.with_objective(-(H[j] @ A_K)))
        if not out.optimal:
            raise LPError("worst-case LP failed")
        val = -out.objective_value + H[j] @ dist.center + np.abs(H[j] @ dist.generators).sum()
        worst = max(worst, val - lam * h[j])
    return float(worst)


def verify_contractive(K, sys: LinearSystem, safe_set, lam: float, trials: int = 10_000,
                       rng=None, tol: float = 1e-7) -> ContractivityReport:
    """Empirical one-step check against the true system.

    States are drawn from the safe set with half of them on its boundary;
    disturbances are box-uniform for half the trials and box corners for the
    rest. For polytopes the report also carries the exact worst-case margin.
    """
    if isinstance(K, SynthesisCertificate):
        K = K.K
    rng = np.random.default_rng() if rng is None else rng
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A_K = sys.A + sys.B @ K
    dist = sys.disturbance
    z = rng.uniform(-1, 1, size=(trials, dist.n_generators))
    corners = rng.random(trials) < 0.5
    z[corners] = np.sign(z[corners])
    W = z @ dist.generators.T + dist.center
    if isinstance(safe_set, Polytope):
        X = sample_polytope(safe_set, rng, trials)
        Xn = X @ A_K.T + W
        excess = (Xn @ safe_set.H.T - lam * safe_set.h).max(axis=1)
        margin = worst_case_polytope_margin(A_K, safe_set, dist, lam)
        return ContractivityReport(trials, int(np.sum(excess > tol)), float(excess.max()), margin)
    safe = safe_set.to_constrained() if isinstance(safe_set, Zonotope) else safe_set
    Z = setops.sample_latent(safe.con_A, safe.con_b, safe.n_generators, rng, trials)
    edge = rng.random(trials) < 0.5
    if safe.n_constraints == 0 and np.any(edge):
        Z[edge] = Z[edge] / np.abs(Z[edge]).max(axis=1, keepdims=True)
    X = Z @ safe.generators.T + safe.center
    Xn = X @ A_K.T + W
    target = setops.cz_scale_level_set(safe, lam)
    res = np.array([setops.membership_residual(x, target)[0] for x in Xn])
    return ContractivityReport(trials, int(np.sum(res > tol)), float(res.max()))


def closed_loop_member(fam: ClosedLoopFamily, cert: SynthesisCertificate, A_K, tol=1e-6) -> bool:
    """Whether ``A_K`` lies in the certified closed-loop family."""
    return setops.cmz_membership(A_K, instantiate_Mcl(fam, cert.V_K), tol)



def _plain(v):
    if isinstance(v, np.ndarray):
        return array_to_doc(v)
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def certificate_to_dict(cert: SynthesisCertificate | Infeasible) -> dict:
    """JSON-ready document with every array and diagnostic."""
    diag = {k: _plain(v) for k, v in cert.diagnostics.items()}
    if not cert:
        return {"type": "Infeasible", "reason": cert.reason, "diagnostics": diag}
    doc = {"type": "SynthesisCertificate", "lam": float(cert.lam),
           "rho": None if cert.rho is None else float(cert.rho), "diagnostics": diag}
    for name in ("V_K", "K", "P", "Gamma", "L"):
        val = getattr(cert, name)
        doc[name] = None if val is None else array_to_doc(val)
    return doc


def certificate_from_dict(doc: dict) -> SynthesisCertificate:
    if doc.get("type") != "SynthesisCertificate":
        raise ShapeError("not a certificate document")
    arrays = {k: None if doc[k] is None else array_from_doc(doc[k])
              for k in ("V_K", "K", "P", "Gamma", "L")}
    diag = {k: array_from_doc(v) if isinstance(v, dict) and "shape" in v else v
            for k, v in doc.get("diagnostics", {}).items()}
    return SynthesisCertificate(lam=doc["lam"], rho=doc["rho"], diagnostics=diag, **arrays)
