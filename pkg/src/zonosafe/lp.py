"""Single linear-programming contract used by every LP in the package.

All constructions are compiled into the canonical form::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lower <= x <= upper

and handed to :func:`solve`. The default adapter is scipy's HiGHS interface.
Setting the environment variable ``ZONOSAFE_LP_DUMP`` to a directory (or
calling :func:`set_dump_dir`) writes every solved program to that directory
as a JSON document for offline inspection.
"""

from __future__ import annotations

import enum
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import ShapeError

DEFAULT_TOL = 1e-6

_dump_dir: Path | None = None
_dump_counter = itertools.count()


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


def _as_matrix(a, ncols):
    if a is None:
        return sp.csr_matrix((0, ncols))
    if sp.issparse(a):
        return sp.csr_matrix(a, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else a.reshape(0, ncols)
    return sp.csr_matrix(a)


def _as_vector(b, n):
    if b is None:
        return np.zeros(n)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass(frozen=True)
class LinearProgram:
    """A linear program in canonical form.

    A zero objective denotes a pure feasibility problem. ``lower``/``upper``
    default to a free variable (``-inf``/``+inf``).
    """

    objective: np.ndarray
    ineq_A: sp.csr_matrix = None
    ineq_b: np.ndarray = None
    eq_A: sp.csr_matrix = None
    eq_b: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        n = c.size
        A_ub = _as_matrix(self.ineq_A, n)
        A_eq = _as_matrix(self.eq_A, n)
        b_ub = _as_vector(self.ineq_b, A_ub.shape[0])
        b_eq = _as_vector(self.eq_b, A_eq.shape[0])
        lo = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if A_ub.shape[1] != n or A_eq.shape[1] != n:
            raise ShapeError(
                f"constraint matrices must have {n} columns, got {A_ub.shape} and {A_eq.shape}")
        if b_ub.size != A_ub.shape[0] or b_eq.size != A_eq.shape[0]:
            raise ShapeError("right-hand side length does not match constraint rows")
        for arr in (c, b_ub, b_eq, A_ub.data, A_eq.data):
            if not np.all(np.isfinite(arr)):
                raise ShapeError("LP coefficients must be finite")
        if np.any(lo > hi):
            raise ShapeError("variable lower bound exceeds upper bound")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "ineq_A", A_ub)
        object.__setattr__(self, "ineq_b", b_ub)
        object.__setattr__(self, "eq_A", A_eq)
        object.__setattr__(self, "eq_b", b_eq)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_vars(self):
        return self.objective.size

    def with_objective(self, c):
        return LinearProgram(c, self.ineq_A, self.ineq_b, self.eq_A, self.eq_b,
                             self.lower, self.upper)

    def residuals(self, x):
        """Maximum violation of inequalities, equalities and bounds at ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.ineq_A.shape[0]:
            worst = max(worst, float(np.max(self.ineq_A @ x - self.ineq_b, initial=0.0)))
        if self.eq_A.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.eq_A @ x - self.eq_b))))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)),
                    float(np.max(x - self.upper, initial=0.0)))
        return worst

    def to_dict(self):
        def mat(m):
            m = m.tocoo()
            return {"shape": list(m.shape), "row": m.row.tolist(),
                    "col": m.col.tolist(), "data": m.data.tolist()}

        def vec(v):
            return [None if not np.isfinite(e) else float(e) for e in v]

        return {
            "type": "LinearProgram",
            "objective": self.objective.tolist(),
            "ineq_A": mat(self.ineq_A), "ineq_b": self.ineq_b.tolist(),
            "eq_A": mat(self.eq_A), "eq_b": self.eq_b.tolist(),
            "lower": vec(self.lower), "upper": vec(self.upper),
        }


@dataclass(frozen=True)
class LPOutcome:
    status: LPStatus
    solution: np.ndarray | None = None
    objective_value: float = float("nan")
    residual: float = float("nan")
    message: str = field(default="", compare=False)

    @property
    def optimal(self):
        return self.status is LPStatus.OPTIMAL


def set_dump_dir(path):
    """Enable (``path``) or disable (``None``) dumping every LP to disk."""
    global _dump_dir
    _dump_dir = None if path is None else Path(path)
    if _dump_dir is not None:
        _dump_dir.mkdir(parents=True, exist_ok=True)


def _maybe_dump(lp, outcome):
    target = _dump_dir
    if target is None and os.environ.get("ZONOSAFE_LP_DUMP"):
        target = Path(os.environ["ZONOSAFE_LP_DUMP"])
        target.mkdir(parents=True, exist_ok=True)
    if target is None:
        return
    doc = lp.to_dict()
    doc["outcome"] = {"status": outcome.status.value,
                      "objective_value": outcome.objective_value,
                      "residual": outcome.residual}
    path = target / f"lp_{os.getpid()}_{next(_dump_counter):07d}.json"
    path.write_text(json.dumps(doc))


_SCIPY_STATUS = {0: LPStatus.OPTIMAL, 2: LPStatus.INFEASIBLE, 3: LPStatus.UNBOUNDED}
_ATTEMPTS = (("highs", True), ("highs", False), ("highs-ds", False), ("highs-ipm", False))


def solve(lp: LinearProgram, tol: float = DEFAULT_TOL) -> LPOutcome:
    """Solve ``lp`` with HiGHS.

    An ``OPTIMAL`` outcome is only reported when the recomputed constraint
    violation is at most ``tol * max(1, |rhs|_inf)``; otherwise the status is
    ``NUMERICAL_FAILURE``. Failures are statuses, never exceptions.
    """
    bounds = np.column_stack([np.where(np.isfinite(lp.lower), lp.lower, np.nan),
                              np.where(np.isfinite(lp.upper), lp.upper, np.nan)])
    bounds = [(None if np.isnan(lo) else lo, None if np.isnan(hi) else hi) for lo, hi in bounds]
    common = dict(
        A_ub=lp.ineq_A if lp.ineq_A.shape[0] else None,
        b_ub=lp.ineq_b if lp.ineq_A.shape[0] else None,
        A_eq=lp.eq_A if lp.eq_A.shape[0] else None,
        b_eq=lp.eq_b if lp.eq_A.shape[0] else None,
        bounds=bounds,
    )
    # HiGHS occasionally reports an unknown model status on degenerate
    # programs, and its presolve can declare feasible but degenerate programs
    # infeasible. Unknown statuses fall through to other configurations and
    # presolved infeasibility is confirmed without presolve.
    for method, presolve in _ATTEMPTS:
        res = linprog(lp.objective, method=method,
                      options={"primal_feasibility_tolerance": 1e-9,
                               "dual_feasibility_tolerance": 1e-9,
                               "presolve": presolve},
                      **common)
        if res.status in _SCIPY_STATUS and not (res.status == 2 and presolve):
            break
    status = _SCIPY_STATUS.get(res.status, LPStatus.NUMERICAL_FAILURE)
    if status is LPStatus.OPTIMAL:
        x = np.asarray(res.x, dtype=float)
        resid = lp.residuals(x)
        scale = max(1.0, float(np.max(np.abs(lp.eq_b), initial=0.0)),
                    float(np.max(np.abs(lp.ineq_b), initial=0.0)))
        if resid > tol * scale:
            outcome = LPOutcome(LPStatus.NUMERICAL_FAILURE, x, float(res.fun), resid,
                                f"residual {resid:.3e} exceeds tolerance")
        else:
            outcome = LPOutcome(status, x, float(res.fun), resid, res.message)
    else:
        outcome = LPOutcome(status, message=res.message)
    _maybe_dump(lp, outcome)
    return outcome


def solve_many(lp: LinearProgram, objectives, tol: float = DEFAULT_TOL):
    """Solve ``lp`` once per objective row; constraints are shared."""
    objectives = np.atleast_2d(np.asarray(objectives, dtype=float))
    return [solve(lp.with_objective(c), tol) for c in objectives]
