"""Value types for zonotopes, constrained (matrix) zonotopes, intervals and polytopes.

All types are immutable: arrays are copied to float64 and marked read-only on
construction. Empty generator/constraint blocks are represented by zero-size
arrays rather than ``None`` so that shapes always compose.

Conventions
-----------
* Vector sets store generators column-wise, ``G`` has shape ``(n, s)``.
* Matrix sets store generators stacked along the first axis, shape
  ``(s, n, p)``; constraint blocks likewise ``(s, n_c, p_c)``.
* ``Vec`` flattens matrices column by column (Fortran order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError


def _frozen(a, ndim, name):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    a.setflags(write=False)
    return a


def vec(M):
    """Column-stacking vectorization."""
    return np.asarray(M).reshape(-1, order="F")


@dataclass(frozen=True, eq=False)
class Zonotope:
    """``<G, c> = {G z + c : |z|_inf <= 1}``."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = _frozen(self.center, 1, "center")
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((c.size, 0))
        G = _frozen(G, 2, "generators")
        if G.shape[0] != c.size:
            raise ShapeError(f"generator rows {G.shape[0]} != center length {c.size}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self):
        return self.center.size

    @property
    def n_generators(self):
        return self.generators.shape[1]

    def to_constrained(self) -> "ConstrainedZonotope":
        return ConstrainedZonotope(self.generators, self.center)

    def scaled(self, alpha):
        return Zonotope(self.center, alpha * self.generators)


@dataclass(frozen=True, eq=False)
class ConstrainedZonotope:
    """``<G, c, A, b> = {G z + c : |z|_inf <= 1, A z = b}``.

    May represent the empty set; use :func:`zonosafe.setops.is_empty`.
    """

    generators: np.ndarray
    center: np.ndarray
    con_A: np.ndarray = None
    con_b: np.ndarray = None

    def __post_init__(self):
        c = _frozen(self.center, 1, "center")
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((c.size, G.shape[1] if G.ndim == 2 else 0))
        G = _frozen(G, 2, "generators")
        if G.shape[0] != c.size:
            raise ShapeError(f"generator rows {G.shape[0]} != center length {c.size}")
        s = G.shape[1]
        A = np.zeros((0, s)) if self.con_A is None else np.asarray(self.con_A, dtype=float)
        if A.size == 0 and A.ndim != 2:
            A = np.zeros((0, s))
        if A.ndim == 2 and A.shape[0] == 0:
            A = np.zeros((0, s))
        A = _frozen(A, 2, "con_A")
        b = np.zeros(A.shape[0]) if self.con_b is None else self.con_b
        b = _frozen(np.asarray(b, dtype=float).reshape(-1), 1, "con_b")
        if A.shape[1] != s:
            raise ShapeError(f"con_A has {A.shape[1]} columns but there are {s} generators")
        if b.size != A.shape[0]:
            raise ShapeError(f"con_b length {b.size} != con_A rows {A.shape[0]}")
        object.__setattr__(self, "generators", G)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "con_A", A)
        object.__setattr__(self, "con_b", b)

    @property
    def dim(self):
        return self.center.size

    @property
    def n_generators(self):
        return self.generators.shape[1]

    @property
    def n_constraints(self):
        return self.con_A.shape[0]

    @classmethod
    def from_zonotope(cls, z: Zonotope):
        return cls(z.generators, z.center)

    def latent_equations(self):
        return self.con_A, self.con_b

    def point(self, zeta):
        return self.generators @ np.asarray(zeta, dtype=float) + self.center


@dataclass(frozen=True, eq=False)
class MatrixZonotope:
    """``<G, C> = {C + sum_i G_i z_i : |z|_inf <= 1}`` over ``n x p`` matrices."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        C = _frozen(self.center, 2, "center")
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((0,) + C.shape)
        G = _frozen(G, 3, "generators")
        if G.shape[1:] != C.shape:
            raise ShapeError(f"generator shape {G.shape[1:]} != center shape {C.shape}")
        object.__setattr__(self, "center", C)
        object.__setattr__(self, "generators", G)

    @property
    def shape(self):
        return self.center.shape

    @property
    def n_generators(self):
        return self.generators.shape[0]

    def point(self, zeta):
        return self.center + np.tensordot(np.asarray(zeta, dtype=float), self.generators, axes=1)

    def to_constrained(self) -> "ConstrainedMatrixZonotope":
        return ConstrainedMatrixZonotope(self.center, self.generators)


@dataclass(frozen=True, eq=False)
class ConstrainedMatrixZonotope:
    """``<G, C, A, B>``: matrices ``C + sum_i G_i z_i`` with ``sum_i A_i z_i = B``.

    ``generators`` has shape ``(s, n, p)``, ``con_A`` ``(s, n_c, p_c)`` and
    ``con_B`` ``(n_c, p_c)``. An unconstrained set has ``n_c = p_c = 0``.
    Zero generators are kept: their positions align constraint blocks.
    """

    center: np.ndarray
    generators: np.ndarray
    con_A: np.ndarray = None
    con_B: np.ndarray = None

    def __post_init__(self):
        C = _frozen(self.center, 2, "center")
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0 and G.ndim != 3:
            G = np.zeros((0,) + C.shape)
        G = _frozen(G, 3, "generators")
        if G.shape[1:] != C.shape:
            raise ShapeError(f"generator shape {G.shape[1:]} != center shape {C.shape}")
        s = G.shape[0]
        if self.con_B is None:
            B = np.zeros((0, 0))
        else:
            B = np.asarray(self.con_B, dtype=float)
            if B.ndim != 2:
                raise ShapeError(f"con_B must be a matrix, got shape {B.shape}")
        if self.con_A is None:
            A = np.zeros((s,) + B.shape)
        else:
            A = np.asarray(self.con_A, dtype=float)
            if A.ndim != 3:
                raise ShapeError(f"con_A must be a stack of matrices, got shape {A.shape}")
        A = _frozen(A, 3, "con_A")
        B = _frozen(B, 2, "con_B")
        if A.shape[0] != s:
            raise ShapeError(f"{A.shape[0]} constraint blocks for {s} generators")
        if A.shape[1:] != B.shape:
            raise ShapeError(f"constraint block shape {A.shape[1:]} != con_B shape {B.shape}")
        object.__setattr__(self, "center", C)
        object.__setattr__(self, "generators", G)
        object.__setattr__(self, "con_A", A)
        object.__setattr__(self, "con_B", B)

    @property
    def shape(self):
        return self.center.shape

    @property
    def n_generators(self):
        return self.generators.shape[0]

    @property
    def constraint_shape(self):
        return self.con_B.shape

    @classmethod
    def from_matrix_zonotope(cls, m: MatrixZonotope):
        return cls(m.center, m.generators)

    def latent_equations(self, drop_trivial=False):
        """Constraints as ``E z = f`` with ``E[:, i] = Vec(A_i)`` and ``f = Vec(B)``.

        With ``drop_trivial`` rows that are zero on both sides are removed.
        """
        s = self.n_generators
        rows = self.con_B.size
        # Vec per block is column-major: transpose each block before flattening.
        E = np.transpose(self.con_A, (0, 2, 1)).reshape(s, rows).T
        f = vec(self.con_B)
        if drop_trivial and rows:
            keep = np.any(E != 0, axis=1) | (f != 0)
            E, f = E[keep], f[keep]
        return E, f

    def point(self, zeta):
        return self.center + np.tensordot(np.asarray(zeta, dtype=float), self.generators, axes=1)

    def generator_matrix(self):
        """Generators flattened to the columns of an ``(n*p) x s`` matrix."""
        s = self.n_generators
        return np.transpose(self.generators, (0, 2, 1)).reshape(s, self.center.size).T

    def to_constrained_zonotope(self) -> ConstrainedZonotope:
        """The same set viewed through ``Vec``."""
        E, f = self.latent_equations()
        return ConstrainedZonotope(self.generator_matrix(), vec(self.center), E, f)


@dataclass(frozen=True, eq=False)
class MatrixInterval:
    """Element-wise bounds ``lower <= X <= upper`` (vectors are allowed)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise ShapeError(f"interval bounds differ in shape: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ShapeError("interval lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.upper + self.lower)

    def contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return bool(np.all(X >= self.lower - tol) and np.all(X <= self.upper + tol))

    def is_subset_of(self, other: "MatrixInterval", tol=0.0):
        return bool(np.all(self.lower >= other.lower - tol) and np.all(self.upper <= other.upper + tol))


@dataclass(frozen=True, eq=False)
class Polytope:
    """``P(H, h) = {x : H x <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = _frozen(self.H, 2, "H")
        h = _frozen(np.asarray(self.h, dtype=float).reshape(-1), 1, "h")
        if h.size != H.shape[0]:
            raise ShapeError(f"h length {h.size} != H rows {H.shape[0]}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.H.shape[1]

    def contains(self, x, tol=0.0):
        """Membership for a point ``(n,)`` or a batch ``(k, n)``."""
        x = np.asarray(x, dtype=float)
        slack = x @ self.H.T - self.h
        return np.all(slack <= tol, axis=-1)

    def scaled(self, lam):
        return Polytope(self.H, lam * self.h)


@dataclass(frozen=True, eq=False)
class InclusionCertificate:
    """Witness ``(Gamma, L, P)`` that one constrained zonotope contains another."""

    Gamma: np.ndarray
    L: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Gamma", _frozen(self.Gamma, 2, "Gamma"))
        object.__setattr__(self, "L", _frozen(np.asarray(self.L, dtype=float).reshape(-1), 1, "L"))
        object.__setattr__(self, "P", _frozen(self.P, 2, "P"))

    def residuals(self, inner: ConstrainedZonotope, outer: ConstrainedZonotope):
        """Violation of each of the five inclusion relations."""
        G, L, P = self.Gamma, self.L, self.P
        return {
            "center": float(np.max(np.abs(outer.center - inner.center - outer.generators @ L), initial=0.0)),
            "generators": float(np.max(np.abs(inner.generators - outer.generators @ G), initial=0.0)),
            "constraints": float(np.max(np.abs(P @ inner.con_A - outer.con_A @ G), initial=0.0)),
            "offsets": float(np.max(np.abs(P @ inner.con_b - outer.con_b - outer.con_A @ L), initial=0.0)),
            "norm": float(np.max(np.abs(G).sum(axis=1) + np.abs(L) - 1.0, initial=-np.inf)),
        }

    def is_valid(self, inner, outer, tol=1e-7):
        r = self.residuals(inner, outer)
        return all(v <= tol for v in r.values())
