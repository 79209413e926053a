"""Simulation of the true system and assembly of data matrices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import RankDeficiencyError, ShapeError
from .serialization import array_from_doc, array_to_doc
from .sets import MatrixZonotope, Zonotope

RANK_TOL = 1e-10


@dataclass(frozen=True)
class LinearSystem:
    """``x(t+1) = A x(t) + B u(t) + w(t)`` with ``w(t)`` in ``disturbance``.

    Only the simulator reads ``A`` and ``B``; synthesis works from data.
    """

    A: np.ndarray
    B: np.ndarray
    disturbance: Zonotope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ShapeError(f"incompatible A {A.shape} and B {B.shape}")
        if self.disturbance.dim != A.shape[0]:
            raise ShapeError("disturbance dimension must equal the state dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def theta(self):
        """``[A B]``."""
        return np.hstack([self.A, self.B])


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray          # n x (N+1)
    inputs: np.ndarray          # m x N
    disturbances: np.ndarray    # n x N
    latents: np.ndarray = field(default=None, repr=False)  # s_w x N

    @property
    def steps(self):
        return self.inputs.shape[1]


def sample_disturbance_latents(s_w, steps, rng, mode="uniform"):
    """Latent variables for ``steps`` disturbance draws, shape ``(s_w, steps)``.

    ``"uniform"`` draws from the unit box; ``"corners"`` draws random vertices.
    """
    if mode == "uniform":
        return rng.uniform(-1.0, 1.0, size=(s_w, steps))
    if mode == "corners":
        return rng.choice([-1.0, 1.0], size=(s_w, steps))
    raise ValueError(f"unknown disturbance mode {mode!r}")


def simulate(sys: LinearSystem, x0, steps: int, rng=None, inputs=None, gain=None,
             excitation=0.0, disturbance_mode="uniform", disturbances=None) -> Trajectory:
    """Roll the system forward ``steps`` times.

    The input is ``u(t) = inputs[:, t]`` if given, otherwise
    ``gain @ x(t) + e(t)`` with ``e(t)`` uniform in ``[-excitation, excitation]``
    (``gain`` defaults to zero). ``excitation`` may also be an ``m x steps``
    array, used verbatim as ``e``. Passing a recorded ``disturbances`` array
    replays it exactly.
    """
    rng = np.random.default_rng() if rng is None else rng
    n, m = sys.n, sys.m
    x = np.empty((n, steps + 1))
    x[:, 0] = np.asarray(x0, dtype=float).reshape(n)
    if disturbances is None:
        z = sample_disturbance_latents(sys.disturbance.n_generators, steps, rng, disturbance_mode)
        W = sys.disturbance.generators @ z + sys.disturbance.center[:, None]
    else:
        W = np.asarray(disturbances, dtype=float).reshape(n, steps)
        z = None
    if inputs is not None:
        U = np.asarray(inputs, dtype=float).reshape(m, steps)
    else:
        U = np.empty((m, steps))
    K = np.zeros((m, n)) if gain is None else np.asarray(gain, dtype=float).reshape(m, n)
    E = None
    if np.ndim(excitation) > 0:
        E = np.asarray(excitation, dtype=float).reshape(m, steps)
    for t in range(steps):
        if inputs is None:
            U[:, t] = K @ x[:, t]
            if E is not None:
                U[:, t] += E[:, t]
            elif excitation:
                U[:, t] += rng.uniform(-excitation, excitation, size=m)
        x[:, t + 1] = sys.A @ x[:, t] + sys.B @ U[:, t] + W[:, t]
    return Trajectory(x, U, W, z)


@dataclass(frozen=True)
class DataBatch:
    """Input-state data of one experiment: ``X1 = A X0 + B U0 + W0``."""

    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    tag: str = "target-task"

    def __post_init__(self):
        U0 = np.atleast_2d(np.asarray(self.U0, dtype=float))
        X0 = np.atleast_2d(np.asarray(self.X0, dtype=float))
        X1 = np.atleast_2d(np.asarray(self.X1, dtype=float))
        if not (U0.shape[1] == X0.shape[1] == X1.shape[1]):
            raise ShapeError("U0, X0 and X1 must have the same number of columns")
        if X0.shape[0] != X1.shape[0]:
            raise ShapeError("X0 and X1 must have the same number of rows")
        for name, arr in (("U0", U0), ("X0", X0), ("X1", X1)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self):
        return self.X0.shape[1]

    @property
    def n(self):
        return self.X0.shape[0]

    @property
    def m(self):
        return self.U0.shape[0]

    @property
    def D0(self):
        return np.vstack([self.X0, self.U0])

    def head(self, T):
        """The first ``T`` samples."""
        if not 1 <= T <= self.T:
            raise ShapeError(f"cannot take {T} of {self.T} samples")
        return DataBatch(self.U0[:, :T], self.X0[:, :T], self.X1[:, :T], self.tag)

    def columns(self, idx):
        idx = np.atleast_1d(idx)
        return DataBatch(self.U0[:, idx], self.X0[:, idx], self.X1[:, idx], self.tag)


def build_batch(trajectory, inputs=None, tag="target-task") -> DataBatch:
    """Arrange ``T+1`` states and ``T`` inputs into ``(U0, X0, X1)``."""
    if isinstance(trajectory, Trajectory):
        states, inputs = trajectory.states, trajectory.inputs if inputs is None else inputs
    else:
        states = trajectory
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs.reshape(1, -1)
    if states.shape[1] != inputs.shape[1] + 1:
        raise ShapeError(f"need T+1 states for T inputs, got {states.shape[1]} and {inputs.shape[1]}")
    return DataBatch(inputs, states[:, :-1], states[:, 1:], tag)


@dataclass(frozen=True)
class DisturbanceConcat:
    """Matrix zonotope of ``T`` stacked disturbance columns.

    Generator ``layout[(t, i)] = t * s_w + i`` carries column ``i`` of ``G_h``
    in column ``t``.
    """

    mz: MatrixZonotope
    T: int
    s_w: int

    @property
    def layout(self):
        return {(t, i): t * self.s_w + i for t in range(self.T) for i in range(self.s_w)}

    @property
    def delta(self):
        """``sum_i |G_w_i|``, the half-width of the interval hull."""
        return np.abs(self.mz.generators).sum(axis=0)


def t_concat_disturbance(z: Zonotope, T: int) -> DisturbanceConcat:
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    n, s_w = z.generators.shape
    gens = np.zeros((T * s_w, n, T))
    for t in range(T):
        for i in range(s_w):
            gens[t * s_w + i, :, t] = z.generators[:, i]
    center = np.repeat(z.center[:, None], T, axis=1)
    return DisturbanceConcat(MatrixZonotope(center, gens), T, s_w)


def numerical_rank(M, tol=RANK_TOL):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def check_rank(D0, tol=RANK_TOL) -> bool:
    """True iff ``D0`` has full row rank (singular values above ``tol * sigma_max``)."""
    D0 = np.atleast_2d(np.asarray(D0, dtype=float))
    return numerical_rank(D0, tol) == D0.shape[0]


def right_annihilator(D0, tol=RANK_TOL):
    """Orthonormal basis of the right null space of a full-row-rank ``D0``."""
    D0 = np.atleast_2d(np.asarray(D0, dtype=float))
    rows, cols = D0.shape
    if not check_rank(D0, tol):
        raise RankDeficiencyError(
            f"data matrix ({rows}x{cols}) has rank {numerical_rank(D0, tol)} < {rows}; "
            "the input-state data is not persistently exciting")
    _, _, Vt = np.linalg.svd(D0)
    return Vt[rows:].T.copy()


def write_csv(batch: DataBatch, path):
    """One row per time step: ``t, x1..xn, u1..um``; the final state has empty inputs."""
    n, m = batch.n, batch.m
    states = np.hstack([batch.X0, batch.X1[:, -1:]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)])
        for t in range(batch.T + 1):
            u = [repr(float(v)) for v in batch.U0[:, t]] if t < batch.T else [""] * m
            w.writerow([t] + [repr(float(v)) for v in states[:, t]] + u)


def read_csv(path, tag="target-task") -> DataBatch:
    """Inverse of :func:`write_csv`. Rows must be contiguous in ``t``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    xcols = [k for k, h in enumerate(header) if h.startswith("x")]
    ucols = [k for k, h in enumerate(header) if h.startswith("u")]
    if not xcols or not ucols or header[0] != "t":
        raise ShapeError(f"{path}: expected columns t, x1..xn, u1..um")
    states = np.array([[float(r[k]) for k in xcols] for r in body]).T
    inputs = np.array([[float(r[k]) for k in ucols] for r in body[:-1]]).T
    return build_batch(states, inputs, tag=tag)


def save_batch(batch: DataBatch, path):
    doc = {"type": "DataBatch", "tag": batch.tag,
           "U0": array_to_doc(batch.U0), "X0": array_to_doc(batch.X0),
           "X1": array_to_doc(batch.X1)}
    Path(path).write_text(json.dumps(doc))


def load_batch(path) -> DataBatch:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "DataBatch":
        raise ShapeError(f"{path}: not a DataBatch document")
    return DataBatch(array_from_doc(doc["U0"]), array_from_doc(doc["X0"]),
                     array_from_doc(doc["X1"]), doc.get("tag", "target-task"))
