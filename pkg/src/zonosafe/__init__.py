"""Data-driven safe control with constrained (matrix) zonotopes."""

__version__ = "0.1.0"

from .closed_loop import ClosedLoopFamily, PriorKnowledge, build_family, instantiate_Mcl
from .data import DataBatch, LinearSystem, build_batch, simulate, t_concat_disturbance
from .estimators import DataDrivenSafeController, SetMembershipIdentifier
from .exceptions import (
    ConfigError,
    EmptySetError,
    InfeasibleSynthesisError,
    LPError,
    RankDeficiencyError,
    ShapeError,
    ZonosafeError,
)
from .identification import build_info_set, refine_prior
from .sets import (
    ConstrainedMatrixZonotope,
    ConstrainedZonotope,
    MatrixInterval,
    MatrixZonotope,
    Polytope,
    Zonotope,
)
from .synthesis import SynthesisProblem, synth_cz, synth_polytope, verify_contractive

__all__ = [
    "ClosedLoopFamily", "ConfigError", "ConstrainedMatrixZonotope", "ConstrainedZonotope",
    "DataBatch", "DataDrivenSafeController", "EmptySetError", "InfeasibleSynthesisError",
    "LPError", "LinearSystem", "MatrixInterval", "MatrixZonotope", "Polytope", "PriorKnowledge",
    "RankDeficiencyError", "SetMembershipIdentifier", "ShapeError", "SynthesisProblem",
    "Zonotope", "ZonosafeError", "build_batch", "build_family", "build_info_set",
    "instantiate_Mcl", "refine_prior", "simulate", "synth_cz", "synth_polytope",
    "t_concat_disturbance", "verify_contractive",
]
