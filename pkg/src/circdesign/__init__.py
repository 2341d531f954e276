"""Optimal approximate circular block designs under proportional
neighbor interference: enumeration, closed-form spectra, equivalence
certificates and a certified solver."""

__version__ = "0.1.0"

from .blocks import (
    CovarianceSpec,
    SequenceMoments,
    SymmetricBlock,
    b_tilde,
    build_sigma,
    enumerate_blocks,
    moments,
    orbit_sequences,
    rep_to_str,
    str_to_rep,
)
from .equivalence import OptimalityReport, sequence_score, verify
from .errors import (
    BranchMismatch,
    DegenerateMeasure,
    DegenerateTotalEffect,
    NoConvergence,
    NotEstimable,
    NotPositiveDefinite,
)
from .model import (
    Measure,
    ModelConfig,
    SpectrumSummary,
    criterion_value,
    schur_quantities,
    spectrum,
    v_xi,
)
from .solver import (
    SolveOptions,
    SolveResult,
    efficiency,
    round_to_exact,
    solve,
)

__all__ = [
    "BranchMismatch",
    "CovarianceSpec",
    "DegenerateMeasure",
    "DegenerateTotalEffect",
    "Measure",
    "ModelConfig",
    "NoConvergence",
    "NotEstimable",
    "NotPositiveDefinite",
    "OptimalityReport",
    "SequenceMoments",
    "SolveOptions",
    "SolveResult",
    "SpectrumSummary",
    "SymmetricBlock",
    "b_tilde",
    "build_sigma",
    "criterion_value",
    "efficiency",
    "enumerate_blocks",
    "moments",
    "orbit_sequences",
    "rep_to_str",
    "round_to_exact",
    "schur_quantities",
    "sequence_score",
    "solve",
    "spectrum",
    "str_to_rep",
    "v_xi",
    "verify",
]
