"""Measures over symmetric blocks and the closed-form spectrum of their
information matrices.

For a pseudo symmetric measure the t x t information matrix has one zero
eigenvalue, one eigenvalue of multiplicity 1 driven by a Schur-complement
scalar of the 3x3 moment matrix, and one of multiplicity t-2 driven by a
contrast quadratic form.  All four targets (direct/total effect, with or
without side symmetry) reduce to minimizing a small quadratic, which is
done here in closed form and vectorized over batches of measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import SymmetricBlock, rep_to_str
from .errors import DegenerateMeasure, DegenerateTotalEffect

MODELS = ("directional", "undirectional")
TARGETS = ("direct", "total")
CRITERIA = ("A", "D", "E", "T")

# Change of variables mapping the total-effect quadratic onto the moment
# matrix; its columns are (1,0,0), (-1,1,0), (-1,0,1).
GAMMA = np.array([[1.0, -1.0, -1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

# Hessian singularity thresholds for the inner quadratic minimization.
HESS_REL_TOL = 1e-10
HESS_ABS_TOL = 1e-14
# |1 + lambda1 + lambda2| below this rejects total-effect configs.
TOTAL_DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    """Target/model/criterion selection with the neighbor-effect ratios."""

    t: int
    lambda1: float
    lambda2: float
    model: str = "directional"
    target: str = "direct"
    criterion: str = "E"

    def __post_init__(self):
        if self.t < 2:
            raise ValueError(f"need t >= 2 treatments, got {self.t}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.model == "undirectional" and self.lambda1 != self.lambda2:
            raise ValueError("undirectional model requires lambda1 == lambda2")
        if self.target == "total" and abs(self.lam_sum) < TOTAL_DEGENERACY_TOL:
            raise DegenerateTotalEffect(
                "total effect vanishes: 1 + lambda1 + lambda2 is numerically zero"
            )

    @property
    def lam_sum(self) -> float:
        return 1.0 + self.lambda1 + self.lambda2

    @property
    def ell(self) -> np.ndarray:
        return np.array([1.0, self.lambda1, self.lambda2])

    @property
    def scale(self) -> float:
        """Multiplier of both nonzero eigenvalues: 1 for the direct effect."""
        return self.lam_sum**-2 if self.target == "total" else 1.0

    @property
    def paired(self) -> bool:
        """Whether the inner minimization runs over (1,x,x) instead of (1,x,y)."""
        return self.model == "undirectional"

    @property
    def quad_transform(self) -> np.ndarray:
        """3x3 map applied to V before the inner quadratic minimization."""
        return GAMMA if self.target == "total" else np.eye(3)

    @property
    def score_transform(self) -> np.ndarray:
        """Columns spanning the per-sequence matrices of the matching
        equivalence theorem: 3x3 for directional, 3x2 for undirectional."""
        l1, l2 = self.lambda1, self.lambda2
        ell = self.ell
        if self.model == "directional":
            if self.target == "direct":
                return np.eye(3)
            ell0 = np.array([-1.0, 1.0 + l2, -l2])
            ell1 = np.array([-1.0, -l1, 1.0 + l1])
            return np.column_stack([ell, ell0, ell1])
        if self.target == "direct":
            return np.column_stack([ell, [0.0, 1.0, 1.0]])
        return np.column_stack([ell, [2.0, -1.0, -1.0]])


@dataclass(frozen=True)
class Measure:
    """Proportions over symmetric-block representatives."""

    weights: dict[str, float]

    def __post_init__(self):
        from .blocks import str_to_rep

        total = 0.0
        for rep, p in self.weights.items():
            if p < -1e-12:
                raise ValueError(f"negative weight {p} on block {rep}")
            if len(set(str_to_rep(rep))) == 1:
                raise ValueError(f"weight on constant-sequence block {rep}")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1")

    def support(self, tol: float = 1e-12) -> list[str]:
        return [rep for rep, p in self.weights.items() if p > tol]

    @staticmethod
    def from_weights(blocks: list[SymmetricBlock], p: np.ndarray) -> "Measure":
        return Measure(
            {b.rep_str: float(w) for b, w in zip(blocks, p) if w > 0.0}
        )


@dataclass
class SpectrumSummary:
    """The two nonzero eigenvalues of the measure information matrix."""

    eig_small: float
    eig_large: float
    scale: float
    V_xi: np.ndarray
    branch: str  # "Qsingular" or "Qregular"
    minimizer: tuple[float, float]
    q_star: float
    ell_v_ell: float
    t: int


def v_xi(measure: Measure, blocks: list[SymmetricBlock]) -> np.ndarray:
    """Convex combination of the block moment matrices."""
    by_rep = {b.rep_str: b for b in blocks}
    V = np.zeros((3, 3))
    for rep, p in measure.weights.items():
        if rep not in by_rep:
            raise ValueError(f"unknown block representative {rep!r}")
        V += p * by_rep[rep].moments.V
    return V


def min_quadratic(W: np.ndarray, paired: bool):
    """Minimize (1,x,y) W (1,x,y)' over (x,y), or over x with y=x.

    ``W`` may carry leading batch dimensions.  Returns (value, minimizer,
    hessian_singular) where minimizer holds (x, y).  The stationarity
    system is solved with an eigenvalue-truncated pseudo-inverse so that
    singular Hessians (flat directions of the quadratic) are handled on
    the same code path.
    """
    W = np.asarray(W, dtype=float)
    if paired:
        a = W[..., 0, 0]
        b = W[..., 0, 1] + W[..., 0, 2]
        c = W[..., 1, 1] + 2.0 * W[..., 1, 2] + W[..., 2, 2]
        hess_scale = W[..., 1, 1] + W[..., 2, 2]
        singular = (c <= HESS_REL_TOL * np.maximum(hess_scale, 0.0)) | (
            c <= HESS_ABS_TOL
        )
        x = np.where(singular, 0.0, -b / np.where(singular, 1.0, c))
        value = a + 2.0 * b * x + c * x * x
        minimizer = np.stack([x, x], axis=-1)
        return value, minimizer, singular

    w00 = W[..., 0, 0]
    w = W[..., 1:, 0]
    q00, q01, q11 = W[..., 1, 1], W[..., 1, 2], W[..., 2, 2]
    tr = q00 + q11
    det = q00 * q11 - q01 * q01
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    eig_hi = 0.5 * (tr + disc)
    eig_lo = 0.5 * (tr - disc)
    singular = (eig_lo <= HESS_REL_TOL * np.maximum(eig_hi, 0.0)) | (
        eig_hi <= HESS_ABS_TOL
    )
    zero = eig_hi <= HESS_ABS_TOL

    # Regular: -Q^{-1} w via the 2x2 adjugate.
    safe_det = np.where(singular, 1.0, det)
    z_reg = np.stack(
        [
            -(q11 * w[..., 0] - q01 * w[..., 1]) / safe_det,
            -(q00 * w[..., 1] - q01 * w[..., 0]) / safe_det,
        ],
        axis=-1,
    )
    # Rank one: project w on the principal eigenvector.
    cand1 = q01 * q01 + (eig_hi - q00) ** 2
    cand2 = (eig_hi - q11) ** 2 + q01 * q01
    use1 = cand1 >= cand2
    u0 = np.where(use1, q01, eig_hi - q11)
    u1 = np.where(use1, eig_hi - q00, q01)
    unorm = u0 * u0 + u1 * u1
    denom = np.where((unorm <= 0) | zero, 1.0, eig_hi * unorm)
    coef = -(u0 * w[..., 0] + u1 * w[..., 1]) / denom
    coef = np.where(zero, 0.0, coef)
    z_sing = np.stack([coef * u0, coef * u1], axis=-1)

    z = np.where(singular[..., None], z_sing, z_reg)
    qz = np.stack(
        [
            q00 * z[..., 0] + q01 * z[..., 1],
            q01 * z[..., 0] + q11 * z[..., 1],
        ],
        axis=-1,
    )
    value = w00 + 2.0 * np.sum(w * z, axis=-1) + np.sum(z * qz, axis=-1)
    return value, z, singular


def _spectrum_arrays(V: np.ndarray, config: ModelConfig):
    """Batched (eig_small, eig_large, raw_min, minimizer, singular)."""
    G = config.quad_transform
    W = np.einsum("ia,...ij,jb->...ab", G, V, G)
    raw, minimizer, singular = min_quadratic(W, config.paired)
    ell = config.ell
    lvl = np.einsum("i,...ij,j->...", ell, V, ell)
    t = config.t
    eig_small = raw / (t - 1)
    eig_large = config.scale * lvl / (t - 1)
    return eig_small, eig_large, raw, minimizer, singular


def schur_quantities(V_xi_mat: np.ndarray, config: ModelConfig) -> SpectrumSummary:
    """Schur scalar, contrast quadratic and branch data for one measure."""
    V = np.asarray(V_xi_mat, dtype=float)
    if np.abs(V).max() <= 1e-12:
        raise DegenerateMeasure("moment matrix is zero: measure carries no information")
    eig_small, eig_large, raw, minimizer, singular = _spectrum_arrays(V, config)
    ell = config.ell
    lvl = float(ell @ V @ ell)
    # The Schur scalar keeps the (1+lam)^2 factor for total effects.
    q_star = float(raw / config.scale)
    return SpectrumSummary(
        eig_small=float(eig_small),
        eig_large=float(eig_large),
        scale=config.scale,
        V_xi=V,
        branch="Qsingular" if bool(singular) else "Qregular",
        minimizer=(float(minimizer[0]), float(minimizer[1])),
        q_star=q_star,
        ell_v_ell=lvl,
        t=config.t,
    )


def spectrum(V_xi_mat: np.ndarray, config: ModelConfig) -> SpectrumSummary:
    """Alias of :func:`schur_quantities`; the summary already carries the
    eigenvalues (multiplicities 1 and t-2, plus one zero)."""
    return schur_quantities(V_xi_mat, config)


def criterion_value(summary: SpectrumSummary, criterion: str | None = None) -> float:
    """Evaluate one of the A/D/E/T functionals on the spectrum."""
    if criterion is None:
        raise ValueError("criterion must be given")
    a1 = np.asarray(summary.eig_small, dtype=float)
    a2 = np.asarray(summary.eig_large, dtype=float)
    value = _criterion_values(a1, a2, summary.t, criterion)
    return float(value)


def _criterion_values(a1, a2, t: int, criterion: str):
    """Vectorized criterion functional on (eig_small, eig_large) pairs."""
    a1 = np.maximum(np.asarray(a1, dtype=float), 0.0)
    a2 = np.maximum(np.asarray(a2, dtype=float), 0.0)
    if t == 2:
        return a1 + 0.0
    if criterion == "E":
        return a1 + 0.0
    if criterion == "T":
        return (a1 + (t - 2) * a2) / (t - 1)
    pos = (a1 > 0.0) & (a2 > 0.0)
    safe1 = np.where(pos, a1, 1.0)
    safe2 = np.where(pos, a2, 1.0)
    if criterion == "A":
        return np.where(pos, (t - 1) / (1.0 / safe1 + (t - 2) / safe2), 0.0)
    if criterion == "D":
        return np.where(
            pos, np.exp((np.log(safe1) + (t - 2) * np.log(safe2)) / (t - 1)), 0.0
        )
    raise ValueError(f"unknown criterion {criterion!r}")
