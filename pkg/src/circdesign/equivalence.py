"""Equivalence-theorem scores and optimality verdicts.

A candidate measure is optimal exactly when the per-sequence score of the
matching certificate branch maxes out at 1 and the measure's support sits on
that argmax set.  Scores are evaluated per V-equivalence class (every
branch expression depends on a sequence only through its moment matrix),
vectorized over the block list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import SymmetricBlock
from .errors import BranchMismatch, DegenerateMeasure
from .model import (
    HESS_ABS_TOL,
    HESS_REL_TOL,
    Measure,
    ModelConfig,
    min_quadratic,
    schur_quantities,
    v_xi,
)

# Default gap tolerance for the optimality verdict.
GAP_TOL = 1e-8
# Proportions above this count as supported blocks.
SUPPORT_TOL = 1e-6
# q* below this multiple of ell'V ell means the effect is not estimable.
ESTIMABILITY_TOL = 1e-10
# ell0' V ell0 at or below this multiple of trace(V) is the degenerate
# total-effect case outside every certificate branch.
EXCLUDED_CASE_TOL = 1e-12


@dataclass
class MeasureState:
    """Branch data of a candidate measure, shared by all block scores."""

    branch: str  # "Qsingular" or "Qregular"
    V_xi: np.ndarray
    W_xi: np.ndarray
    ell_v: float
    q_star: float
    estimable: bool
    minimizer: np.ndarray | None = None  # a point of the Schur minimizer set
    null_dir: np.ndarray | None = None  # flat direction when the Hessian is rank 1
    hessian_rank: int | None = None
    W_inv: np.ndarray | None = None
    Q_inv: np.ndarray | None = None  # 2x2 for directional, scalar for undirectional
    Aw: np.ndarray | None = None  # adj(W) / det(Q), for the q* -> 0 limit
    note: str | None = None


@dataclass
class OptimalityReport:
    scores: dict[str, float]
    max_score: float
    argmax_blocks: list[str]
    gap: float
    verdict: str  # "optimal", "not_optimal" or "not_estimable"
    branch: str
    notes: list[str] = field(default_factory=list)


class ScoringContext:
    """Stacked per-block arrays for one (block list, config) pair."""

    def __init__(self, blocks: list[SymmetricBlock], config: ModelConfig):
        self.blocks = blocks
        self.config = config
        self.reps = [b.rep_str for b in blocks]
        self.Vs = np.stack([b.moments.V for b in blocks])
        L = config.score_transform
        self.Ws = np.einsum("ia,nij,jb->nab", L, self.Vs, L)
        ell = config.ell
        self.eVs = np.einsum("i,nij,j->n", ell, self.Vs, ell)
        self.V00s = self.Vs[:, 0, 0]

    def v_of(self, p: np.ndarray) -> np.ndarray:
        return np.tensordot(p, self.Vs, axes=1)


def _adj2(A: np.ndarray) -> np.ndarray:
    return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])


def _adj3(A: np.ndarray) -> np.ndarray:
    c1 = np.trace(A)
    c2 = 0.5 * (c1 * c1 - np.trace(A @ A))
    return A @ A - c1 * A + c2 * np.eye(3)


def _two_by_two_singular(Q: np.ndarray) -> bool:
    tr = Q[0, 0] + Q[1, 1]
    det = Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0]
    disc = np.sqrt(max(tr * tr - 4.0 * det, 0.0))
    hi = 0.5 * (tr + disc)
    lo = 0.5 * (tr - disc)
    return lo <= HESS_REL_TOL * max(hi, 0.0) or hi <= HESS_ABS_TOL


def build_state(V_xi_mat: np.ndarray, config: ModelConfig) -> MeasureState:
    """Classify the measure into a certificate branch and precompute the
    data every block score needs.

    When the Hessian block of the score-space quadratic is singular, the
    Schur minimizer is a whole affine set; the stored minimizer together
    with ``null_dir``/``hessian_rank`` describes it so that block scores
    can take the exact one-sided directional derivative (minimizing over
    the full set) rather than evaluating at one arbitrary point.
    """
    V = np.asarray(V_xi_mat, dtype=float)
    if np.abs(V).max() <= 1e-12:
        raise DegenerateMeasure("moment matrix is zero")
    L = config.score_transform
    W = L.T @ V @ L
    ell = config.ell
    ell_v = float(ell @ V @ ell)

    if config.model == "directional":
        Q = W[1:, 1:]
        if _two_by_two_singular(Q):
            value, z, _ = min_quadratic(W[None], paired=False)
            q_star = max(float(value[0]), 0.0)
            z0 = np.asarray(z[0], dtype=float)
            estimable = q_star > ESTIMABILITY_TOL * ell_v
            tr = float(Q[0, 0] + Q[1, 1])
            if tr <= HESS_ABS_TOL:
                rank, null_dir = 0, None
            else:
                rank = 1
                vals, vecs = np.linalg.eigh(Q)
                null_dir = vecs[:, 0]
            return MeasureState(
                branch="Qsingular", V_xi=V, W_xi=W, ell_v=ell_v,
                q_star=q_star if estimable else 0.0, estimable=estimable,
                minimizer=z0, null_dir=null_dir, hessian_rank=rank,
                note=None if estimable else "Schur minimum is zero",
            )
        det_q = float(np.linalg.det(Q))
        q_star = max(float(np.linalg.det(W)) / det_q, 0.0)
        estimable = q_star > ESTIMABILITY_TOL * ell_v
        return MeasureState(
            branch="Qregular", V_xi=V, W_xi=W, ell_v=ell_v,
            q_star=q_star if estimable else 0.0, estimable=estimable,
            W_inv=np.linalg.inv(W) if estimable else None,
            Q_inv=np.linalg.inv(Q), Aw=_adj3(W) / det_q,
            note=None if estimable else "Schur minimum is zero with det(Q) > 0",
        )

    # Undirectional: W is 2x2 and the Hessian part is the scalar W[1,1].
    q_scalar = float(W[1, 1])
    if q_scalar <= HESS_REL_TOL * max(np.trace(W), 0.0) or q_scalar <= HESS_ABS_TOL:
        q_star = max(float(W[0, 0]), 0.0)
        estimable = q_star > ESTIMABILITY_TOL * ell_v
        return MeasureState(
            branch="Qsingular", V_xi=V, W_xi=W, ell_v=ell_v,
            q_star=q_star if estimable else 0.0, estimable=estimable,
            minimizer=np.zeros(1), hessian_rank=0,
            note=None if estimable else "Schur minimum is zero",
        )
    det_w = float(W[0, 0] * W[1, 1] - W[0, 1] * W[1, 0])
    q_star = max(det_w / q_scalar, 0.0)
    estimable = q_star > ESTIMABILITY_TOL * ell_v
    return MeasureState(
        branch="Qregular", V_xi=V, W_xi=W, ell_v=ell_v,
        q_star=q_star if estimable else 0.0, estimable=estimable,
        W_inv=np.linalg.inv(W) if estimable else None,
        Q_inv=np.array(1.0 / q_scalar), Aw=_adj2(W) / q_scalar,
        note=None if estimable else "Schur minimum is zero with nonzero Hessian",
    )


def _singular_numerators(ctx, state, cfg) -> np.ndarray:
    """Exact one-sided derivative numerators in the singular branch.

    The Schur minimum of the candidate measure is attained on an affine
    set (a point plus the Hessian null space), and the derivative of the
    minimum toward a block is the block quadratic minimized over that
    whole set.  Evaluating at a single minimizer, as the plain score
    formulas do, only upper-bounds the derivative and can falsely reject
    an optimal measure when the flat direction is nontrivial.
    """
    Ws = ctx.Ws
    if cfg.model == "undirectional":
        # The candidate's 1D quadratic is constant, so minimize each
        # block quadratic over the entire line.
        a = Ws[:, 1, 1]
        guard = a > np.maximum(HESS_ABS_TOL, HESS_REL_TOL * np.trace(Ws, axis1=1, axis2=2))
        safe = np.where(guard, a, 1.0)
        q_s = Ws[:, 0, 0] - np.where(guard, Ws[:, 0, 1] ** 2 / safe, 0.0)
        return np.maximum(q_s, 0.0)

    z0 = state.minimizer
    w_s = Ws[:, 1:, 0]
    Q_s = Ws[:, 1:, 1:]
    if state.hessian_rank == 0:
        value, _, _ = min_quadratic(Ws, paired=False)
        return np.maximum(value, 0.0)
    q_at_z0 = (
        Ws[:, 0, 0]
        + 2.0 * w_s @ z0
        + np.einsum("a,nab,b->n", z0, Q_s, z0)
    )
    u = state.null_dir
    a = np.einsum("a,nab,b->n", u, Q_s, u)
    b = (w_s + np.einsum("nab,b->na", Q_s, z0)) @ u
    guard = a > np.maximum(HESS_ABS_TOL, HESS_REL_TOL * np.trace(Q_s, axis1=1, axis2=2))
    safe = np.where(guard, a, 1.0)
    q_s = q_at_z0 - np.where(guard, b * b / safe, 0.0)
    return np.maximum(q_s, 0.0)


def scores_from_state(ctx: ScoringContext, state: MeasureState) -> np.ndarray:
    """Certificate scores for every block, for the configured criterion."""
    cfg = ctx.config
    t = cfg.t
    crit = cfg.criterion
    eV = state.ell_v
    eVs = ctx.eVs

    if not state.estimable and crit != "T":
        # The candidate's Schur minimum is zero, so the A/D/E score
        # denominators vanish; only the T score has a finite limit here.
        raise BranchMismatch(state.note or "Schur minimum is zero")

    if state.branch == "Qsingular":
        q_s = _singular_numerators(ctx, state, cfg)
        q_xi = state.q_star
        if crit == "E":
            return q_s / q_xi
        if crit == "D":
            return (q_s / q_xi + (t - 2) * eVs / eV) / (t - 1)
        if crit == "T":
            return (q_s + (t - 2) * eVs) / (q_xi + (t - 2) * eV)
        return (q_s / q_xi**2 + (t - 2) * eVs / eV**2) / (
            1.0 / q_xi + (t - 2) / eV
        )

    if cfg.model == "directional":
        tr_q = np.einsum("nab,ba->n", ctx.Ws[:, 1:, 1:], state.Q_inv)
    else:
        tr_q = ctx.Ws[:, 1, 1] * float(state.Q_inv)
    q_star = state.q_star
    if crit == "T":
        # r_s * q_star written through adj(W)/det(Q), which stays finite
        # and exact when q_star itself is zero.
        rq_s = np.einsum("nab,ba->n", ctx.Ws, state.Aw) - q_star * tr_q
        return (rq_s + (t - 2) * eVs) / (q_star + (t - 2) * eV)
    r_s = np.einsum("nab,ba->n", ctx.Ws, state.W_inv) - tr_q
    if crit == "E":
        return r_s
    if crit == "D":
        return (r_s + (t - 2) * eVs / eV) / (t - 1)
    return (r_s / q_star + (t - 2) * eVs / eV**2) / (1.0 / q_star + (t - 2) / eV)


def sequence_score(
    block: SymmetricBlock, state: MeasureState, config: ModelConfig
) -> float:
    """Score of one block against a prepared measure state."""
    ctx = ScoringContext([block], config)
    return float(scores_from_state(ctx, state)[0])


def verify(
    measure: Measure,
    blocks: list[SymmetricBlock],
    config: ModelConfig,
    tolerance: float = GAP_TOL,
    support_tol: float = SUPPORT_TOL,
) -> OptimalityReport:
    """Optimality verdict for a candidate measure.

    The verdict is "optimal" only if the maximal score exceeds 1 by at
    most ``tolerance`` and every supported block scores within
    ``tolerance`` of the maximum.
    """
    V = v_xi(measure, blocks)
    state = build_state(V, config)
    notes = [state.note] if state.note else []

    if not state.estimable and config.criterion != "T":
        return OptimalityReport(
            scores={}, max_score=float("nan"), argmax_blocks=[],
            gap=float("inf"), verdict="not_estimable", branch=state.branch,
            notes=notes,
        )

    ctx = ScoringContext(blocks, config)
    values = scores_from_state(ctx, state)
    scores = dict(zip(ctx.reps, (float(v) for v in values)))
    max_score = float(values.max())
    argmax = [r for r, v in scores.items() if v >= max_score - tolerance]
    gap = max_score - 1.0

    support_ok = all(
        scores.get(rep, -np.inf) >= max_score - tolerance
        for rep, p in measure.weights.items()
        if p > support_tol
    )
    if gap <= tolerance and support_ok:
        verdict = "optimal"
    else:
        verdict = "not_optimal"
        if not support_ok:
            notes.append("support includes blocks below the maximal score")
    # Sanity signal: a measure far below estimability is reported as such.
    summary = schur_quantities(V, config)
    if (
        config.criterion in ("A", "D", "E")
        and summary.q_star <= ESTIMABILITY_TOL * max(summary.ell_v_ell, 0.0)
    ):
        verdict = "not_estimable"
    return OptimalityReport(
        scores=scores, max_score=max_score, argmax_blocks=argmax,
        gap=gap, verdict=verdict, branch=state.branch, notes=notes,
    )
