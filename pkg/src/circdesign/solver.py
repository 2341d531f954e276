"""Criterion maximization over the simplex of symmetric-block proportions.

The ascent direction comes for free from the equivalence theorems: the
per-block score is the normalized directional derivative of the
criterion, so the Frank-Wolfe gap and the optimality certificate are the
same number.  Vertex steps are combined with exact (grid-refined) line
searches and a pairwise corrective polish over the active support, which
drives the gap below tight tolerances in a handful of outer iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import SymmetricBlock, enumerate_blocks
from .equivalence import (
    GAP_TOL,
    OptimalityReport,
    ScoringContext,
    build_state,
    scores_from_state,
    verify,
)
from .errors import BranchMismatch, NoConvergence, NotEstimable
from .model import (
    Measure,
    ModelConfig,
    _criterion_values,
    min_quadratic,
    v_xi,
    schur_quantities,
    criterion_value,
)

# Phi_E below this is treated as zero when probing estimability.
ESTIMABLE_PHI_TOL = 1e-10


@dataclass(frozen=True)
class SolveOptions:
    gap_tol: float = 1e-8
    max_iters: int = 200000
    restarts: int = 5
    line_search_tol: float = 1e-12
    prune_tol: float = 1e-9

    def __post_init__(self):
        for name in ("gap_tol", "max_iters", "restarts", "line_search_tol", "prune_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolveResult:
    measure: Measure
    value: float
    report: OptimalityReport
    iterations: int
    converged: bool


class _Problem:
    """Vectorized criterion evaluation for one (blocks, config) pair."""

    def __init__(self, blocks: list[SymmetricBlock], config: ModelConfig):
        self.blocks = blocks
        self.config = config
        self.ctx = ScoringContext(blocks, config)
        G = config.quad_transform
        self.As = np.einsum("ia,nij,jb->nab", G, self.ctx.Vs, G)
        self.eVs = self.ctx.eVs
        self.m = len(blocks)

    def eig_small(self, P: np.ndarray) -> np.ndarray:
        W = np.tensordot(P, self.As, axes=1)
        raw, _, _ = min_quadratic(W, self.config.paired)
        return raw / (self.config.t - 1)

    def values(self, P: np.ndarray) -> np.ndarray:
        """Criterion values for a batch of weight vectors (N, m)."""
        t = self.config.t
        a1 = self.eig_small(P)
        a2 = self.config.scale * (P @ self.eVs) / (t - 1)
        return _criterion_values(a1, a2, t, self.config.criterion)

    def value(self, p: np.ndarray) -> float:
        return float(self.values(p[None])[0])

    def scores(self, p: np.ndarray) -> np.ndarray:
        state = build_state(self.ctx.v_of(p), self.config)
        return scores_from_state(self.ctx, state)


def _line_search(prob, p, d, lo, hi, tol, points=33, max_rounds=14):
    """Maximize the criterion along p + g*d for g in [lo, hi]."""
    best_g, best_v = 0.0, prob.value(p)
    span = hi - lo
    if span <= 0:
        return best_g, best_v
    for _ in range(max_rounds):
        gs = np.linspace(lo, hi, points)
        vals = prob.values(p[None, :] + gs[:, None] * d[None, :])
        i = int(np.argmax(vals))
        if vals[i] > best_v:
            best_v, best_g = float(vals[i]), float(gs[i])
        if hi - lo <= tol * max(span, 1.0):
            break
        lo = gs[max(i - 1, 0)]
        hi = gs[min(i + 1, points - 1)]
    return best_g, best_v


def _polish(prob, p, opts, max_support=8, max_cycles=8):
    """Pairwise exact line searches over the active support.

    Moving mass between two supported blocks (endpoints included) both
    sharpens interior optima and zeroes out blocks that should leave the
    support, subsuming away steps.
    """
    for _ in range(max_cycles):
        idx = np.argsort(p)[::-1]
        idx = [i for i in idx[:max_support] if p[i] > opts.prune_tol]
        if len(idx) < 2:
            return p
        improved = False
        base = prob.value(p)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                d = np.zeros_like(p)
                d[i], d[j] = 1.0, -1.0
                g, v = _line_search(
                    prob, p, d, -p[i], p[j], opts.line_search_tol
                )
                if v > base + 1e-15 * max(abs(base), 1.0) and g != 0.0:
                    p = np.clip(p + g * d, 0.0, None)
                    p /= p.sum()
                    base = v
                    improved = True
        if not improved:
            return p
    return p


def _frank_wolfe(prob, p0, opts):
    """Run ascent from p0; returns (p, iterations, gap)."""
    p = np.asarray(p0, dtype=float)
    p = p / p.sum()
    gap = np.inf
    stall = 0
    best_gap = np.inf
    for it in range(1, opts.max_iters + 1):
        try:
            scores = prob.scores(p)
            gap = float(scores.max() - 1.0)
            s = int(np.argmax(scores))
        except BranchMismatch:
            # Iterate fell outside the certificate branches: steer by value.
            blend = 0.99 * p[None, :] + 0.01 * np.eye(prob.m)
            s = int(np.argmax(prob.values(blend)))
            gap = np.inf
        if gap <= opts.gap_tol:
            return p, it, gap
        d = -p.copy()
        d[s] += 1.0
        g, _ = _line_search(prob, p, d, 0.0, 1.0, opts.line_search_tol)
        p = np.clip(p + g * d, 0.0, None)
        p /= p.sum()
        p = _polish(prob, p, opts)
        if gap < best_gap - 1e-16:
            best_gap, stall = gap, 0
        else:
            stall += 1
            if stall >= 5:
                # Value-driven steps have flattened out; polish the
                # certificate directly before giving up on this start.
                p = _equalize(prob, p, opts)
                try:
                    scores = prob.scores(p)
                    gap = float(scores.max() - 1.0)
                except BranchMismatch:
                    pass
                return p, it, gap
    return p, it, gap


def _equalize(prob, p, opts, max_newton=25):
    """Equalize the scores of the supported blocks by a small Newton solve.

    The criterion is quadratically flat near the optimum, so line searches
    stall while the score spread (the certificate) is still first order in
    the weight error.  Supported scores are smooth in p and the weighted
    score identity forces their common value to be exactly 1, so root
    finding on the pairwise score differences polishes the certificate to
    near machine precision.
    """
    idx = np.where(p > 1e-5)[0]
    r = len(idx)
    if r < 2:
        return p

    def residual(q):
        scores = prob.scores(q)[idx]
        return scores[:-1] - scores[-1]

    h = 1e-7
    for _ in range(max_newton):
        try:
            res = residual(p)
        except BranchMismatch:
            return p
        if np.abs(res).max() < 1e-13:
            break
        J = np.empty((r - 1, r - 1))
        for j in range(r - 1):
            q = p.copy()
            q[idx[j]] += h
            q[idx[-1]] -= h
            try:
                J[:, j] = (residual(q) - res) / h
            except BranchMismatch:
                return p
        try:
            step = np.linalg.lstsq(J, -res, rcond=None)[0]
        except np.linalg.LinAlgError:
            return p
        best_q, best_norm = p, float(np.abs(res).max())
        damp = 1.0
        for _ in range(30):
            q = p.copy()
            q[idx[:-1]] += damp * step
            q[idx[-1]] -= damp * step.sum()
            if q[idx].min() >= 0.0:
                try:
                    norm = float(np.abs(residual(q)).max())
                except BranchMismatch:
                    norm = np.inf
                if norm < best_norm:
                    best_q, best_norm = q, norm
                    break
            damp *= 0.5
        if best_q is p:
            break
        p = best_q
    return p


def _canonical_rep(prob, p):
    """Choose a canonical weight vector among those sharing one moment
    matrix.

    Block moment matrices can be affinely dependent, so the optimal
    moment matrix may admit a whole polytope of weight vectors that are
    indistinguishable to every criterion.  The canonical representative
    lexicographically maximizes the weights of the blocks whose own
    moment matrices are nearest the optimal one, which concentrates mass
    on the most similar blocks and is deterministic.
    """
    from scipy.optimize import linprog

    m = prob.m
    Vs = prob.ctx.Vs.reshape(m, 9)[:, [0, 1, 2, 4, 5, 8]]
    A = np.vstack([Vs.T, np.ones(m)])
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank >= m:
        return p
    A_red = sv[:rank, None] * Vt[:rank]
    V_target = prob.ctx.v_of(p).reshape(9)[[0, 1, 2, 4, 5, 8]]
    b_red = U[:, :rank].T @ np.concatenate([V_target, [1.0]])
    dist = np.linalg.norm(Vs - V_target, axis=1)
    order = np.lexsort((np.arange(m), dist))

    rows = [A_red]
    rhs = [b_red]
    current = p
    for idx in order:
        c = np.zeros(m)
        c[idx] = -1.0
        res = linprog(c, A_eq=np.vstack(rows), b_eq=np.concatenate(rhs),
                      bounds=(0.0, None), method="highs")
        if not res.success:
            return current
        current = res.x
        pin = np.zeros((1, m))
        pin[0, idx] = 1.0
        rows.append(pin)
        rhs.append(np.array([res.x[idx]]))
        if len(rows) - 1 + rank >= m:
            break
    q = np.clip(current, 0.0, None)
    return q / q.sum()


def _check_estimable(prob, rng, n_random=1000):
    """Raise NotEstimable when Phi_E vanishes on vertices and a random
    sweep of the simplex."""
    vertex_phi = prob.eig_small(np.eye(prob.m)) * prob.config.scale
    if vertex_phi.max() > ESTIMABLE_PHI_TOL:
        return
    P = rng.dirichlet(np.ones(prob.m), size=n_random)
    if (prob.eig_small(P) * prob.config.scale).max() > ESTIMABLE_PHI_TOL:
        return
    raise NotEstimable(
        "smallest nonzero eigenvalue is zero for every probed measure; "
        "the effect is not estimable for this (k, t)"
    )


def solve(
    k: int,
    t: int,
    sigma: np.ndarray,
    config: ModelConfig,
    opts: SolveOptions | None = None,
    seed: int = 0,
) -> SolveResult:
    """Find the criterion-optimal measure with an equivalence certificate."""
    opts = opts or SolveOptions()
    blocks = enumerate_blocks(k, t, sigma)
    prob = _Problem(blocks, config)
    rng = np.random.default_rng(seed)
    _check_estimable(prob, rng)

    m = prob.m
    best_p, best_value, best_gap, total_iters = None, -np.inf, np.inf, 0
    for r in range(opts.restarts):
        p0 = np.full(m, 1.0 / m) if r == 0 else rng.dirichlet(np.ones(m))
        p, iters, gap = _frank_wolfe(prob, p0, opts)
        total_iters += iters
        value = prob.value(p)
        if (gap <= opts.gap_tol and value > best_value) or (
            best_gap > opts.gap_tol and (gap < best_gap or value > best_value)
        ):
            best_p, best_value, best_gap = p, value, gap
        if gap <= opts.gap_tol and r >= 1:
            break  # concave objective: extra restarts only re-confirm

    p = best_p
    # Vertex sweep: resume if a single block beats the current iterate.
    vertex_vals = prob.values(np.eye(m))
    s = int(np.argmax(vertex_vals))
    if vertex_vals[s] > best_value + 1e-10 * (1.0 + abs(best_value)):
        p0 = np.zeros(m)
        p0[s] = 1.0
        p, iters, best_gap = _frank_wolfe(prob, 0.99 * p0 + 0.01 / m, opts)
        total_iters += iters

    p = np.where(p < opts.prune_tol, 0.0, p)
    p /= p.sum()
    p = _equalize(prob, p, opts)
    p = _canonical_rep(prob, p)
    p = np.where(p < opts.prune_tol, 0.0, p)
    p /= p.sum()
    value = prob.value(p)

    # Tie-break: non-strict criteria (notably E and T) can be flat on a
    # whole face; when a pure block attains the same value, prefer it,
    # ranked by treatment variety (largest V00), then the larger repeated
    # eigenvalue, then lexicographically.  Only adopt the vertex when its
    # own certificate verifies.
    tie_tol = 1e-12 * (1.0 + abs(value))
    tied = np.where(prob.values(np.eye(m)) >= value - tie_tol)[0]
    if tied.size:
        v00 = prob.ctx.V00s[tied]
        eig2 = config.scale * prob.eVs[tied] / (config.t - 1)
        s = int(tied[np.lexsort((tied, -eig2, -v00))[0]])
        pv = np.zeros(m)
        pv[s] = 1.0
        if p[s] < 1.0:
            mv = Measure.from_weights(blocks, pv)
            rv = verify(mv, blocks, config, tolerance=opts.gap_tol)
            if rv.verdict == "optimal":
                p, value = pv, prob.value(pv)

    measure = Measure.from_weights(blocks, p)
    report = verify(measure, blocks, config, tolerance=opts.gap_tol)
    converged = report.verdict == "optimal"
    result = SolveResult(
        measure=measure, value=value, report=report,
        iterations=total_iters, converged=converged,
    )
    if not converged:
        raise NoConvergence(
            f"gap {report.gap:.3e} above tolerance {opts.gap_tol:.1e}", result=result
        )
    return result


def efficiency(
    measure: Measure,
    blocks: list[SymmetricBlock],
    config: ModelConfig,
    reference: SolveResult,
) -> float:
    """Criterion value of ``measure`` relative to a solved optimum."""
    if not reference.converged:
        raise ValueError("reference solve did not converge")
    value = criterion_value(schur_quantities(v_xi(measure, blocks), config),
                            config.criterion)
    return value / reference.value


def round_to_exact(measure: Measure, n: int) -> dict[str, int]:
    """Largest-remainder apportionment of n blocks over the support.

    Ties in the fractional parts break toward the lexicographically
    smaller representative.
    """
    if n < 1:
        raise ValueError("block count n must be >= 1")
    items = sorted(measure.weights.items())
    raw = {rep: n * p for rep, p in items}
    counts = {rep: int(np.floor(v)) for rep, v in raw.items()}
    leftover = n - sum(counts.values())
    by_frac = sorted(items, key=lambda kv: (-(raw[kv[0]] - counts[kv[0]]), kv[0]))
    for rep, _ in by_frac[:leftover]:
        counts[rep] += 1
    return counts
