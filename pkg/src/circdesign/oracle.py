"""Brute-force dense information matrices, used only by the test suite.

Everything here assembles the full n*k-row whitened design and projects
out nuisance columns explicitly, so it is slow but has no shared code
with the closed-form spectrum path it is meant to check.  Not part of
the public API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import SymmetricBlock, orbit_sequences
from .errors import DegenerateTotalEffect
from .model import Measure

# Relative eigenvalue cutoff of the pseudo-inverses used in projectors.
PINV_TOL = 1e-10


@dataclass
class DenseModelInstance:
    """A concrete collection of blocks with optional real-valued weights."""

    assignment: np.ndarray  # (n, k) labels in 1..t
    t: int
    sigma: np.ndarray
    lambda1: float
    lambda2: float
    tau_or_theta: np.ndarray  # length t, entries sum to 0
    weights: np.ndarray | None = None  # per-block nonnegative weights

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)
        self.tau_or_theta = np.asarray(self.tau_or_theta, dtype=float)
        if self.assignment.min() < 1 or self.assignment.max() > self.t:
            raise ValueError("treatment labels must lie in 1..t")
        if len(self.tau_or_theta) != self.t:
            raise ValueError("contrast vector must have length t")
        if abs(self.tau_or_theta.sum()) > 1e-8:
            raise ValueError("contrast vector must sum to zero")


def _pinv_psd(G: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(G)
    cut = PINV_TOL * max(float(vals.max()), 0.0)
    inv = np.where(vals > cut, 1.0, 0.0) / np.where(vals > cut, vals, 1.0)
    return (vecs * inv) @ vecs.T


def _whitener(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(np.asarray(sigma, dtype=float))
    return (vecs * vals**-0.5) @ vecs.T


def _stacked_design(instance: DenseModelInstance):
    """Whitened, block-centered, weight-scaled stacks (T, L, R).

    The block-mean nuisance columns (one per block) have disjoint row
    support, so projecting them out factorizes into centering each
    whitened block individually; the stacks returned here already live
    in the orthogonal complement of the block means.
    """
    A = instance.assignment
    n, k = A.shape
    t = instance.t
    Wh = _whitener(instance.sigma)
    u = Wh @ np.ones(k)
    center = (np.eye(k) - np.outer(u, u) / (u @ u)) @ Wh
    w = np.ones(n) if instance.weights is None else np.asarray(instance.weights)
    Ts, Ls, Rs = [], [], []
    for b in range(n):
        T = np.zeros((k, t))
        T[np.arange(k), A[b] - 1] = 1.0
        L = np.roll(T, 1, axis=0)
        R = np.roll(T, -1, axis=0)
        scale = np.sqrt(w[b])
        Ts.append(scale * (center @ T))
        Ls.append(scale * (center @ L))
        Rs.append(scale * (center @ R))
    return np.vstack(Ts), np.vstack(Ls), np.vstack(Rs)


def _projected_info(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """M' pr_perp(X) M computed through Gram matrices."""
    G = X.T @ X
    MX = M.T @ X
    C = M.T @ M - MX @ _pinv_psd(G) @ MX.T
    return 0.5 * (C + C.T)


def dense_info_direct(instance: DenseModelInstance) -> np.ndarray:
    """Information matrix of the direct effect under both-neighbor
    interference, eliminating block means and the neighbor contributions
    of the given contrast vector."""
    T, L, R = _stacked_design(instance)
    tau = instance.tau_or_theta
    M = T + instance.lambda1 * L + instance.lambda2 * R
    X = np.column_stack([L @ tau, R @ tau])
    return _projected_info(M, X)


def dense_info_total(instance: DenseModelInstance) -> np.ndarray:
    """Information matrix of the total effect (direct plus both neighbor
    contributions)."""
    l1, l2 = instance.lambda1, instance.lambda2
    lam_sum = 1.0 + l1 + l2
    if abs(lam_sum) < 1e-8:
        raise DegenerateTotalEffect("1 + lambda1 + lambda2 is numerically zero")
    T, L, R = _stacked_design(instance)
    theta = instance.tau_or_theta
    M = T + l1 * L + l2 * R
    col1 = (-T + (1.0 + l2) * L - l2 * R) @ theta
    col2 = (-T - l1 * L + (1.0 + l1) * R) @ theta
    X = np.column_stack([col1, col2])
    return _projected_info(M, X) / lam_sum**2


def dense_info_undirectional(instance: DenseModelInstance, target: str) -> np.ndarray:
    """Information matrix when the two neighbor effects share one ratio."""
    if instance.lambda1 != instance.lambda2:
        raise ValueError("undirectional oracle requires lambda1 == lambda2")
    lam = instance.lambda1
    T, L, R = _stacked_design(instance)
    vec = instance.tau_or_theta
    M = T + lam * (L + R)
    if target == "direct":
        X = ((L + R) @ vec)[:, None]
        return _projected_info(M, X)
    if target != "total":
        raise ValueError(f"unknown target {target!r}")
    lam_sum = 1.0 + 2.0 * lam
    if abs(lam_sum) < 1e-8:
        raise DegenerateTotalEffect("1 + 2*lambda is numerically zero")
    X = ((2.0 * T - L - R) @ vec)[:, None]
    return _projected_info(M, X) / lam_sum**2


def measure_instance(
    measure: Measure,
    blocks: list[SymmetricBlock],
    t: int,
    sigma: np.ndarray,
    lambda1: float,
    lambda2: float,
    tau_or_theta: np.ndarray,
) -> DenseModelInstance:
    """Expand a measure into all orbit sequences with matching weights.

    Each supported block contributes every injective relabeling of every
    merged representative, weighted p / orbit_size, so the realized
    collection is pseudo symmetric and its dense information matrix
    equals the measure-level one exactly.
    """
    by_rep = {b.rep_str: b for b in blocks}
    rows, weights = [], []
    for rep, p in measure.weights.items():
        if p <= 0.0:
            continue
        blk = by_rep[rep]
        for merged in blk.merged_reps:
            for seq in orbit_sequences(merged, t):
                rows.append(seq)
                weights.append(p / blk.orbit_size)
    return DenseModelInstance(
        assignment=np.array(rows, dtype=int),
        t=t,
        sigma=np.asarray(sigma, dtype=float),
        lambda1=lambda1,
        lambda2=lambda2,
        tau_or_theta=tau_or_theta,
        weights=np.array(weights),
    )


def dense_for_config(instance: DenseModelInstance, model: str, target: str) -> np.ndarray:
    """Dispatch to the matching dense builder."""
    if model == "undirectional":
        return dense_info_undirectional(instance, target)
    if target == "direct":
        return dense_info_direct(instance)
    return dense_info_total(instance)
