"""Treatment sequences, symmetric blocks and their moment matrices.

A block of size ``k`` holds a circular sequence of treatment labels.  All
design quantities downstream depend on a sequence only through its 3x3
moment matrix ``V_s`` of traces of the direct/left/right cross products,
so sequences are enumerated up to relabeling (restricted-growth strings)
and then merged into V-equivalence classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite

# Relative eigenvalue cutoff below which a covariance counts as singular.
PD_TOL = 1e-12
# Relative tolerance for recognizing the I*a + eta 1' + 1 eta' structure.
TYPE_H_TOL = 1e-10
# Relative entrywise tolerance for merging blocks with equal V matrices.
V_MERGE_TOL = 1e-10
# Refuse enumerations with more than this many raw sequences.
ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class CovarianceSpec:
    """Within-block covariance: circulant with neighbor correlation ``rho``
    unless an explicit k x k matrix is given."""

    k: int
    rho: float = 0.0
    explicit: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"block size k must be >= 2, got {self.k}")


@dataclass
class SequenceMoments:
    """Moment data of a single sequence.

    ``V[i][j]`` is the trace of the cross product between the whitened
    design matrices for the direct (0), left-neighbor (1) and
    right-neighbor (2) effects.  ``m`` is the mean squared treatment
    frequency, ``f``/``g_count`` count self left/right neighbors and ``h``
    counts two-apart coincidences.
    """

    V: np.ndarray
    m: float
    f: int
    g_count: int
    h: int


@dataclass
class SymmetricBlock:
    """A V-equivalence class of sequences, keyed by its canonical
    restricted-growth representative."""

    rep: tuple[int, ...]
    orbit_size: int
    moments: SequenceMoments
    merged_reps: tuple[tuple[int, ...], ...] = field(default_factory=tuple)

    @property
    def rep_str(self) -> str:
        return rep_to_str(self.rep)

    @property
    def n_treatments_used(self) -> int:
        return max(self.rep)


def rep_to_str(rep) -> str:
    """Compact label string, e.g. (1,1,2,2) -> "1122"."""
    if max(rep) <= 9:
        return "".join(str(x) for x in rep)
    return "-".join(str(x) for x in rep)


def str_to_rep(text: str) -> tuple[int, ...]:
    if "-" in text:
        return tuple(int(x) for x in text.split("-"))
    return tuple(int(c) for c in text)


def build_sigma(spec: CovarianceSpec) -> np.ndarray:
    """Realize the covariance matrix and validate positive definiteness."""
    k = spec.k
    if spec.explicit is not None:
        sigma = np.asarray(spec.explicit, dtype=float)
        if sigma.shape != (k, k):
            raise ValueError(f"explicit covariance must be {k}x{k}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("explicit covariance must be symmetric")
    else:
        sigma = np.eye(k)
        for i in range(k):
            sigma[i, (i + 1) % k] += spec.rho
            sigma[i, (i - 1) % k] += spec.rho
        # k=2 folds both neighbors onto the same plot; keep entries at rho.
        if k == 2:
            sigma = np.eye(2) + spec.rho * (np.ones((2, 2)) - np.eye(2))
    eigs = np.linalg.eigvalsh(sigma)
    if eigs[0] <= PD_TOL * max(eigs[-1], 0.0):
        raise NotPositiveDefinite(
            f"covariance is not positive definite (min eig {eigs[0]:.3e})"
        )
    return sigma


def b_tilde(sigma: np.ndarray) -> np.ndarray:
    """Whitened centering matrix: Sigma^-1 minus its projection onto 1."""
    sigma = np.asarray(sigma, dtype=float)
    eigs = np.linalg.eigvalsh(sigma)
    if eigs[0] <= PD_TOL * max(eigs[-1], 0.0):
        raise NotPositiveDefinite("covariance is not positive definite")
    inv = np.linalg.inv(sigma)
    u = inv @ np.ones(sigma.shape[0])
    return inv - np.outer(u, u) / u.sum()


def type_h_scale(sigma: np.ndarray) -> float | None:
    """Return ``a`` if ``sigma = a*I + eta 1' + 1 eta'``, else None.

    For such matrices the whitened centering matrix is the plain centering
    matrix divided by ``a``, which unlocks the closed-form moments.
    """
    sigma = np.asarray(sigma, dtype=float)
    k = sigma.shape[0]
    scale = max(np.abs(sigma).max(), 1.0)
    if k == 2:
        # Underdetermined but always consistent: pick eta1 to equalize a.
        eta1 = (sigma[0, 0] - sigma[1, 1] + 2 * sigma[0, 1]) / 4.0
        eta = np.array([eta1, sigma[0, 1] - eta1])
    else:
        row = sigma.sum(axis=1) - np.diag(sigma)
        total = row.sum() / (2.0 * (k - 1))
        eta = (row - total) / (k - 2)
    a = float(np.mean(np.diag(sigma) - 2 * eta))
    model = a * np.eye(k) + eta[:, None] + eta[None, :]
    if a > 0 and np.abs(sigma - model).max() <= TYPE_H_TOL * scale:
        return a
    return None


def sequence_counts(s) -> tuple[float, int, int, int]:
    """Circular coincidence counts (m, f, g_count, h) of a sequence."""
    s = tuple(s)
    k = len(s)
    freqs: dict[int, int] = {}
    for label in s:
        freqs[label] = freqs.get(label, 0) + 1
    m = sum(v * v for v in freqs.values()) / k
    f = sum(s[i] == s[i - 1] for i in range(k))
    g_count = sum(s[i] == s[(i + 1) % k] for i in range(k))
    h = sum(s[i - 1] == s[(i + 1) % k] for i in range(k))
    return m, f, g_count, h


def _incidence(s, n_labels=None) -> np.ndarray:
    s = tuple(s)
    if n_labels is None:
        n_labels = max(s)
    T = np.zeros((len(s), n_labels))
    for i, label in enumerate(s):
        T[i, label - 1] = 1.0
    return T


def _moments_trace(s, btilde: np.ndarray) -> np.ndarray:
    """V_s from explicit traces of G_i' B~ G_j."""
    T = _incidence(s)
    G = [T, np.roll(T, 1, axis=0), np.roll(T, -1, axis=0)]
    V = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            V[i, j] = V[j, i] = np.sum(G[i] * (btilde @ G[j]))
    return V


def _moments_closed(s, a: float) -> np.ndarray:
    """V_s under a type-H covariance with identity coefficient ``a``."""
    k = len(tuple(s))
    m, f, _, h = sequence_counts(s)
    V = np.array(
        [
            [k - m, f - m, f - m],
            [f - m, k - m, h - m],
            [f - m, h - m, k - m],
        ]
    )
    return V / a


def moments(s, sigma: np.ndarray, method: str = "auto") -> SequenceMoments:
    """Moment matrix of a sequence under the given covariance.

    ``method`` may be "auto", "trace" or "closed"; "closed" requires a
    type-H covariance.
    """
    m, f, g_count, h = sequence_counts(s)
    a = type_h_scale(sigma) if method in ("auto", "closed") else None
    if method == "closed" and a is None:
        raise ValueError("closed-form moments require a type-H covariance")
    if a is not None:
        V = _moments_closed(s, a)
    else:
        V = _moments_trace(s, b_tilde(sigma))
    return SequenceMoments(V=V, m=m, f=f, g_count=g_count, h=h)


def rgs_strings(k: int, max_labels: int):
    """Yield restricted-growth strings of length k using at most
    ``max_labels`` distinct labels (first occurrences in increasing order)."""

    def extend(prefix, used):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        limit = min(used + 1, max_labels)
        for label in range(1, limit + 1):
            prefix.append(label)
            yield from extend(prefix, max(used, label))
            prefix.pop()

    yield from extend([1], 1)


def orbit_size(rep, t: int) -> int:
    """Number of sequences obtained by injective relabeling into 1..t."""
    u = max(rep)
    return math.perm(t, u)


def orbit_sequences(rep, t: int):
    """All relabelings of ``rep`` under injective maps into {1..t}."""
    import itertools

    u = max(rep)
    for image in itertools.permutations(range(1, t + 1), u):
        yield tuple(image[label - 1] for label in rep)


def enumerate_blocks(k: int, t: int, sigma: np.ndarray) -> list[SymmetricBlock]:
    """Symmetric blocks for (k, t) under ``sigma``, merged by V-equality.

    Constant sequences are dropped; restricted-growth classes whose V
    matrices coincide entrywise (rotations, reversals, ...) are merged
    into a single block keyed by the lexicographically smallest
    representative.
    """
    if k < 2 or t < 2:
        raise ValueError("need k >= 2 and t >= 2")
    if t**k > ENUMERATION_CAP:
        raise ValueError(
            f"enumeration of t^k = {t}^{k} sequences exceeds the cap of {ENUMERATION_CAP}"
        )
    a = type_h_scale(sigma)
    btilde = None if a is not None else b_tilde(sigma)

    classes: list[SymmetricBlock] = []
    vmax = 0.0
    for rep in rgs_strings(k, min(k, t)):
        if max(rep) == 1:
            continue  # constant block carries no information
        if a is not None:
            V = _moments_closed(rep, a)
        else:
            V = _moments_trace(rep, btilde)
        vmax = max(vmax, np.abs(V).max())
        m, f, g_count, h = sequence_counts(rep)
        sm = SequenceMoments(V=V, m=m, f=f, g_count=g_count, h=h)
        for blk in classes:
            if np.abs(blk.moments.V - V).max() <= V_MERGE_TOL * max(vmax, 1.0):
                blk.merged_reps = blk.merged_reps + (rep,)
                blk.orbit_size += orbit_size(rep, t)
                break
        else:
            classes.append(
                SymmetricBlock(
                    rep=rep,
                    orbit_size=orbit_size(rep, t),
                    moments=sm,
                    merged_reps=(rep,),
                )
            )
    return classes
