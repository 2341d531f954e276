import numpy as np
import pytest

from circdesign.blocks import (
    CovarianceSpec,
    b_tilde,
    build_sigma,
    enumerate_blocks,
    moments,
    orbit_sequences,
    orbit_size,
    rep_to_str,
    rgs_strings,
    sequence_counts,
    str_to_rep,
    type_h_scale,
)
from circdesign.errors import NotPositiveDefinite


def test_rep_string_round_trip():
    assert rep_to_str((1, 1, 2, 2)) == "1122"
    assert str_to_rep("1122") == (1, 1, 2, 2)
    long = tuple(range(1, 12))
    assert str_to_rep(rep_to_str(long)) == long


def test_build_sigma_circulant():
    sigma = build_sigma(CovarianceSpec(4, rho=0.3))
    expected = np.eye(4)
    for i in range(4):
        expected[i, (i + 1) % 4] += 0.3
        expected[i, (i - 1) % 4] += 0.3
    assert np.allclose(sigma, expected)


def test_build_sigma_k2_folds_neighbors():
    sigma = build_sigma(CovarianceSpec(2, rho=0.3))
    assert np.allclose(sigma, np.array([[1.0, 0.3], [0.3, 1.0]]))


def test_build_sigma_explicit_and_validation():
    mat = np.eye(3) + 0.1
    sigma = build_sigma(CovarianceSpec(3, explicit=mat))
    assert np.allclose(sigma, mat)
    with pytest.raises(ValueError):
        build_sigma(CovarianceSpec(3, explicit=np.eye(4)))
    with pytest.raises(NotPositiveDefinite):
        build_sigma(CovarianceSpec(2, rho=1.0))


def test_b_tilde_annihilates_ones():
    sigma = build_sigma(CovarianceSpec(5, rho=0.2))
    B = b_tilde(sigma)
    assert np.allclose(B @ np.ones(5), 0.0, atol=1e-12)
    assert np.allclose(B, B.T)


def test_type_h_detection():
    assert type_h_scale(np.eye(4)) == pytest.approx(1.0)
    # Completely symmetric: a*I + b*(11' - I) is type-H.
    comp = 2.0 * np.eye(5) + 0.4 * (np.ones((5, 5)) - np.eye(5))
    a = type_h_scale(comp)
    assert a is not None and a > 0
    # General eta vector.
    eta = np.array([0.1, -0.05, 0.2, 0.0])
    sig = 1.5 * np.eye(4) + eta[:, None] + eta[None, :]
    assert type_h_scale(sig) == pytest.approx(1.5)
    # A k>=4 circulant with neighbor correlation is not type-H.
    assert type_h_scale(build_sigma(CovarianceSpec(4, rho=0.3))) is None


def test_sequence_counts_known_values():
    m, f, g, h = sequence_counts((1, 1, 2, 2))
    assert (m, f, g, h) == (2.0, 2, 2, 0)
    m, f, g, h = sequence_counts((1, 2, 1, 2))
    assert (m, f, g, h) == (2.0, 0, 0, 4)
    m, f, g, h = sequence_counts((1, 2, 3, 4))
    assert (m, f, g, h) == (1.0, 0, 0, 0)


def test_moments_closed_matches_trace():
    sigma = 1.3 * np.eye(5)
    for s in [(1, 1, 2, 2, 3), (1, 2, 1, 2, 3), (1, 2, 3, 4, 5)]:
        closed = moments(s, sigma, method="closed").V
        trace = moments(s, sigma, method="trace").V
        assert np.allclose(closed, trace, atol=1e-12)


def test_moments_closed_requires_type_h():
    sigma = build_sigma(CovarianceSpec(4, rho=0.3))
    with pytest.raises(ValueError):
        moments((1, 1, 2, 2), sigma, method="closed")
    # auto falls back to the trace path and stays symmetric.
    V = moments((1, 1, 2, 2), sigma).V
    assert np.allclose(V, V.T)


def test_rgs_strings_count_and_shape():
    # Restricted-growth strings of length 4 over at most 4 labels: 15.
    strings = list(rgs_strings(4, 4))
    assert len(strings) == 15
    assert all(s[0] == 1 for s in strings)
    # With at most 2 labels: 8 binary strings starting at 1.
    assert len(list(rgs_strings(4, 2))) == 8


def test_orbit_size_and_sequences():
    assert orbit_size((1, 1, 2, 2), 4) == 12
    seqs = list(orbit_sequences((1, 1, 2, 2), 4))
    assert len(seqs) == 12
    assert len(set(seqs)) == 12
    assert all(max(s) <= 4 for s in seqs)


def test_enumerate_blocks_k4():
    blocks = enumerate_blocks(4, 4, np.eye(4))
    reps = {b.rep_str for b in blocks}
    assert reps == {"1112", "1122", "1123", "1212", "1213", "1234"}
    # Rotations/reversals of a representative are merged into its class.
    by_rep = {b.rep_str: b for b in blocks}
    assert (1, 2, 2, 1) in by_rep["1122"].merged_reps
    # Constant sequences never appear.
    assert all(max(b.rep) > 1 for b in blocks)


def test_enumerate_blocks_orbit_totals():
    # Orbit sizes over all blocks cover every non-constant sequence.
    t = 3
    blocks = enumerate_blocks(4, t, np.eye(4))
    assert sum(b.orbit_size for b in blocks) == t**4 - t


def test_enumerate_blocks_validation():
    with pytest.raises(ValueError):
        enumerate_blocks(1, 4, np.eye(1))
    with pytest.raises(ValueError):
        enumerate_blocks(4, 1, np.eye(4))
    with pytest.raises(ValueError):
        enumerate_blocks(30, 9, np.eye(30))
