import numpy as np
import pytest

from circdesign.blocks import CovarianceSpec, build_sigma, enumerate_blocks
from circdesign.model import Measure, ModelConfig, schur_quantities, v_xi
from circdesign.oracle import (
    DenseModelInstance,
    dense_for_config,
    measure_instance,
)


def random_contrast(rng, t):
    v = rng.normal(size=t)
    return v - v.mean()


def closed_eigs(measure, blocks, cfg):
    s = schur_quantities(v_xi(measure, blocks), cfg)
    t = cfg.t
    return np.sort(np.concatenate([
        [0.0], [s.eig_small], np.full(t - 2, s.eig_large)
    ]))


def test_instance_validation():
    with pytest.raises(ValueError):
        DenseModelInstance(np.array([[1, 2, 5]]), t=3, sigma=np.eye(3),
                           lambda1=0, lambda2=0, tau_or_theta=np.zeros(3))
    with pytest.raises(ValueError):
        DenseModelInstance(np.array([[1, 2, 3]]), t=3, sigma=np.eye(3),
                           lambda1=0, lambda2=0, tau_or_theta=np.ones(3))


def test_dense_matches_closed_form_identity_covariance():
    rng = np.random.default_rng(11)
    k, t = 4, 4
    blocks = enumerate_blocks(k, t, np.eye(k))
    for target in ("direct", "total"):
        for model in ("directional", "undirectional"):
            l1, l2 = (0.2, 0.2) if model == "undirectional" else (0.1, 0.4)
            cfg = ModelConfig(t=t, lambda1=l1, lambda2=l2, model=model, target=target)
            p = rng.dirichlet(np.ones(len(blocks)))
            m = Measure.from_weights(blocks, p)
            inst = measure_instance(m, blocks, t, np.eye(k), l1, l2,
                                    random_contrast(rng, t))
            dense = np.linalg.eigvalsh(dense_for_config(inst, model, target))
            closed = closed_eigs(m, blocks, cfg)
            assert np.allclose(dense, closed, atol=1e-9)


def test_dense_matches_closed_form_correlated_covariance():
    rng = np.random.default_rng(13)
    k, t = 5, 3
    sigma = build_sigma(CovarianceSpec(k, rho=0.3))
    blocks = enumerate_blocks(k, t, sigma)
    cfg = ModelConfig(t=t, lambda1=0.3, lambda2=0.1, target="total")
    p = rng.dirichlet(np.ones(len(blocks)))
    m = Measure.from_weights(blocks, p)
    inst = measure_instance(m, blocks, t, sigma, 0.3, 0.1,
                            random_contrast(rng, t))
    dense = np.linalg.eigvalsh(dense_for_config(inst, "directional", "total"))
    assert np.allclose(dense, closed_eigs(m, blocks, cfg), atol=1e-9)


def test_information_matrix_structure():
    # Centered treatment contrasts: the matrix is PSD and annihilates 1.
    rng = np.random.default_rng(17)
    k, t = 4, 3
    blocks = enumerate_blocks(k, t, np.eye(k))
    p = rng.dirichlet(np.ones(len(blocks)))
    m = Measure.from_weights(blocks, p)
    inst = measure_instance(m, blocks, t, np.eye(k), 0.2, 0.5,
                            random_contrast(rng, t))
    C = dense_for_config(inst, "directional", "direct")
    assert np.allclose(C, C.T)
    assert np.linalg.eigvalsh(C)[0] >= -1e-10
    assert np.allclose(C @ np.ones(t), 0.0, atol=1e-9)


def test_measure_instance_weights_sum_to_one():
    blocks = enumerate_blocks(4, 3, np.eye(4))
    m = Measure({"1122": 0.4, "1212": 0.6})
    inst = measure_instance(m, blocks, 3, np.eye(4), 0.1, 0.2,
                            np.array([1.0, -1.0, 0.0]))
    assert inst.weights.sum() == pytest.approx(1.0)
