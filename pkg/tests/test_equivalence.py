import numpy as np
import pytest

from circdesign.blocks import enumerate_blocks
from circdesign.equivalence import (
    ScoringContext,
    build_state,
    scores_from_state,
    sequence_score,
    verify,
)
from circdesign.errors import BranchMismatch
from circdesign.model import Measure, ModelConfig, v_xi


def scores_of(measure, blocks, cfg):
    ctx = ScoringContext(blocks, cfg)
    state = build_state(v_xi(measure, blocks), cfg)
    return dict(zip(ctx.reps, scores_from_state(ctx, state))), state


def test_scores_max_at_one_for_known_optimum():
    # For k=4, t=2, the direct effect is optimized by all mass on <1122>.
    blocks = enumerate_blocks(4, 2, np.eye(4))
    cfg = ModelConfig(t=2, lambda1=0.1, lambda2=0.3, target="direct", criterion="E")
    scores, _ = scores_of(Measure({"1122": 1.0}), blocks, cfg)
    assert scores["1122"] == pytest.approx(1.0, abs=1e-12)
    assert max(scores.values()) <= 1.0 + 1e-12


def test_weighted_score_identity():
    # The weights of any measure average its own scores to exactly one.
    rng = np.random.default_rng(3)
    blocks = enumerate_blocks(4, 4, np.eye(4))
    for target in ("direct", "total"):
        for crit in "ADET":
            cfg = ModelConfig(t=4, lambda1=0.2, lambda2=0.4,
                              target=target, criterion=crit)
            for _ in range(10):
                p = rng.dirichlet(np.ones(len(blocks)))
                m = Measure.from_weights(blocks, p)
                scores, _ = scores_of(m, blocks, cfg)
                total = sum(m.weights.get(rep, 0.0) * s
                            for rep, s in scores.items())
                assert total == pytest.approx(1.0, abs=1e-9)


def test_sequence_score_matches_batch():
    blocks = enumerate_blocks(4, 3, np.eye(4))
    cfg = ModelConfig(t=3, lambda1=0.1, lambda2=0.2, criterion="A")
    m = Measure({"1123": 0.5, "1213": 0.5})
    scores, state = scores_of(m, blocks, cfg)
    for b in blocks:
        assert sequence_score(b, state, cfg) == pytest.approx(scores[b.rep_str])


def test_verify_verdicts():
    blocks = enumerate_blocks(4, 2, np.eye(4))
    cfg = ModelConfig(t=2, lambda1=0.1, lambda2=0.3, target="direct", criterion="E")
    good = verify(Measure({"1122": 1.0}), blocks, cfg)
    assert good.verdict == "optimal"
    assert good.gap <= 1e-8
    assert "1122" in good.argmax_blocks
    bad = verify(Measure({"1112": 1.0}), blocks, cfg)
    assert bad.verdict == "not_optimal"
    assert bad.gap > 1e-8


def test_verify_flags_unsupported_argmax():
    # A mixture putting weight on a strictly sub-maximal block fails the
    # support condition even if the maximal score were near one.
    blocks = enumerate_blocks(4, 2, np.eye(4))
    cfg = ModelConfig(t=2, lambda1=0.1, lambda2=0.3, target="direct", criterion="E")
    rep = verify(Measure({"1122": 0.5, "1112": 0.5}), blocks, cfg)
    assert rep.verdict == "not_optimal"


def test_zero_schur_minimum_is_not_estimable_for_ade():
    # All mass on the alternating block makes the multiplicity-one
    # eigenvalue vanish; A/D/E are undefined there but T is still scored.
    blocks = enumerate_blocks(4, 4, np.eye(4))
    m = Measure({"1212": 1.0})
    for crit in "ADE":
        cfg = ModelConfig(t=4, lambda1=-0.3, lambda2=-0.3,
                          target="total", criterion=crit)
        rep = verify(m, blocks, cfg)
        assert rep.verdict == "not_estimable"
        with pytest.raises(BranchMismatch):
            scores_of(m, blocks, cfg)
    cfg = ModelConfig(t=4, lambda1=-0.3, lambda2=-0.3,
                      target="total", criterion="T")
    scores, state = scores_of(m, blocks, cfg)
    assert not state.estimable
    assert max(scores.values()) == pytest.approx(1.0, abs=1e-9)


def test_singular_branch_scores_flat_direction():
    # <1122> has a singular score Hessian for the direct effect; its own
    # score must still be exactly one when it is optimal.
    blocks = enumerate_blocks(4, 2, np.eye(4))
    cfg = ModelConfig(t=2, lambda1=0.3, lambda2=0.3, target="direct", criterion="E")
    m = Measure({"1122": 1.0})
    scores, state = scores_of(m, blocks, cfg)
    assert state.branch == "Qsingular"
    assert scores["1122"] == pytest.approx(1.0, abs=1e-10)
    assert max(scores.values()) <= 1.0 + 1e-9


def test_undirectional_scores():
    blocks = enumerate_blocks(4, 3, np.eye(4))
    cfg = ModelConfig(t=3, lambda1=0.3, lambda2=0.3, model="undirectional",
                      target="direct", criterion="D")
    rng = np.random.default_rng(5)
    p = rng.dirichlet(np.ones(len(blocks)))
    m = Measure.from_weights(blocks, p)
    scores, _ = scores_of(m, blocks, cfg)
    total = sum(m.weights.get(rep, 0.0) * s for rep, s in scores.items())
    assert total == pytest.approx(1.0, abs=1e-9)
