import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import central_diff, random_params, rel_err
from seqattack.attack import (
    KEYWORD_SENTINEL,
    AttackConfig,
    AttackConfigError,
    changed_positions,
    decode_output,
    gradient_reg_penalty,
    group_lasso_penalty,
    is_keyword_success,
    is_non_overlap_success,
    keyword_term,
    keywords_objective,
    loss_keywords,
    loss_non_overlapping,
    non_overlapping_objective,
    position_mask,
    prox_group_lasso,
    proximal_step,
    run_attack,
)
from seqattack.index import EmbeddingIndex


def test_non_overlap_hinge_examples():
    z = np.array([[0.0, 2.0, 1.0]])
    value, grad = non_overlapping_objective(z, [1], 0.5)
    assert value == 1.0
    np.testing.assert_array_equal(grad, [[0.0, 1.0, -1.0]])
    value, grad = non_overlapping_objective(z, [0], 0.5)
    assert value == -0.5 and not grad.any()


def test_non_overlap_tie_at_margin_takes_flat_branch():
    z = np.array([[0.0, 1.5, 1.0]])
    value, grad = non_overlapping_objective(z, [2], 0.5)
    assert value == -0.5 and not grad.any()


def test_non_overlap_length_mismatch():
    with pytest.raises(ValueError):
        loss_non_overlapping(np.zeros((2, 3)), [1], 1.0)


def test_keyword_term_and_mask():
    assert keyword_term([0.0, 3.0, 1.0], 1, 1.0) == -1.0
    assert keyword_term([0.0, 3.0, 1.0], 2, 1.0) == 2.0
    z = np.array([[0.0, 5.0, 0.0], [1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(position_mask(z, [1]), [True, False])
    # position 0 already shows the keyword, so it is masked and position 1 competes
    assert loss_keywords(z, [1], 0.5) == 1.0


def test_keyword_sentinel_when_every_position_masked():
    z = np.array([[0.0, 5.0, 0.0], [0.0, 0.0, 4.0]])
    value, grad = keywords_objective(z, [1, 2], 0.5)
    assert value == 2 * KEYWORD_SENTINEL
    assert not grad.any()


def test_keyword_gradient_points_at_best_position():
    z = np.array([[2.0, 0.0, 1.0], [0.0, 1.0, 0.5]])
    value, grad = keywords_objective(z, [2], 10.0)
    # t=0: 2-1 = 1, t=1: 1-0.5 = 0.5 -> position 1 wins
    assert value == 0.5
    np.testing.assert_array_equal(grad, [[0, 0, 0], [0, 1, -1]])
    with pytest.raises(ValueError):
        loss_keywords(z, [], 1.0)


def test_success_predicates():
    assert is_non_overlap_success([5, 6, 7], [6, 7, 5])
    assert not is_non_overlap_success([5, 6, 7], [5, 9, 9])
    assert is_keyword_success([5, 6, 7], [7, 5])
    assert not is_keyword_success([5, 6], [7])
    assert changed_positions([4, 5, 6], [4, 9, 9]) == 2


def test_prox_examples():
    d = np.array([[3.0, 4.0], [0.3, 0.4], [0.6, 0.8]])
    out = prox_group_lasso(d, 1.0)
    np.testing.assert_allclose(out[0], [2.4, 3.2])
    assert np.all(out[1] == 0.0) and np.all(out[2] == 0.0)
    with pytest.raises(ValueError):
        prox_group_lasso(d, -1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 3.0))
def test_prox_is_nonexpansive(seed, tau):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 4, 3))
    pa, pb = prox_group_lasso(a, tau), prox_group_lasso(b, tau)
    for i in range(4):
        assert np.linalg.norm(pa[i] - pb[i]) <= np.linalg.norm(a[i] - b[i]) + 1e-12


def test_proximal_gradient_decreases_composite_objective():
    # f(D) = 0.5 ||A D - B||^2 with step 1/L guarantees monotone descent of f + lam * sum ||D_i||
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 6))
    B = rng.normal(size=(6, 3))
    L = np.linalg.norm(A, 2) ** 2
    lam = 0.3

    def F(D):
        return 0.5 * np.sum((A @ D - B) ** 2) + lam * group_lasso_penalty(D)

    D = rng.normal(size=(6, 3))
    prev = F(D)
    for _ in range(200):
        D = proximal_step(D, A.T @ (A @ D - B), 1.0 / L, lam)
        cur = F(D)
        assert cur <= prev + 1e-12
        prev = cur


def test_proximal_step_keeps_frozen_rows_zero():
    out = proximal_step(np.ones((3, 2)), -np.ones((3, 2)), 1.0, 0.1, np.array([0, 1, 0], bool))
    assert np.all(out[1] == 0) and np.all(out[0] > 0)


def test_gradient_reg_value_and_gradient():
    rng = np.random.default_rng(1)
    W = rng.normal(size=(10, 3))
    idx = EmbeddingIndex(W)
    Y = rng.normal(size=(4, 3))
    value, grad = gradient_reg_penalty(Y, idx)
    brute = sum(min(np.linalg.norm(y - W[j]) for j in range(4, 10)) for y in Y)
    assert value == pytest.approx(brute, rel=1e-12)
    fd = central_diff(lambda M: gradient_reg_penalty(M, idx)[0], Y, h=1e-6)
    assert rel_err(grad, fd) < 1e-6
    on_codebook, g0 = gradient_reg_penalty(W[4:6], idx)
    assert on_codebook == 0.0 and not g0.any()


def test_config_validation():
    with pytest.raises(AttackConfigError):
        AttackConfig(mode="keywords")
    with pytest.raises(AttackConfigError):
        AttackConfig(mode="keywords", keywords=(2,))
    with pytest.raises(AttackConfigError):
        AttackConfig(mode="sideways")
    with pytest.raises(AttackConfigError):
        AttackConfig(lr=0)
    with pytest.raises(AttackConfigError):
        AttackConfig(projection="never")


@pytest.fixture(scope="module")
def model():
    return random_params(11, dim=8, hidden=16, src_vocab=20, tgt_vocab=20, scale=1.0)


def test_attack_outputs_are_consistent(model):
    idx = EmbeddingIndex(model.src_emb)
    src = [4, 9, 13, 7]
    res = run_attack(model, src, AttackConfig(iters=50), idx)
    assert res.original_output == decode_output(model, src)
    assert res.adversarial_output == decode_output(model, res.adversarial)
    assert res.changed == changed_positions(src, res.adversarial)
    assert res.success == is_non_overlap_success(res.adversarial_output, res.original_output)
    assert len(res.token_trace) == res.iterations == len(res.objective_trace)
    for toks in res.token_trace:
        assert all(idx.allowed[t] for t in toks)


@pytest.mark.parametrize("projection", ["hybrid", "every"])
def test_keyword_attack_runs_in_both_projection_modes(model, projection):
    idx = EmbeddingIndex(model.src_emb)
    src = [5, 6, 7, 8, 9]
    clean = decode_output(model, src)
    k = next(t for t in range(4, 20) if t not in clean)
    cfg = AttackConfig(mode="keywords", keywords=(k,), iters=60, projection=projection)
    res = run_attack(model, src, cfg, idx)
    assert res.success == (k in res.adversarial_output)


def test_huge_lambda1_changes_nothing(model):
    idx = EmbeddingIndex(model.src_emb)
    src = [4, 9, 13, 7]
    res = run_attack(model, src, AttackConfig(lambda1=1e6, iters=20), idx)
    assert res.changed == 0 and res.adversarial == src and not res.success


def test_immutable_and_reserved_positions_never_change(model):
    idx = EmbeddingIndex(model.src_emb)
    src = [4, 9, 2, 7, 11]
    cfg = AttackConfig(iters=40, lambda1=0.0, lr=5.0, immutable=frozenset({0}), early_stop=False)
    res = run_attack(model, src, cfg, idx)
    for toks in res.token_trace:
        assert toks[0] == 4 and toks[2] == 2
    assert any(t != s for toks in res.token_trace for t, s in zip(toks, src))


def test_teacher_forcing_option_runs(model):
    idx = EmbeddingIndex(model.src_emb)
    res = run_attack(model, [4, 5, 6], AttackConfig(iters=10, teacher_forcing=True), idx)
    assert res.iterations >= 1


def test_zero_iterations_returns_source(model):
    idx = EmbeddingIndex(model.src_emb)
    res = run_attack(model, [4, 5, 6], AttackConfig(iters=0), idx)
    assert res.adversarial == [4, 5, 6] and res.iterations == 0 and not res.success


def test_attack_is_deterministic(model):
    idx = EmbeddingIndex(model.src_emb)
    a = run_attack(model, [4, 9, 13, 7], AttackConfig(iters=30), idx)
    b = run_attack(model, [4, 9, 13, 7], AttackConfig(iters=30), idx)
    assert a == b
