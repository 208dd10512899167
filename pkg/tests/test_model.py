import itertools
import math

import numpy as np
import pytest

from helpers import central_diff, random_params, rel_err
from seqattack.model import (
    PARAM_ORDER,
    ModelInputError,
    ModelParams,
    batch_loss_and_grads,
    beam_decode,
    decode_logits,
    embed,
    encode,
    greedy_decode,
    greedy_decode_batch,
    input_gradient,
    log_softmax,
    lstm_cell,
    truncate_at_eos,
)
from seqattack.vocab import BOS, EOS


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def test_embed_picks_rows_and_checks_range():
    table = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(embed([2, 0, 2], table), table[[2, 0, 2]])
    with pytest.raises(ModelInputError):
        embed([4], table)
    with pytest.raises(ModelInputError):
        embed([-1], table)


def test_lstm_cell_all_zero_stays_zero():
    rng = np.random.default_rng(0)
    H, d = 3, 2
    cell = (rng.normal(size=(4 * H, d)), rng.normal(size=(4 * H, H)), np.zeros(4 * H))
    h, c = lstm_cell(np.zeros(d), np.zeros(H), np.zeros(H), cell)
    assert np.all(h == 0) and np.all(c == 0)


def test_lstm_cell_saturated_gates():
    H, d = 2, 2
    cell = (np.zeros((4 * H, d)), np.zeros((4 * H, H)), np.full(4 * H, 50.0))
    c_prev = np.array([0.3, -0.7])
    h, c = lstm_cell(np.ones(d), np.zeros(H), c_prev, cell)
    # all gates open and candidate at +1
    np.testing.assert_allclose(c, c_prev + 1.0, atol=1e-12)
    np.testing.assert_allclose(h, np.tanh(c_prev + 1.0), atol=1e-12)


def test_lstm_cell_scalar_by_hand():
    # H = d = 1, gate order (input, forget, output, candidate)
    wx = np.array([[0.5], [-0.3], [0.8], [1.2]])
    wh = np.array([[0.1], [0.2], [-0.4], [0.7]])
    b = np.array([0.05, 0.6, -0.1, 0.0])
    x, hp, cp = 0.9, -0.2, 0.4
    pre = [wx[k, 0] * x + wh[k, 0] * hp + b[k] for k in range(4)]
    i, f, o, g = sigmoid(pre[0]), sigmoid(pre[1]), sigmoid(pre[2]), math.tanh(pre[3])
    c_exp = f * cp + i * g
    h_exp = o * math.tanh(c_exp)
    h, c = lstm_cell([x], [hp], [cp], (wx, wh, b))
    assert c[0] == pytest.approx(c_exp, abs=1e-14)
    assert h[0] == pytest.approx(h_exp, abs=1e-14)


def test_encode_composes_cells():
    p = random_params(1)
    X = embed([4, 7, 5, 9], p.src_emb)
    h = np.zeros(p.hidden)
    c = np.zeros(p.hidden)
    for t in range(4):
        h, c = lstm_cell(X[t], h, c, p.encoder_cell)
        np.testing.assert_allclose(encode(X, p).hidden[t], h, atol=1e-14)
    np.testing.assert_array_equal(encode(X, p).context, h)


def test_decode_logits_first_step_by_hand():
    p = random_params(2)
    X = embed([5, 6, 7], p.src_emb)
    ctx = encode(X, p).context
    Wx, Wh, b = p.decoder_cell
    h, _ = lstm_cell(p.tgt_emb[BOS], ctx, np.zeros(p.hidden), (Wx, Wh, b + p.dec_Wc @ ctx))
    z = p.out_W @ h + p.out_b
    tr = decode_logits(X, p, 1)
    np.testing.assert_allclose(tr.logits[0], z, atol=1e-13)
    np.testing.assert_allclose(tr.probs.sum(axis=1), 1.0)
    assert tr.tokens == [int(np.argmax(z))]


def test_decode_logits_feeds_back_argmax():
    p = random_params(3)
    X = embed([4, 5, 6, 7], p.src_emb)
    free = decode_logits(X, p, 5)
    forced = decode_logits(X, p, 5, teacher=free.tokens)
    np.testing.assert_array_equal(free.logits, forced.logits)


def test_truncate_at_eos():
    assert truncate_at_eos([5, 6, EOS, 7]) == [5, 6]
    assert truncate_at_eos([5, 6]) == [5, 6]


def test_greedy_batch_matches_single():
    p = random_params(4)
    srcs = [[4, 5, 6], [7, 7, 8], [11, 4, 9]]
    batch = greedy_decode_batch(p.src_emb[np.array(srcs)], p, 8)
    assert batch == [greedy_decode(embed(s, p.src_emb), p, 8) for s in srcs]


def test_beam_width_one_equals_greedy_on_50_models():
    for seed in range(50):
        p = random_params(seed, src_vocab=10, tgt_vocab=10, scale=1.0)
        X = embed([4, 5, 6, 7], p.src_emb)
        assert beam_decode(X, p, 1, 8) == greedy_decode(X, p, 8), seed


def _sequence_logprob(p, X, seq):
    """Score of a complete hypothesis: tokens plus <eos> unless at the length cap."""
    tr = decode_logits(X, p, len(seq), teacher=seq[:-1])
    lp = log_softmax(tr.logits)
    return float(sum(lp[t, tok] for t, tok in enumerate(seq)))


@pytest.mark.parametrize("seed", range(5))
def test_full_width_beam_is_exhaustive_argmax(seed):
    p = random_params(seed, src_vocab=6, tgt_vocab=4, scale=1.5)
    X = embed([4, 5], p.src_emb)
    max_len = 3
    best, best_score = None, -np.inf
    for n in range(1, max_len + 1):
        for seq in itertools.product(range(4), repeat=n):
            if EOS in seq[:-1]:
                continue
            if n < max_len and seq[-1] != EOS:
                continue
            score = _sequence_logprob(p, X, list(seq))
            out = list(seq[:-1]) if seq[-1] == EOS else list(seq)
            if score > best_score + 1e-12:
                best, best_score = out, score
    assert beam_decode(X, p, 4**max_len, max_len) == best


def test_params_validate_shapes_and_copy():
    p = random_params(0)
    with pytest.raises(ModelInputError):
        p.replace(enc_b=np.zeros(3))
    q = p.copy()
    assert q.equals(p) and q.src_emb is not p.src_emb
    assert tuple(p.arrays()) == PARAM_ORDER


def test_training_gradients_match_finite_differences():
    p = random_params(5, dim=3, hidden=3, src_vocab=7, tgt_vocab=7, scale=0.5)
    src = np.array([[4, 5, 6], [6, 6, 4]])
    tgt = np.array([[5, 4], [6, 5]])
    _, grads = batch_loss_and_grads(p, src, tgt)
    for name in PARAM_ORDER:

        def f(a, name=name):
            return batch_loss_and_grads(p.replace(**{name: a}), src, tgt)[0]

        fd = central_diff(f, getattr(p, name))
        assert rel_err(grads[name], fd) < 1e-6, name


def test_input_gradient_teacher_forced_matches_fd():
    p = random_params(6)
    X = embed([4, 5, 6, 7], p.src_emb)
    w = np.random.default_rng(0).normal(size=(4, p.tgt_vocab_size))
    teacher = [5, 6, 7]

    def objective(z):
        return float((w * z).sum()), w

    _, g, _ = input_gradient(X, p, 4, objective, teacher)
    fd = central_diff(lambda Y: float((w * decode_logits(Y, p, 4, teacher).logits).sum()), X)
    assert rel_err(g, fd) < 1e-7


def test_input_gradient_free_running_matches_fd():
    p = random_params(7)
    X = embed([4, 5, 6, 7], p.src_emb)
    w = np.random.default_rng(1).normal(size=(4, p.tgt_vocab_size))
    tokens = decode_logits(X, p, 4).tokens

    def f(Y):
        tr = decode_logits(Y, p, 4)
        assert tr.tokens == tokens  # no argmax flip inside the stencil
        return float((w * tr.logits).sum())

    _, g, _ = input_gradient(X, p, 4, lambda z: (float((w * z).sum()), w))
    assert rel_err(g, central_diff(f, X)) < 1e-7


def test_init_is_seeded():
    a = ModelParams.init(4, 4, 9, 9, np.random.default_rng(3))
    b = ModelParams.init(4, 4, 9, 9, np.random.default_rng(3))
    assert a.equals(b)
