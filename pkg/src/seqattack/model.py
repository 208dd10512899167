"""Single-layer LSTM encoder-decoder with hand-written backpropagation.

The encoder folds an LSTM over the input embeddings from a zero state and
the context vector is its last hidden state. The decoder starts from the
context as hidden state (zero cell state), sees the context at every step
through an extra weight block, and is fed the previous output token.

Gate blocks are ordered (input, forget, output, candidate).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .vocab import BOS, EOS


class ModelInputError(ValueError):
    pass


PARAM_ORDER = (
    "src_emb",
    "tgt_emb",
    "enc_Wx",
    "enc_Wh",
    "enc_b",
    "dec_Wx",
    "dec_Wc",
    "dec_Wh",
    "dec_b",
    "out_W",
    "out_b",
)


@dataclass(frozen=True, eq=False)
class ModelParams:
    src_emb: np.ndarray  # (|src vocab|, d)
    tgt_emb: np.ndarray  # (|tgt vocab|, d)
    enc_Wx: np.ndarray  # (4H, d)
    enc_Wh: np.ndarray  # (4H, H)
    enc_b: np.ndarray  # (4H,)
    dec_Wx: np.ndarray  # (4H, d)
    dec_Wc: np.ndarray  # (4H, H) context weights
    dec_Wh: np.ndarray  # (4H, H)
    dec_b: np.ndarray  # (4H,)
    out_W: np.ndarray  # (|tgt vocab|, H)
    out_b: np.ndarray  # (|tgt vocab|,)

    def __post_init__(self):
        for f in fields(self):
            arr = np.ascontiguousarray(getattr(self, f.name), dtype=np.float64)
            object.__setattr__(self, f.name, arr)
        d, H = self.dim, self.hidden
        V = self.tgt_vocab_size
        expected = {
            "src_emb": (self.src_vocab_size, d),
            "tgt_emb": (V, d),
            "enc_Wx": (4 * H, d),
            "enc_Wh": (4 * H, H),
            "enc_b": (4 * H,),
            "dec_Wx": (4 * H, d),
            "dec_Wc": (4 * H, H),
            "dec_Wh": (4 * H, H),
            "dec_b": (4 * H,),
            "out_W": (V, H),
            "out_b": (V,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ModelInputError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def dim(self) -> int:
        return self.src_emb.shape[1]

    @property
    def hidden(self) -> int:
        return self.enc_Wh.shape[1]

    @property
    def src_vocab_size(self) -> int:
        return self.src_emb.shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.out_W.shape[0]

    @property
    def encoder_cell(self):
        return self.enc_Wx, self.enc_Wh, self.enc_b

    @property
    def decoder_cell(self):
        return self.dec_Wx, self.dec_Wh, self.dec_b

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def replace(self, **changes) -> "ModelParams":
        arrays = self.arrays()
        arrays.update(changes)
        return ModelParams(**arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of every parameter array."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays().values(), other.arrays().values())
        )

    @classmethod
    def init(cls, dim, hidden, src_vocab_size, tgt_vocab_size, rng, scale=0.1):
        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        H = hidden
        return cls(
            src_emb=u(src_vocab_size, dim),
            tgt_emb=u(tgt_vocab_size, dim),
            enc_Wx=u(4 * H, dim),
            enc_Wh=u(4 * H, H),
            enc_b=u(4 * H),
            dec_Wx=u(4 * H, dim),
            dec_Wc=u(4 * H, H),
            dec_Wh=u(4 * H, H),
            dec_b=u(4 * H),
            out_W=u(tgt_vocab_size, H),
            out_b=u(tgt_vocab_size),
        )


@dataclass
class EncoderState:
    hidden: np.ndarray  # (N, H): h_1..h_N
    cells: np.ndarray  # (N, H)
    context: np.ndarray  # (H,), equal to hidden[-1]


@dataclass
class DecodeTrace:
    logits: np.ndarray  # (M, |tgt vocab|)
    probs: np.ndarray
    tokens: list[int]

    def __len__(self):
        return len(self.tokens)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def embed(seq, table) -> np.ndarray:
    ids = np.asarray(seq, dtype=np.int64)
    table = np.asarray(table, dtype=np.float64)
    if ids.ndim != 1:
        raise ModelInputError("token sequence must be one-dimensional")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ModelInputError(
            f"token index out of range for table with {table.shape[0]} rows: {ids.tolist()}"
        )
    return table[ids]


def lstm_cell(x, h_prev, c_prev, cell):
    """One LSTM step on single vectors; ``cell`` is a ``(Wx, Wh, b)`` triple."""
    Wx, Wh, b = cell
    h, c, _ = kernels.lstm_forward(
        np.atleast_2d(np.asarray(x, dtype=np.float64)),
        np.atleast_2d(np.asarray(h_prev, dtype=np.float64)),
        np.atleast_2d(np.asarray(c_prev, dtype=np.float64)),
        Wx,
        Wh,
        b,
    )
    return h[0], c[0]


# ---------------------------------------------------------------------------
# batched forward passes that keep what backprop needs


def _encoder_forward(params: ModelParams, X):
    """X: (B, N, d). Returns per-step caches; last hidden state is the context."""
    B, N, _ = X.shape
    if N < 1:
        raise ModelInputError("cannot encode an empty sequence")
    H = params.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(N):
        x = np.ascontiguousarray(X[:, t, :])
        h_new, c_new, gates = kernels.lstm_forward(x, h, c, params.enc_Wx, params.enc_Wh, params.enc_b)
        steps.append((x, h, c, c_new, gates, h_new))
        h, c = h_new, c_new
    return steps


def _encoder_backward(params: ModelParams, steps, dh_last, grads=None):
    B = dh_last.shape[0]
    dX = np.empty((B, len(steps), params.dim))
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for t in range(len(steps) - 1, -1, -1):
        x, h_prev, c_prev, c, gates, _ = steps[t]
        dx, dh, dc, da = kernels.lstm_backward(dh, dc, c_prev, c, gates, params.enc_Wx, params.enc_Wh)
        dX[:, t, :] = dx
        if grads is not None:
            grads["enc_Wx"] += da.T @ x
            grads["enc_Wh"] += da.T @ h_prev
            grads["enc_b"] += da.sum(axis=0)
    return dX


def _decoder_forward(params: ModelParams, ctx, steps, feed=None):
    """Run ``steps`` decoder steps from context ``ctx`` (B, H).

    With ``feed`` (B, steps) the given tokens are the step inputs (teacher
    forcing); otherwise the first input is <bos> and each later input is the
    argmax of the previous logits (lowest index on ties).
    """
    B, H = ctx.shape
    bias = ctx @ params.dec_Wc.T + params.dec_b
    h = ctx
    c = np.zeros((B, H))
    inputs = np.full(B, BOS, dtype=np.int64)
    cache = []
    logits = np.empty((B, steps, params.tgt_vocab_size))
    for t in range(steps):
        if feed is not None:
            inputs = feed[:, t]
        x = params.tgt_emb[inputs]
        h_new, c_new, gates = kernels.lstm_forward(x, h, c, params.dec_Wx, params.dec_Wh, bias)
        z = h_new @ params.out_W.T + params.out_b
        logits[:, t, :] = z
        cache.append((inputs, x, h, c, c_new, gates, h_new))
        h, c = h_new, c_new
        inputs = np.argmax(z, axis=1)
    return logits, {"ctx": ctx, "steps": cache}


def _decoder_backward(params: ModelParams, cache, dZ, grads=None):
    """Backprop logit gradients ``dZ`` (B, steps, V) to the context."""
    steps = cache["steps"]
    ctx = cache["ctx"]
    dh_next = np.zeros_like(ctx)
    dc_next = np.zeros_like(ctx)
    dbias = np.zeros((ctx.shape[0], 4 * params.hidden))
    for t in range(len(steps) - 1, -1, -1):
        inputs, x, h_prev, c_prev, c, gates, h = steps[t]
        dz = dZ[:, t, :]
        dh = dz @ params.out_W + dh_next
        dx, dh_next, dc_next, da = kernels.lstm_backward(
            dh, dc_next, c_prev, c, gates, params.dec_Wx, params.dec_Wh
        )
        dbias += da
        if grads is not None:
            grads["out_W"] += dz.T @ h
            grads["out_b"] += dz.sum(axis=0)
            grads["dec_Wx"] += da.T @ x
            grads["dec_Wh"] += da.T @ h_prev
            np.add.at(grads["tgt_emb"], inputs, dx)
    if grads is not None:
        grads["dec_Wc"] += dbias.T @ ctx
        grads["dec_b"] += dbias.sum(axis=0)
    return dh_next + dbias @ params.dec_Wc


# ---------------------------------------------------------------------------
# public single-sequence API


def encode(X, params: ModelParams) -> EncoderState:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ModelInputError("encode needs a non-empty (N, d) matrix")
    steps = _encoder_forward(params, X[None])
    hs = np.stack([s[5][0] for s in steps])
    cs = np.stack([s[3][0] for s in steps])
    return EncoderState(hidden=hs, cells=cs, context=hs[-1])


def _context(X, params):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ModelInputError("expected a non-empty (N, d) input matrix")
    return _encoder_forward(params, X[None])


def decode_logits(X, params: ModelParams, steps: int, teacher=None) -> DecodeTrace:
    """Run exactly ``steps`` decoder steps regardless of <eos>.

    ``teacher`` is an optional output sequence whose tokens are fed (after
    <bos>) instead of the model's own greedy predictions.
    """
    if steps < 1:
        raise ModelInputError("steps must be >= 1")
    enc = _context(X, params)
    feed = None if teacher is None else _teacher_feed(teacher, steps)
    logits, _ = _decoder_forward(params, enc[-1][5], steps, feed)
    z = logits[0]
    return DecodeTrace(logits=z, probs=softmax(z), tokens=[int(k) for k in np.argmax(z, axis=1)])


def _teacher_feed(teacher, steps):
    seq = [BOS] + [int(t) for t in teacher]
    if len(seq) < steps:
        seq += [EOS] * (steps - len(seq))
    return np.asarray(seq[:steps], dtype=np.int64)[None, :]


def truncate_at_eos(tokens) -> list[int]:
    out = []
    for t in tokens:
        if t == EOS:
            break
        out.append(int(t))
    return out


def greedy_decode(X, params: ModelParams, max_len: int) -> list[int]:
    if max_len < 1:
        raise ModelInputError("max_len must be >= 1")
    return truncate_at_eos(decode_logits(X, params, max_len).tokens)


def greedy_decode_batch(X, params: ModelParams, max_len: int) -> list[list[int]]:
    """Greedy decoding of a (B, N, d) batch of equal-length inputs."""
    steps = _encoder_forward(params, np.asarray(X, dtype=np.float64))
    logits, _ = _decoder_forward(params, steps[-1][5], max_len)
    return [truncate_at_eos(row) for row in np.argmax(logits, axis=2).tolist()]


def beam_decode(X, params: ModelParams, beam_width: int = 5, max_len: int = 50) -> list[int]:
    """Beam search over sum of log-probabilities.

    A hypothesis is complete when it emits <eos> or reaches ``max_len``
    tokens. Returns the best complete hypothesis without the <eos>.
    Ties in score go to the lexicographically smaller token sequence.
    """
    if beam_width < 1:
        raise ModelInputError("beam_width must be >= 1")
    if max_len < 1:
        raise ModelInputError("max_len must be >= 1")
    ctx = _context(X, params)[-1][5]
    bias0 = ctx @ params.dec_Wc.T + params.dec_b
    H = params.hidden

    live = [((), 0.0)]
    h = ctx.copy()
    c = np.zeros((1, H))
    finished = []
    for step in range(max_len):
        last = np.array([seq[-1] if seq else BOS for seq, _ in live], dtype=np.int64)
        bias = np.repeat(bias0, len(live), axis=0)
        h, c, _ = kernels.lstm_forward(params.tgt_emb[last], h, c, params.dec_Wx, params.dec_Wh, bias)
        logp = log_softmax(h @ params.out_W.T + params.out_b)
        cands = []
        for b, (seq, score) in enumerate(live):
            for tok in range(logp.shape[1]):
                cands.append((score + logp[b, tok], seq + (tok,), b))
        cands.sort(key=lambda item: (-item[0], item[1]))
        keep = []
        for score, seq, b in cands[:beam_width]:
            if seq[-1] == EOS:
                finished.append((seq[:-1], score))
            elif step == max_len - 1:
                finished.append((seq, score))
            else:
                keep.append((seq, score, b))
        if not keep:
            break
        rows = [b for _, _, b in keep]
        h, c = h[rows], c[rows]
        live = [(seq, score) for seq, score, _ in keep]
    finished.sort(key=lambda item: (-item[1], item[0]))
    return list(finished[0][0])


# ---------------------------------------------------------------------------
# gradients


def input_gradient(X, params: ModelParams, steps: int, objective, teacher=None):
    """Value and gradient of ``objective`` w.r.t. the input embeddings.

    ``objective(logits)`` receives the (steps, V) logit matrix from a
    free-running (or teacher-fed) decode of ``X`` and returns
    ``(value, dvalue/dlogits)``. Fed tokens are treated as constants.
    Returns ``(value, grad (N, d), trace)``.
    """
    enc = _context(X, params)
    feed = None if teacher is None else _teacher_feed(teacher, steps)
    logits, cache = _decoder_forward(params, enc[-1][5], steps, feed)
    z = logits[0]
    value, dz = objective(z)
    dctx = _decoder_backward(params, cache, np.asarray(dz, dtype=np.float64)[None])
    dX = _encoder_backward(params, enc, dctx)
    trace = DecodeTrace(logits=z, probs=softmax(z), tokens=[int(k) for k in np.argmax(z, axis=1)])
    return value, dX[0], trace


def batch_loss_and_grads(params: ModelParams, src, tgt):
    """Teacher-forced mean cross-entropy over a batch of equal-length pairs.

    ``src`` (B, N) and ``tgt`` (B, M) hold token ids without specials; the
    decoder is fed <bos> + target and predicts target + <eos>.
    Returns ``(loss, grads)`` with one gradient array per parameter.
    """
    src = np.asarray(src, dtype=np.int64)
    tgt = np.asarray(tgt, dtype=np.int64)
    B = src.shape[0]
    feed = np.concatenate([np.full((B, 1), BOS), tgt], axis=1)
    gold = np.concatenate([tgt, np.full((B, 1), EOS)], axis=1)
    T = feed.shape[1]

    X = params.src_emb[src]
    enc = _encoder_forward(params, X)
    logits, cache = _decoder_forward(params, enc[-1][5], T, feed)
    logp = log_softmax(logits)
    rows, cols = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    loss = -logp[rows, cols, gold].mean()

    dZ = np.exp(logp)
    dZ[rows, cols, gold] -= 1.0
    dZ /= B * T

    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    dctx = _decoder_backward(params, cache, dZ, grads)
    dX = _encoder_backward(params, enc, dctx, grads)
    np.add.at(grads["src_emb"], src, dX)
    return float(loss), grads
