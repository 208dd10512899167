"""Synthetic transduction corpora and a plain-SGD trainer for the victim model."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, batch_loss_and_grads, greedy_decode_batch
from .vocab import Vocabulary

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Corpus:
    pairs: list[tuple[tuple[int, ...], tuple[int, ...]]]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary

    def __post_init__(self):
        self.pairs = [(tuple(int(t) for t in s), tuple(int(t) for t in t_)) for s, t_ in self.pairs]
        for n, (s, t) in enumerate(self.pairs):
            if not s or not t:
                raise ValueError(f"pair {n} has an empty side")
            if max(s) >= len(self.src_vocab) or min(s) < 0:
                raise ValueError(f"pair {n}: source index out of range")
            if max(t) >= len(self.tgt_vocab) or min(t) < 0:
                raise ValueError(f"pair {n}: target index out of range")

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.pairs == other.pairs
            and self.src_vocab.tokens == other.src_vocab.tokens
            and self.tgt_vocab.tokens == other.tgt_vocab.tokens
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    lr: float = 1.0
    batch_size: int = 16
    hidden: int = 128
    dim: int = 32
    seed: int = 0
    clip: float | None = 5.0
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("lr", "batch_size", "hidden", "dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip must be positive or None")


# ---------------------------------------------------------------------------
# task generators


def _check_task_args(vocab_size, len_range):
    lo, hi = len_range
    if vocab_size <= 8:
        raise ValueError("vocab_size must exceed 8")
    if not 2 <= lo <= hi <= 20:
        raise ValueError(f"len_range must lie within [2, 20], got {len_range}")


def _random_sources(n_pairs, vocab, len_range, rng):
    lo, hi = len_range
    content = np.asarray(vocab.content_indices())
    out = []
    for _ in range(n_pairs):
        n = int(rng.integers(lo, hi + 1))
        out.append(tuple(int(t) for t in rng.choice(content, size=n)))
    return out


def gen_copy_task(n_pairs, vocab_size, len_range, seed) -> Corpus:
    _check_task_args(vocab_size, len_range)
    vocab = Vocabulary.synthetic(vocab_size)
    rng = np.random.default_rng(seed)
    srcs = _random_sources(n_pairs, vocab, len_range, rng)
    return Corpus([(s, s) for s in srcs], vocab, vocab)


def gen_reverse_task(n_pairs, vocab_size, len_range, seed) -> Corpus:
    _check_task_args(vocab_size, len_range)
    vocab = Vocabulary.synthetic(vocab_size)
    rng = np.random.default_rng(seed)
    srcs = _random_sources(n_pairs, vocab, len_range, rng)
    return Corpus([(s, s[::-1]) for s in srcs], vocab, vocab)


def toy_translate(src, mapping) -> tuple[int, ...]:
    """Map every token through ``mapping`` then swap the first two tokens."""
    out = [mapping[t] for t in src]
    if len(out) >= 2:
        out[0], out[1] = out[1], out[0]
    return tuple(out)


def translation_map(vocab_size, seed) -> dict[int, int]:
    """Seeded bijection on the non-reserved indices ``4 .. vocab_size-1``."""
    content = np.arange(4, vocab_size)
    image = np.random.default_rng([seed, 0x5EED]).permutation(content)
    return {int(a): int(b) for a, b in zip(content, image)}


def gen_toy_translation(n_pairs, vocab_size, len_range, seed):
    """Returns ``(corpus, mapping)``.

    Target tokens get their own vocabulary (``t4, t5, ...``) of the same
    size. The bijection depends only on ``(vocab_size, seed)`` while the
    sources draw from a separate stream, so a held-out corpus generated
    with another seed uses a different bijection: pass the training seed
    as ``map_seed`` through :func:`gen_toy_translation_split` instead.
    """
    return gen_toy_translation_split(n_pairs, vocab_size, len_range, seed, map_seed=seed)


def gen_toy_translation_split(n_pairs, vocab_size, len_range, seed, map_seed):
    _check_task_args(vocab_size, len_range)
    src_vocab = Vocabulary.synthetic(vocab_size)
    tgt_vocab = Vocabulary(src_vocab.tokens[:4] + tuple(f"t{i}" for i in range(4, vocab_size)))
    mapping = translation_map(vocab_size, map_seed)
    rng = np.random.default_rng(seed)
    srcs = _random_sources(n_pairs, src_vocab, len_range, rng)
    return Corpus([(s, toy_translate(s, mapping)) for s in srcs], src_vocab, tgt_vocab), mapping


TASKS = {"copy": gen_copy_task, "reverse": gen_reverse_task}


def gen_task(kind, n_pairs, vocab_size, len_range, seed, map_seed=None) -> Corpus:
    if kind == "translate":
        ms = seed if map_seed is None else map_seed
        return gen_toy_translation_split(n_pairs, vocab_size, len_range, seed, ms)[0]
    try:
        return TASKS[kind](n_pairs, vocab_size, len_range, seed)
    except KeyError:
        raise ValueError(f"unknown task kind {kind!r}") from None


# ---------------------------------------------------------------------------
# training


def _length_batches(pairs, batch_size, rng):
    """Shuffled batches of pairs sharing source and target lengths."""
    groups = defaultdict(list)
    for i, (s, t) in enumerate(pairs):
        groups[(len(s), len(t))].append(i)
    batches = []
    for key in sorted(groups):
        idx = np.asarray(groups[key])
        idx = idx[rng.permutation(len(idx))]
        batches.extend(idx[s : s + batch_size] for s in range(0, len(idx), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def corpus_loss(params: ModelParams, corpus: Corpus, batch_size: int = 256) -> float:
    """Token-averaged teacher-forced cross-entropy over the whole corpus."""
    total, count = 0.0, 0
    rng = np.random.default_rng(0)
    for batch in _length_batches(corpus.pairs, batch_size, rng):
        src = np.array([corpus.pairs[i][0] for i in batch])
        tgt = np.array([corpus.pairs[i][1] for i in batch])
        loss, _ = batch_loss_and_grads(params, src, tgt)
        n = tgt.size + len(batch)
        total += loss * n
        count += n
    return total / count


def train(corpus: Corpus, config: TrainConfig, progress=None):
    """Plain minibatch SGD with teacher forcing.

    Returns ``(params, losses)`` where ``losses[0]`` is the corpus loss at
    initialisation and ``losses[e]`` the mean batch loss during epoch ``e``.
    ``progress(epoch, loss, params)`` is called after each entry is recorded.
    """
    if not corpus.pairs:
        raise ValueError("cannot train on an empty corpus")
    rng = np.random.default_rng(config.seed)
    params = ModelParams.init(
        config.dim, config.hidden, len(corpus.src_vocab), len(corpus.tgt_vocab), rng
    )
    arrays = {k: v.copy() for k, v in params.arrays().items()}
    losses = [corpus_loss(params, corpus)]
    if progress:
        progress(0, losses[0], params)
    for epoch in range(1, config.epochs + 1):
        batch_losses = []
        for batch in _length_batches(corpus.pairs, config.batch_size, rng):
            src = np.array([corpus.pairs[i][0] for i in batch])
            tgt = np.array([corpus.pairs[i][1] for i in batch])
            loss, grads = batch_loss_and_grads(ModelParams(**arrays), src, tgt)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}")
            scale = config.lr
            if config.clip is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > config.clip:
                    scale *= config.clip / norm
            for name, g in grads.items():
                if config.weight_decay:
                    arrays[name] *= 1.0 - config.lr * config.weight_decay
                arrays[name] -= scale * g
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
        if progress:
            progress(epoch, losses[-1], ModelParams(**arrays))
    params = ModelParams(**arrays)
    if not all(np.isfinite(a).all() for a in arrays.values()):
        raise TrainingDiverged("parameters became non-finite")
    return params, losses


def sequence_accuracy(params: ModelParams, corpus: Corpus, extra_len: int = 5) -> float:
    """Fraction of pairs whose greedy decoding equals the target exactly."""
    if not corpus.pairs:
        return 0.0
    groups = defaultdict(list)
    for i, (s, _) in enumerate(corpus.pairs):
        groups[len(s)].append(i)
    correct = 0
    for n, idx in groups.items():
        max_len = max(len(corpus.pairs[i][1]) for i in idx) + extra_len
        X = params.src_emb[np.array([corpus.pairs[i][0] for i in idx])]
        outs = greedy_decode_batch(X, params, max_len)
        correct += sum(out == list(corpus.pairs[i][1]) for i, out in zip(idx, outs))
    return correct / len(corpus.pairs)
