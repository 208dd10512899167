"""Word-substitution baselines: random replacement and exhaustive search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .attack import output_limit
from .model import ModelParams, beam_decode, embed, greedy_decode_batch
from .vocab import RESERVED


@dataclass
class SubstitutionResult:
    adversarial: list[int]
    output: list[int]
    success: bool
    changed: int
    tries: int


def _decode_many(params: ModelParams, candidates, beam: int = 0):
    """Decode equal-length candidate inputs; batched when greedy."""
    if not candidates:
        return []
    max_len = output_limit(len(candidates[0]))
    if beam:
        return [beam_decode(embed(c, params.src_emb), params, beam, max_len) for c in candidates]
    outs = []
    for s in range(0, len(candidates), 4096):
        X = params.src_emb[np.asarray(candidates[s : s + 4096])]
        outs.extend(greedy_decode_batch(X, params, max_len))
    return outs


def _mutable_positions(source):
    return [i for i, t in enumerate(source) if t >= len(RESERVED)]


def random_substitution(
    params: ModelParams, source, budget: int, goal, rng, restarts: int = 10, beam: int = 0
) -> SubstitutionResult:
    """Replace ``budget`` random words with random other words, ``restarts`` times.

    ``goal(output) -> bool`` decides success. Positions holding reserved
    tokens are never replaced. Returns the first successful try, else the
    last one.
    """
    source = [int(t) for t in source]
    positions = _mutable_positions(source)
    budget = min(int(budget), len(positions))
    content = np.arange(len(RESERVED), params.src_vocab_size)
    if budget == 0:
        out = _decode_many(params, [source], beam)[0]
        return SubstitutionResult(source, out, bool(goal(out)), 0, 1)
    result = None
    for attempt in range(1, restarts + 1):
        cand = list(source)
        for pos in rng.choice(positions, size=budget, replace=False):
            choices = content[content != source[pos]]
            cand[pos] = int(rng.choice(choices))
        out = _decode_many(params, [cand], beam)[0]
        result = SubstitutionResult(cand, out, bool(goal(out)), budget, attempt)
        if result.success:
            break
    return result


def substitutions(source, budget: int, vocab_size: int):
    """Every input that differs from ``source`` in 1..budget mutable positions."""
    source = [int(t) for t in source]
    positions = _mutable_positions(source)
    for b in range(1, budget + 1):
        for pos in itertools.combinations(positions, b):
            pools = [[w for w in range(len(RESERVED), vocab_size) if w != source[p]] for p in pos]
            for reps in itertools.product(*pools):
                cand = list(source)
                for p, w in zip(pos, reps):
                    cand[p] = w
                yield cand


def exhaustive_search(params: ModelParams, source, budget: int, goal, beam: int = 0):
    """All inputs within ``budget`` substitutions whose output satisfies ``goal``."""
    cands = list(substitutions(source, budget, params.src_vocab_size))
    outs = _decode_many(params, cands, beam)
    return [(c, o) for c, o in zip(cands, outs) if goal(o)]
