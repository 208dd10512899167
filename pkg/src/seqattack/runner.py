"""Batch attack and baseline runs over a list of inputs."""

from __future__ import annotations

import dataclasses

import numpy as np

from .attack import AttackConfig, decode_output, goal_reached, run_attack
from .baseline import random_substitution
from .evaluation import SampleRow, bleu
from .index import EmbeddingIndex
from .model import ModelParams
from .vocab import RESERVED


def sample_keywords(params, source, num, seed, sample_id, stop=frozenset(), fresh=True, beam=0):
    """Draw ``num`` distinct target keywords for one sample.

    Candidates are the non-reserved, non-stop-word target tokens; with
    ``fresh`` the tokens of the clean output are left out as well. The
    draw depends only on ``(seed, sample_id)``, so attack and baseline
    runs see the same keywords.
    """
    pool = [k for k in range(len(RESERVED), params.tgt_vocab_size) if k not in stop]
    if fresh:
        clean = set(decode_output(params, source, beam))
        pool = [k for k in pool if k not in clean]
    if len(pool) < num:
        raise ValueError(f"only {len(pool)} candidate keywords for sample {sample_id}")
    rng = np.random.default_rng([seed, sample_id])
    return tuple(int(k) for k in rng.choice(pool, size=num, replace=False))


def _configs(params, inputs, config, mode, num_keywords, keywords, seed, stop, fresh):
    mode = mode or config.mode
    for i, src in enumerate(inputs):
        if mode == "keywords":
            kws = keywords or sample_keywords(
                params, src, num_keywords, seed, i, stop, fresh, config.beam
            )
            yield i, src, dataclasses.replace(config, mode="keywords", keywords=kws)
        else:
            yield i, src, dataclasses.replace(config, mode=mode, keywords=())


def attack_batch(
    params: ModelParams,
    inputs,
    config: AttackConfig,
    index: EmbeddingIndex,
    *,
    mode=None,
    num_keywords: int = 1,
    keywords=None,
    seed: int = 0,
    stop=frozenset(),
    fresh: bool = True,
):
    """Run the attack on every input. Returns ``(rows, results)``.

    ``mode`` overrides ``config.mode``; in keyword mode each sample gets
    ``keywords`` if given, else ``num_keywords`` freshly sampled ones.
    """
    rows, results = [], []
    for i, src, cfg in _configs(
        params, inputs, config, mode, num_keywords, keywords, seed, stop, fresh
    ):
        res = run_attack(params, src, cfg, index)
        k = len(cfg.keywords) if cfg.mode == "keywords" else 0
        rows.append(
            SampleRow(
                id=str(i),
                mode=cfg.mode,
                k=k,
                success=res.success,
                bleu=bleu(res.adversarial, res.original),
                changed=res.changed,
                iters=res.iterations,
            )
        )
        results.append(res)
    return rows, results


def baseline_batch(
    params: ModelParams,
    inputs,
    config: AttackConfig,
    budgets,
    *,
    mode=None,
    num_keywords: int = 1,
    keywords=None,
    seed: int = 0,
    stop=frozenset(),
    fresh: bool = True,
    restarts: int = 10,
):
    """Random-substitution control with per-sample word budgets."""
    rows = []
    configs = _configs(params, inputs, config, mode, num_keywords, keywords, seed, stop, fresh)
    for (i, src, cfg), budget in zip(configs, budgets):
        clean = decode_output(params, src, cfg.beam)

        def goal(out, cfg=cfg, clean=clean):
            return goal_reached(cfg, out, clean)

        rng = np.random.default_rng([seed, i, 1])
        res = random_substitution(params, src, budget, goal, rng, restarts, cfg.beam)
        rows.append(
            SampleRow(
                id=str(i),
                mode=cfg.mode,
                k=len(cfg.keywords) if cfg.mode == "keywords" else 0,
                success=res.success,
                bleu=bleu(res.adversarial, src),
                changed=res.changed,
                iters=res.tries,
            )
        )
    return rows

