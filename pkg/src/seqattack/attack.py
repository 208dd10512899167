"""Attack objectives and the projected proximal gradient loop.

The attack minimises, over a perturbation ``delta`` of the input embeddings,

    L(X + delta) + lambda1 * sum_i ||delta_i|| + lambda2 * sum_i min_j ||x_i + delta_i - w_j||

where ``L`` is the non-overlapping hinge loss or the masked keyword loss
computed from the decoder logits. The smooth part is handled by gradient
steps, the group lasso by its proximal operator, and every iterate is
projected onto the embedding codebook to read off a token sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .index import EmbeddingIndex
from .model import ModelParams, beam_decode, embed, greedy_decode, input_gradient
from .vocab import RESERVED

log = logging.getLogger(__name__)

# keyword loss for a keyword with no unmasked position left to occupy
KEYWORD_SENTINEL = 1e6

MODES = ("non-overlapping", "keywords")
PROJECTIONS = ("hybrid", "every")


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    mode: str = "non-overlapping"
    keywords: tuple[int, ...] = ()
    eps: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 0.5
    iters: int = 100
    immutable: frozenset[int] = frozenset()
    projection: str = "hybrid"
    teacher_forcing: bool = False
    early_stop: bool = True
    beam: int = 0  # judge success on beam-search output of this width; 0 = greedy

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(int(k) for k in self.keywords))
        object.__setattr__(self, "immutable", frozenset(int(i) for i in self.immutable))
        if self.mode not in MODES:
            raise AttackConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "keywords":
            if not self.keywords:
                raise AttackConfigError("keyword mode needs at least one keyword")
            bad = [k for k in self.keywords if k < len(RESERVED)]
            if bad:
                raise AttackConfigError(f"reserved tokens cannot be keywords: {bad}")
        if self.eps < 0:
            raise AttackConfigError("eps must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise AttackConfigError("lambda1 and lambda2 must be >= 0")
        if self.lr <= 0:
            raise AttackConfigError("lr must be > 0")
        if self.iters < 0:
            raise AttackConfigError("iters must be >= 0")
        if self.projection not in PROJECTIONS:
            raise AttackConfigError(f"projection must be one of {PROJECTIONS}")
        if self.beam < 0:
            raise AttackConfigError("beam must be >= 0")


@dataclass
class AttackResult:
    adversarial: list[int]
    original: list[int]
    original_output: list[int]
    adversarial_output: list[int]
    success: bool
    changed: int
    iterations: int
    final_objective: float
    objective_trace: list[float] = field(default_factory=list)
    token_trace: list[list[int]] = field(default_factory=list)


def _logits(trace):
    return np.asarray(getattr(trace, "logits", trace), dtype=np.float64)


def _best_other(z, k):
    """Index and value of the largest entry of ``z`` other than ``k``."""
    masked = z.copy()
    masked[k] = -np.inf
    y = int(np.argmax(masked))
    return y, z[y]


# ---------------------------------------------------------------------------
# losses (value, d value / d logits)


def non_overlapping_objective(logits, s, eps):
    z = _logits(logits)
    if len(s) != z.shape[0]:
        raise ValueError(f"original output has {len(s)} tokens, trace has {z.shape[0]} steps")
    value = 0.0
    grad = np.zeros_like(z)
    for t, st in enumerate(s):
        y, best = _best_other(z[t], st)
        gap = z[t, st] - best
        # ties select -eps, whose subgradient is zero
        if gap > -eps:
            value += gap
            grad[t, st] += 1.0
            grad[t, y] -= 1.0
        else:
            value -= eps
    return value, grad


def loss_non_overlapping(trace, s, eps) -> float:
    return non_overlapping_objective(trace, s, eps)[0]


def keyword_term(z_t, k, eps) -> float:
    z_t = np.asarray(z_t, dtype=np.float64)
    _, best = _best_other(z_t, k)
    return max(-eps, best - z_t[k])


def position_mask(trace, keywords) -> np.ndarray:
    """True where the step's top-1 token is one of the keywords."""
    z = _logits(trace)
    top = np.argmax(z, axis=1)
    return np.isin(top, np.asarray(list(keywords), dtype=np.int64))


def keywords_objective(logits, keywords, eps):
    z = _logits(logits)
    masked = position_mask(z, keywords)
    value = 0.0
    grad = np.zeros_like(z)
    for k in keywords:
        best_t, best_term, best_y = -1, np.inf, -1
        for t in range(z.shape[0]):
            if masked[t]:
                continue
            y, other = _best_other(z[t], k)
            term = max(-eps, other - z[t, k])
            if term < best_term:
                best_t, best_term, best_y = t, term, y
        if best_t < 0:
            value += KEYWORD_SENTINEL
            continue
        value += best_term
        if best_term > -eps:
            grad[best_t, best_y] += 1.0
            grad[best_t, k] -= 1.0
    return value, grad


def loss_keywords(trace, keywords, eps) -> float:
    if not keywords:
        raise ValueError("keyword set must be non-empty")
    return keywords_objective(trace, keywords, eps)[0]


# ---------------------------------------------------------------------------
# regularisers and the proximal step


def group_lasso_penalty(delta) -> float:
    return float(np.linalg.norm(np.asarray(delta, dtype=np.float64), axis=1).sum())


def gradient_reg_penalty(Y, index: EmbeddingIndex):
    """Sum of distances from each row of ``Y`` to its nearest codebook row.

    Returns ``(value, grad)``; the gradient of a row is the unit vector
    pointing away from its nearest codebook row (zero at distance 0).
    """
    Y = np.asarray(Y, dtype=np.float64)
    idx, dist = index.nearest_many(Y)
    diff = Y - index.table[idx]
    grad = np.zeros_like(Y)
    nz = dist > 0
    grad[nz] = diff[nz] / dist[nz, None]
    return float(dist.sum()), grad


def prox_group_lasso(delta, tau) -> np.ndarray:
    """Block soft-thresholding of every row with threshold ``tau``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    delta = np.asarray(delta, dtype=np.float64)
    norms = np.linalg.norm(delta, axis=1)
    scale = np.zeros_like(norms)
    keep = norms > tau
    scale[keep] = 1.0 - tau / norms[keep]
    return delta * scale[:, None]


def proximal_step(delta, grad, lr, lambda1, frozen=None):
    """Gradient descent step on the smooth part followed by the group-lasso prox."""
    out = prox_group_lasso(delta - lr * grad, lr * lambda1)
    if frozen is not None:
        out[frozen] = 0.0
    return out


# ---------------------------------------------------------------------------
# success predicates


def is_non_overlap_success(adv_output, original_output) -> bool:
    return all(a != s for a, s in zip(adv_output, original_output))


def is_keyword_success(adv_output, keywords) -> bool:
    if not keywords:
        raise ValueError("keyword set must be non-empty")
    return set(keywords) <= set(adv_output)


def changed_positions(original, adversarial) -> int:
    if len(original) != len(adversarial):
        raise ValueError("sequences differ in length")
    return sum(a != b for a, b in zip(original, adversarial))


def output_limit(n_input: int) -> int:
    return 2 * n_input + 5


def decode_output(params: ModelParams, tokens, beam: int = 0, max_len=None) -> list[int]:
    X = embed(tokens, params.src_emb)
    max_len = max_len or output_limit(len(tokens))
    if beam:
        return beam_decode(X, params, beam, max_len)
    return greedy_decode(X, params, max_len)


def goal_reached(config: AttackConfig, adv_output, original_output) -> bool:
    if config.mode == "keywords":
        return is_keyword_success(adv_output, config.keywords)
    return is_non_overlap_success(adv_output, original_output)


# ---------------------------------------------------------------------------
# the attack loop


def run_attack(
    params: ModelParams, source, config: AttackConfig, index: EmbeddingIndex
) -> AttackResult:
    """Craft an adversarial version of ``source`` (a list of token ids).

    Each iteration takes a gradient step on the hinge loss plus the
    gradient regulariser, applies the group-lasso prox, projects onto the
    codebook and checks the goal on the projected token sequence. In
    ``hybrid`` projection mode the continuous perturbation is kept between
    iterations; in ``every`` mode it is replaced by the projected one.
    Returns the successful iterate with the fewest changed words, or the
    last iterate when none succeeded.
    """
    source = [int(t) for t in source]
    if not source:
        raise ValueError("cannot attack an empty input")
    N = len(source)
    X = embed(source, params.src_emb)
    frozen = np.zeros(N, dtype=bool)
    for i in config.immutable:
        if 0 <= i < N:
            frozen[i] = True
    frozen |= np.asarray(source) < len(RESERVED)

    original_output = decode_output(params, source, config.beam)
    steps = max(len(original_output), 1)
    teacher = original_output if config.teacher_forcing else None
    if config.mode == "keywords":
        kws = config.keywords

        def objective(z):
            return keywords_objective(z, kws, config.eps)

    else:
        padded = original_output if original_output else [RESERVED.index("<eos>")]

        def objective(z):
            return non_overlapping_objective(z, padded, config.eps)

    delta = np.zeros_like(X)
    trace, token_trace = [], []
    best = None
    last = (list(source), list(original_output))
    iterations = 0
    final = np.nan
    for r in range(1, config.iters + 1):
        iterations = r
        Y = X + delta
        loss, g_loss, _ = input_gradient(Y, params, steps, objective, teacher)
        reg, g_reg = gradient_reg_penalty(Y, index) if config.lambda2 else (0.0, 0.0)
        final = loss + config.lambda1 * group_lasso_penalty(delta) + config.lambda2 * reg
        trace.append(float(final))
        grad = g_loss + config.lambda2 * g_reg
        grad[frozen] = 0.0
        delta = proximal_step(delta, grad, config.lr, config.lambda1, frozen)

        tokens, snapped = index.project_rows(X + delta)
        for i in np.flatnonzero(frozen):
            tokens[i] = source[i]
            snapped[i] = X[i]
        if config.projection == "every":
            delta = snapped - X
        token_trace.append(list(tokens))

        adv_output = decode_output(params, tokens, config.beam)
        last = (tokens, adv_output)
        if goal_reached(config, adv_output, original_output):
            changed = changed_positions(source, tokens)
            if best is None or changed < best[2]:
                best = (tokens, adv_output, changed)
            if config.early_stop:
                break

    if best is not None:
        adversarial, adv_output, changed = best
    else:
        adversarial, adv_output = last
        changed = changed_positions(source, adversarial)
    return AttackResult(
        adversarial=list(adversarial),
        original=source,
        original_output=list(original_output),
        adversarial_output=list(adv_output),
        success=best is not None,
        changed=changed,
        iterations=iterations,
        final_objective=float(final),
        objective_trace=trace,
        token_trace=token_trace,
    )
