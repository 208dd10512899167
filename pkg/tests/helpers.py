"""Shared builders for the test suite."""

import numpy as np

from seqattack.model import ModelParams


def random_params(seed=0, dim=8, hidden=8, src_vocab=12, tgt_vocab=12, scale=0.5):
    """A random model with weights large enough to give non-flat logits."""
    rng = np.random.default_rng(seed)
    return ModelParams.init(dim, hidden, src_vocab, tgt_vocab, rng, scale=scale)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


ACCEPTANCE = []


def record(name, passed, detail):
    """Log one acceptance line; the terminal summary prints them all."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed
