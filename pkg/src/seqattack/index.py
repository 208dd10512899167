"""Nearest-neighbour search over the input embedding codebook."""

from __future__ import annotations

import numpy as np

from . import kernels
from .vocab import RESERVED


class IndexConfigError(ValueError):
    pass


class EmbeddingIndex:
    """Exact Euclidean nearest-row search over an embedding table.

    Rows listed in ``excluded`` (by default the reserved tokens) are never
    returned. Ties resolve to the lowest row index. The table is copied and
    frozen, so an index can be shared freely between attacks.
    """

    def __init__(self, table, excluded=range(len(RESERVED))):
        table = np.array(table, dtype=np.float64, copy=True)
        if table.ndim != 2 or table.shape[0] == 0:
            raise IndexConfigError("embedding table must be a non-empty 2-D array")
        if not np.isfinite(table).all():
            raise IndexConfigError("embedding table has non-finite entries")
        allowed = np.ones(table.shape[0], dtype=bool)
        for i in excluded:
            if 0 <= i < table.shape[0]:
                allowed[i] = False
        if not allowed.any():
            raise IndexConfigError("every row of the embedding table is excluded")
        table.setflags(write=False)
        allowed.setflags(write=False)
        self.table = table
        self.allowed = allowed

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def nearest(self, v):
        """Return ``(row index, distance)`` of the closest allowed row."""
        idx, dist = self.nearest_many(np.asarray(v, dtype=np.float64)[None, :])
        return int(idx[0]), float(dist[0])

    def nearest_many(self, Q):
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise ValueError(f"queries must have shape (n, {self.dim})")
        return kernels.nearest(Q, self.table, self.allowed)

    def project_rows(self, M):
        """Snap every row of ``M`` to its nearest codebook row.

        Returns the token indices and the snapped matrix.
        """
        idx, _ = self.nearest_many(M)
        return [int(i) for i in idx], self.table[idx].copy()


def build(table, excluded=range(len(RESERVED)), backend="exact", **kwargs):
    if backend == "exact":
        return EmbeddingIndex(table, excluded)
    if backend == "ivf":
        return IVFIndex(table, excluded, **kwargs)
    raise IndexConfigError(f"unknown index backend {backend!r}")


class IVFIndex(EmbeddingIndex):
    """Approximate search: k-means cells, probing the closest ``n_probe`` cells.

    Construction runs a recall@1 self-check against the exact scan and
    refuses to build when recall falls below ``min_recall``.
    """

    def __init__(
        self,
        table,
        excluded=range(len(RESERVED)),
        n_cells=None,
        n_probe=None,
        seed=0,
        n_check=10_000,
        min_recall=0.99,
    ):
        super().__init__(table, excluded)
        rows = np.flatnonzero(self.allowed)
        pts = self.table[rows]
        rng = np.random.default_rng(seed)
        k = n_cells or max(1, int(round(np.sqrt(len(rows)))))
        k = min(k, len(rows))
        self.n_probe = min(k, n_probe or max(1, k // 4 + 1))
        centroids = pts[rng.choice(len(rows), size=k, replace=False)].copy()
        everything = np.ones(k, dtype=bool)
        for _ in range(25):
            assign, _ = kernels.nearest(pts, centroids, everything)
            for c in range(k):
                members = pts[assign == c]
                if len(members):
                    centroids[c] = members.mean(axis=0)
        assign, _ = kernels.nearest(pts, centroids, everything)
        self.centroids = centroids
        self.cells = [rows[assign == c] for c in range(k)]
        self.recall = self.self_check(n_check, rng)
        if self.recall < min_recall:
            raise IndexConfigError(
                f"approximate index recall@1 {self.recall:.4f} is below {min_recall}"
            )

    def self_check(self, n_queries, rng) -> float:
        rows = np.flatnonzero(self.allowed)
        spread = self.table[rows].std(axis=0).mean() or 1.0
        base = self.table[rng.choice(rows, size=n_queries)]
        Q = base + rng.normal(scale=spread, size=base.shape)
        exact, _ = kernels.nearest(Q, self.table, self.allowed)
        approx, _ = self.nearest_many(Q)
        return float(np.mean(exact == approx))

    def nearest_many(self, Q):
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise ValueError(f"queries must have shape (n, {self.dim})")
        cd = ((Q[:, None, :] - self.centroids[None]) ** 2).sum(-1)
        probe = np.argsort(cd, axis=1, kind="stable")[:, : self.n_probe]
        idx = np.empty(len(Q), dtype=np.int64)
        dist = np.empty(len(Q))
        for q in range(len(Q)):
            cand = np.sort(np.concatenate([self.cells[c] for c in probe[q]]))
            sub = self.table[cand]
            i, d = kernels.nearest(Q[q : q + 1], sub, np.ones(len(cand), dtype=bool))
            idx[q], dist[q] = cand[i[0]], d[0]
        return idx, dist
