"""Relative node distances and per-anchor contrastive pair selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tifa_gcl.graph import Graph, _bfs
from tifa_gcl.rng import stream
from tifa_gcl.tig import bin_slices

# above this node count, each anchor only ranks a sampled candidate pool
LARGE_GRAPH = 20_000
DEFAULT_POOL = 4096


@dataclass(frozen=True)
class DistanceConfig:
    lambda1: float = 0.5
    lambda2: float = 0.75
    hop_cap: int = 4
    pool_size: int = DEFAULT_POOL
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")
        if self.hop_cap < 1:
            raise ValueError("hop_cap must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


@dataclass(frozen=True)
class PairSets:
    """Positive and negative node ids per anchor, one row per node."""

    positives: np.ndarray
    negatives: np.ndarray
    post_end: int
    negt_beg: int
    negt_end: int

    def to_json(self) -> dict:
        return {
            "post_end": self.post_end,
            "negt_beg": self.negt_beg,
            "negt_end": self.negt_end,
            "nodes": [
                {"node": i, "positives": p.tolist(), "negatives": q.tolist()}
                for i, (p, q) in enumerate(zip(self.positives, self.negatives))
            ],
        }


def softmax_rows(M: np.ndarray) -> np.ndarray:
    e = np.exp(M - M.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _unit_rows(M):
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return np.divide(M, norms, out=np.zeros_like(M, dtype=np.float64), where=norms > 0)


class DistanceInputs:
    """Precomputed per-node quantities shared by every distance row."""

    def __init__(self, graph: Graph, Z_star: np.ndarray):
        if Z_star.shape[0] != graph.n:
            raise ValueError("Z_star row count does not match graph")
        self.graph = graph
        self.p = softmax_rows(np.asarray(Z_star, dtype=np.float64))
        self.logp = np.log(self.p)
        self.unit_x = _unit_rows(graph.X)

    def global_row(self, i: int, cands: np.ndarray) -> np.ndarray:
        out = (self.p[i] * (self.logp[i] - self.logp[cands])).sum(axis=1)
        return np.maximum(out, 0.0)

    def local_row(self, i: int, cands: np.ndarray, hop_cap: int) -> np.ndarray:
        g = self.graph
        return _bfs(g.indptr, g.indices, g.n, i, hop_cap)[cands].astype(np.float64)

    def embedding_row(self, i: int, cands: np.ndarray) -> np.ndarray:
        return 1.0 - self.unit_x[cands] @ self.unit_x[i]


def global_topology_distance(Z_star: np.ndarray, i: int, j: int) -> float:
    """KL divergence between the softmaxed LP rows of ``i`` and ``j``."""
    p = softmax_rows(Z_star[[i, j]])
    return max(float((p[0] * (np.log(p[0]) - np.log(p[1]))).sum()), 0.0)


def local_topology_distance(graph: Graph, i: int, j: int, hop_cap: int) -> int:
    """BFS hop count, with unreachable or too-distant pairs mapped to ``hop_cap + 1``."""
    return int(_bfs(graph.indptr, graph.indices, graph.n, i, hop_cap)[j])


def embedding_distance(X: np.ndarray, i: int, j: int) -> float:
    u = _unit_rows(X[[i, j]])
    return float(1.0 - u[0] @ u[1])


def minmax_scale(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def relative_distance_row(i: int, candidates: np.ndarray, inputs: DistanceInputs,
                          config: DistanceConfig) -> np.ndarray:
    """Weighted sum of the three component distances, each min-max scaled over ``candidates``."""
    cands = np.asarray(candidates, dtype=np.int64)
    if cands.size == 0:
        raise ValueError("candidates must be nonempty")
    d = minmax_scale(inputs.global_row(i, cands))
    if config.lambda1:
        d = d + config.lambda1 * minmax_scale(inputs.local_row(i, cands, config.hop_cap))
    if config.lambda2:
        d = d + config.lambda2 * minmax_scale(inputs.embedding_row(i, cands))
    return d


def candidate_pool(n: int, i: int, config: DistanceConfig) -> np.ndarray:
    """All other nodes, or a seeded uniform pool of them on large graphs."""
    if n <= LARGE_GRAPH or n - 1 <= config.pool_size:
        return np.concatenate([np.arange(i), np.arange(i + 1, n)])
    rng = stream(config.seed, "pairs", i)
    pick = rng.choice(n - 1, size=config.pool_size, replace=False)
    pick.sort()
    return pick + (pick >= i)


def pool_size(n: int, config: DistanceConfig) -> int:
    return n - 1 if (n <= LARGE_GRAPH or n - 1 <= config.pool_size) else config.pool_size


def default_window(pool: int, post_end: int = 2, width: int = 128) -> tuple[int, int, int]:
    """``(post_end, negt_beg, negt_end)`` defaults: negatives start a quarter into the ranking."""
    post_end = min(post_end, max(pool - 1, 1))
    negt_beg = max(post_end, pool // 4)
    negt_end = min(negt_beg + width, pool)
    return post_end, negt_beg, negt_end


def ranked_candidates(i: int, inputs: DistanceInputs, config: DistanceConfig) -> np.ndarray:
    """``R_i``: candidates sorted by relative distance, ties by node id."""
    cands = candidate_pool(inputs.graph.n, i, config)
    d = relative_distance_row(i, cands, inputs, config)
    return cands[np.argsort(d, kind="stable")]


def sample_pairs(graph: Graph, Z_star: np.ndarray, config: DistanceConfig,
                 post_end: int, negt_beg: int, negt_end: int) -> PairSets:
    """Closest ``post_end`` nodes as positives, the ``[negt_beg, negt_end)`` window as negatives."""
    pool = pool_size(graph.n, config)
    if not 0 < post_end <= negt_beg < negt_end <= pool:
        raise ValueError(f"need 0 < post_end <= negt_beg < negt_end <= {pool}; "
                         f"got {post_end}, {negt_beg}, {negt_end}")
    inputs = DistanceInputs(graph, Z_star)
    pos = np.empty((graph.n, post_end), dtype=np.int64)
    neg = np.empty((graph.n, negt_end - negt_beg), dtype=np.int64)
    for i in range(graph.n):
        r = ranked_candidates(i, inputs, config)
        pos[i] = r[:post_end]
        neg[i] = r[negt_beg:negt_end]
    return PairSets(pos, neg, post_end, negt_beg, negt_end)


def intra_class_ratio_bins(Z_star: np.ndarray, graph: Graph, bins: int, scope: str = "all",
                           labels: np.ndarray | None = None, max_pairs: int = 500_000,
                           seed: int = 0) -> list[float]:
    """Same-label fraction of node pairs per bin of ascending global topology distance.

    ``scope="neighbors"`` uses both directions of every edge, ``scope="all"``
    every ordered pair of distinct labeled nodes (uniformly subsampled beyond
    ``max_pairs``).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    y = graph.y if labels is None else np.asarray(labels)
    labeled = y >= 0
    if scope == "neighbors":
        src = np.repeat(np.arange(graph.n), graph.degree())
        dst = graph.indices
    elif scope == "all":
        ids = np.flatnonzero(labeled)
        m = len(ids)
        total = m * (m - 1)
        if total > max_pairs:
            rng = stream(seed, "intra_pairs")
            a = rng.integers(0, m, size=max_pairs)
            b = rng.integers(0, m - 1, size=max_pairs)
            b = b + (b >= a)
            src, dst = ids[a], ids[b]
        else:
            src, dst = np.meshgrid(ids, ids, indexing="ij")
            off = src != dst
            src, dst = src[off], dst[off]
    else:
        raise ValueError("scope must be 'neighbors' or 'all'")
    keep = labeled[src] & labeled[dst]
    src, dst = src[keep], dst[keep]

    p = softmax_rows(np.asarray(Z_star, dtype=np.float64))
    logp = np.log(p)
    dg = np.maximum((p[src] * (logp[src] - logp[dst])).sum(axis=1), 0.0)
    order = np.argsort(dg, kind="stable")
    same = (y[src] == y[dst])[order]
    out = []
    for s in bin_slices(len(same), bins):
        part = same[s]
        out.append(float(part.mean()) if part.size else float("nan"))
    return out
