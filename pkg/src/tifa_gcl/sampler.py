"""Random-walk subgraph sampling biased toward neighbors with similar LP distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tifa_gcl.distance import softmax_rows
from tifa_gcl.graph import Graph, induced_subgraph
from tifa_gcl.rng import stream


@dataclass(frozen=True)
class SamplerConfig:
    n_roots: int = 100
    walk_len: int = 3
    sharpen_t: float = 0.25
    epsilon: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_roots < 1:
            raise ValueError("n_roots must be >= 1")
        if self.walk_len < 1:
            raise ValueError("walk_len must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.sharpen_t < 0:
            raise ValueError("sharpen_t must be >= 0")


@dataclass(frozen=True)
class TransitionProbs:
    """Per-node neighbor distributions aligned with the graph's CSR layout."""

    indptr: np.ndarray
    indices: np.ndarray
    probs: np.ndarray

    def of(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[s], self.probs[s]


def edge_global_distances(graph: Graph, Z_star: np.ndarray) -> np.ndarray:
    """KL between softmaxed LP rows for every stored (directed) CSR entry."""
    p = softmax_rows(np.asarray(Z_star, dtype=np.float64))
    logp = np.log(p)
    src = np.repeat(np.arange(graph.n), graph.degree())
    dst = graph.indices
    return np.maximum((p[src] * (logp[src] - logp[dst])).sum(axis=1), 0.0)


def transition_probs(graph: Graph, edge_dg: np.ndarray, sharpen_t: float,
                     epsilon: float) -> TransitionProbs:
    """Softmax over each node's neighbors of ``t / (D_g + eps)``."""
    raw = sharpen_t / (np.asarray(edge_dg, dtype=np.float64) + epsilon)
    probs = np.empty_like(raw)
    for i in range(graph.n):
        s = slice(graph.indptr[i], graph.indptr[i + 1])
        if s.start == s.stop:
            continue
        z = raw[s]
        e = np.exp(z - z.max())
        probs[s] = e / e.sum()
    return TransitionProbs(graph.indptr, graph.indices, probs)


def _roots(n: int, n_roots: int, rng: np.random.Generator) -> np.ndarray:
    if n_roots <= n:
        return rng.choice(n, size=n_roots, replace=False)
    return rng.integers(0, n, size=n_roots)


def sample_nodes(graph: Graph, probs: TransitionProbs, config: SamplerConfig,
                 roots: np.ndarray | None = None) -> np.ndarray:
    """Union of roots and every node visited by their walks, sorted.

    Each walk draws from its own stream keyed by ``(seed, root index)``, so the
    result does not depend on the order walks are run in.
    """
    if roots is None:
        roots = _roots(graph.n, config.n_roots, stream(config.seed, "sampler.roots"))
    visited = set(int(r) for r in roots)
    for w, root in enumerate(roots):
        rng = stream(config.seed, "sampler.walk", w)
        u = int(root)
        for _ in range(config.walk_len):
            nbrs, p = probs.of(u)
            if nbrs.size == 0:
                break
            cum = np.cumsum(p)
            j = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), nbrs.size - 1)
            u = int(nbrs[j])
            visited.add(u)
    return np.array(sorted(visited), dtype=np.int64)


def sample_subgraph(graph: Graph, probs: TransitionProbs, config: SamplerConfig,
                    roots: np.ndarray | None = None) -> tuple[Graph, np.ndarray]:
    nodes = sample_nodes(graph, probs, config, roots)
    sub, _ = induced_subgraph(graph, nodes)
    return sub, nodes


def intra_class_edge_fraction(graph: Graph) -> float:
    """Fraction of labeled-endpoint edges joining same-class nodes; NaN without such edges."""
    e = graph.edge_list()
    if e.size == 0:
        return float("nan")
    ya, yb = graph.y[e[:, 0]], graph.y[e[:, 1]]
    ok = (ya >= 0) & (yb >= 0)
    if not ok.any():
        return float("nan")
    return float((ya[ok] == yb[ok]).mean())
