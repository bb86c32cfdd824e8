"""Immutable CSR graphs, normalization, BFS hops, subgraphs and SBM generation."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from tifa_gcl.rng import stream

logger = logging.getLogger(__name__)

COLUMN = "column"
SYMMETRIC = "symmetric"


class GraphError(ValueError):
    """Raised for malformed graphs or dataset directories."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph in CSR form.

    Neighbor lists are sorted ascending. ``y`` holds -1 for unlabeled nodes.
    """

    indptr: np.ndarray
    indices: np.ndarray
    X: np.ndarray
    y: np.ndarray
    k: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    _adj: sp.csr_array | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def h(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def adjacency(self) -> sp.csr_array:
        if self._adj is None:
            data = np.ones(len(self.indices))
            adj = sp.csr_array((data, self.indices, self.indptr), shape=(self.n, self.n))
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with src < dst."""
        src = np.repeat(np.arange(self.n), self.degree())
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def with_features(self, X: np.ndarray) -> "Graph":
        return from_edges(self.n, self.edge_list(), X, self.y, self.k,
                          self.train_mask, self.val_mask, self.test_mask)

    def same_as(self, other: "Graph") -> bool:
        return (
            self.k == other.k
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.train_mask, other.train_mask)
            and np.array_equal(self.val_mask, other.val_mask)
            and np.array_equal(self.test_mask, other.test_mask)
        )


def _mask(n: int, m) -> np.ndarray:
    if m is None:
        return np.zeros(n, dtype=bool)
    m = np.asarray(m)
    if m.dtype == bool:
        if m.shape != (n,):
            raise GraphError(f"mask length {m.shape} does not match n={n}")
        return m.copy()
    out = np.zeros(n, dtype=bool)
    ids = m.astype(np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise GraphError("mask id out of range")
    out[ids] = True
    return out


def from_edges(n: int, edges, X=None, y=None, k: int | None = None,
               train=None, val=None, test=None) -> Graph:
    """Build a validated graph, symmetrizing and dropping self-loops/duplicates.

    Masks may be boolean vectors or id lists.
    """
    if n < 0:
        raise GraphError("negative node count")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphError("edge endpoint out of range")
    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    adj = sp.coo_array((np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.sort_indices()
    indptr = adj.indptr.astype(np.int64)
    indices = adj.indices.astype(np.int64)

    if X is None:
        X = np.zeros((n, 0))
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != n:
        raise GraphError(f"feature matrix has {X.shape[0] if X.ndim else 0} rows, expected {n}")
    if y is None:
        y = np.full(n, -1, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (n,):
        raise GraphError("label vector length does not match n")
    if k is None:
        k = int(y.max()) + 1 if (y >= 0).any() else 0
    if (y >= k).any():
        raise GraphError(f"label out of range: {int(y.max())} >= k={k}")
    if (y < -1).any():
        raise GraphError("negative label")

    train, val, test = _mask(n, train), _mask(n, val), _mask(n, test)
    if (train & val).any() or (train & test).any() or (val & test).any():
        raise GraphError("overlapping masks")
    if (train & (y < 0)).any():
        raise GraphError("train mask selects unlabeled nodes")

    return Graph(_frozen(indptr), _frozen(indices), _frozen(X), _frozen(y), int(k),
                 _frozen(train), _frozen(val), _frozen(test))


def row_normalize_features(graph: Graph) -> Graph:
    """Scale each feature row to unit L1 norm; zero rows stay zero."""
    X = graph.X
    s = np.abs(X).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return graph.with_features(X / s)


@dataclass(frozen=True)
class NormalizedAdjacency:
    kind: str
    values: sp.csr_array


def normalize_adjacency(adj: sp.csr_array, kind: str) -> NormalizedAdjacency:
    n = adj.shape[0]
    deg = np.asarray(adj.sum(axis=0)).ravel()
    if kind == COLUMN:
        inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
        return NormalizedAdjacency(kind, sp.csr_array(adj @ sp.diags_array(inv)))
    if kind == SYMMETRIC:
        a = adj + sp.eye_array(n, format="csr")
        d = 1.0 / np.sqrt(deg + 1.0)
        dm = sp.diags_array(d)
        return NormalizedAdjacency(kind, sp.csr_array(dm @ a @ dm))
    raise ValueError(f"unknown normalization kind {kind!r}")


def normalize(graph: Graph, kind: str = COLUMN) -> NormalizedAdjacency:
    """``column``: A D^-1.  ``symmetric``: D~^-1/2 (A+I) D~^-1/2."""
    return normalize_adjacency(graph.adjacency(), kind)


def bfs_hops(graph: Graph, source: int, max_hop: int) -> np.ndarray:
    """Hop distance from ``source``; nodes beyond ``max_hop`` get ``max_hop + 1``."""
    if not 0 <= source < graph.n:
        raise IndexError(f"source {source} out of range for n={graph.n}")
    if max_hop < 0:
        raise ValueError("max_hop must be >= 0")
    return _bfs(graph.indptr, graph.indices, graph.n, source, max_hop)


def _bfs(indptr, indices, n, source, max_hop):
    unreachable = max_hop + 1
    hops = np.full(n, unreachable, dtype=np.int64)
    hops[source] = 0
    frontier = np.array([source])
    for d in range(1, max_hop + 1):
        if frontier.size == 0:
            break
        starts, ends = indptr[frontier], indptr[frontier + 1]
        lens = ends - starts
        if lens.sum() == 0:
            break
        offs = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(lens.sum())
        nbrs = np.unique(indices[offs])
        nbrs = nbrs[hops[nbrs] == unreachable]
        hops[nbrs] = d
        frontier = nbrs
    return hops


def within_hops(graph: Graph, source: int, max_hop: int) -> np.ndarray:
    """Ids of nodes at 1..max_hop hops from ``source``."""
    hops = bfs_hops(graph, source, max_hop)
    return np.flatnonzero((hops > 0) & (hops <= max_hop))


def induced_subgraph(graph: Graph, nodes: Iterable[int]) -> tuple[Graph, dict[int, int]]:
    nodes = np.unique(np.asarray(list(nodes), dtype=np.int64))
    if nodes.size == 0:
        raise GraphError("empty node set")
    if nodes.min() < 0 or nodes.max() >= graph.n:
        raise GraphError("node id out of range")
    sub = graph.adjacency()[nodes][:, nodes].tocoo()
    edges = np.stack([sub.row, sub.col], axis=1)
    g = from_edges(len(nodes), edges, graph.X[nodes], graph.y[nodes], graph.k,
                   graph.train_mask[nodes], graph.val_mask[nodes], graph.test_mask[nodes])
    return g, {int(old): new for new, old in enumerate(nodes)}


def synth_sbm(classes: int, per_class: int, p_in: float, p_out: float,
              feature_noise: float, labels_per_class: int, seed: int,
              val_per_class: int = 30, feature_dim: int | None = None) -> Graph:
    """Stochastic block model with one-hot-plus-noise features and a Planetoid-style split.

    ``feature_dim`` (default ``classes``) pads the one-hot class prototype with
    extra pure-noise dimensions.
    """
    if classes < 1 or per_class < 1:
        raise ValueError("classes and per_class must be positive")
    if not (0 <= p_out < p_in <= 1):
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if not 0 <= labels_per_class <= per_class:
        raise ValueError("labels_per_class must lie in [0, per_class]")
    if feature_noise < 0:
        raise ValueError("feature_noise must be >= 0")
    h = classes if feature_dim is None else feature_dim
    if h < classes:
        raise ValueError("feature_dim must be >= classes")

    n = classes * per_class
    y = np.repeat(np.arange(classes), per_class)
    rng = stream(seed, "synth")
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(y[iu] == y[ju], p_in, p_out)
    hit = rng.random(len(iu)) < p
    edges = np.stack([iu[hit], ju[hit]], axis=1)

    X = np.eye(classes, h)[y] + feature_noise * rng.standard_normal((n, h))

    train, val = [], []
    for c in range(classes):
        members = rng.permutation(np.flatnonzero(y == c))
        train.extend(members[:labels_per_class])
        val.extend(members[labels_per_class : labels_per_class + val_per_class])
    train_mask = _mask(n, np.array(train, dtype=np.int64))
    val_mask = _mask(n, np.array(val, dtype=np.int64))
    test_mask = ~(train_mask | val_mask)
    return from_edges(n, edges, X, y, classes, train_mask, val_mask, test_mask)


# Dataset directory I/O: meta.json, edges.tsv, features.tsv, labels.tsv, split.json

def _read_rows(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split("\t") for line in fh if line.strip()]


def load_graph(path: str) -> Graph:
    def need(name):
        p = os.path.join(path, name)
        if not os.path.isfile(p):
            raise GraphError(f"missing file: {p}")
        return p

    with open(need("meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    n, h, k = int(meta["n"]), int(meta["h"]), int(meta["k"])

    rows = _read_rows(need("edges.tsv"))
    try:
        edges = np.array([[int(a), int(b)] for a, b in rows], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise GraphError(f"bad edge line in edges.tsv: {exc}") from exc
    if edges.size and edges.max() >= n:
        raise GraphError(f"edge endpoint >= n={n}: inconsistent node counts")

    feats = _read_rows(need("features.tsv")) if h > 0 else []
    if len(feats) != n and h > 0:
        raise GraphError(f"features.tsv has {len(feats)} rows, meta says n={n}")
    X = np.array([[float(v) for v in r] for r in feats], dtype=np.float64).reshape(n, h)

    y = np.full(n, -1, dtype=np.int64)
    for r in _read_rows(need("labels.tsv")):
        node, lab = int(r[0]), int(r[1])
        if not 0 <= node < n:
            raise GraphError(f"labeled node {node} out of range: inconsistent node counts")
        if not 0 <= lab < k:
            raise GraphError(f"label out of range: node {node} has label {lab}, k={k}")
        y[node] = lab

    with open(need("split.json"), encoding="utf-8") as fh:
        split = json.load(fh)
    ids = {s: np.asarray(split.get(s, []), dtype=np.int64) for s in ("train", "val", "test")}
    for s, v in ids.items():
        if v.size and (v.min() < 0 or v.max() >= n):
            raise GraphError(f"{s} split id out of range: inconsistent node counts")
    return from_edges(n, edges, X, y, k, ids["train"], ids["val"], ids["test"])


def save_graph(graph: Graph, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump({"n": graph.n, "h": graph.h, "k": graph.k}, fh)
    with open(os.path.join(path, "edges.tsv"), "w", encoding="utf-8") as fh:
        for a, b in graph.edge_list():
            fh.write(f"{a}\t{b}\n")
    with open(os.path.join(path, "features.tsv"), "w", encoding="utf-8") as fh:
        for row in graph.X:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(path, "labels.tsv"), "w", encoding="utf-8") as fh:
        for i in np.flatnonzero(graph.y >= 0):
            fh.write(f"{i}\t{graph.y[i]}\n")
    split = {name: np.flatnonzero(m).tolist() for name, m in
             (("train", graph.train_mask), ("val", graph.val_mask), ("test", graph.test_mask))}
    with open(os.path.join(path, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(split, fh)
