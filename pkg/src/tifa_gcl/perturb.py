"""TIG-weighted graph perturbation with negative feedback on selection probabilities."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from tifa_gcl.graph import Graph, within_hops
from tifa_gcl.rng import stream

logger = logging.getLogger(__name__)


class SelectionExhausted(RuntimeError):
    """No node keeps positive selection probability."""


def default_sigma(num_edges: int) -> float:
    """Frobenius gap of toggling about 5% of the undirected edges."""
    return math.sqrt(2 * max(math.ceil(0.05 * num_edges), 1))


@dataclass(frozen=True)
class PerturbConfig:
    sharpen_t: float = 2.0
    sigma: float | None = None  # None: default_sigma(|E|)
    n_add: int = 1
    n_rmv: int = 1
    mask_rate: float = 0.1
    decay_hops: int = 1
    decay_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.sharpen_t < 0:
            raise ValueError("sharpen_t must be >= 0")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.n_add < 0 or self.n_rmv < 0:
            raise ValueError("n_add and n_rmv must be >= 0")
        if not 0 <= self.mask_rate <= 1:
            raise ValueError("mask_rate must lie in [0, 1]")
        if self.decay_hops < 0:
            raise ValueError("decay_hops must be >= 0")
        if not 0 <= self.decay_ratio <= 1:
            raise ValueError("decay_ratio must lie in [0, 1]")
        if self.n_add + self.n_rmv < 1 and self.mask_rate <= 0:
            raise ValueError("configuration can never perturb anything")

    def sigma_for(self, graph: Graph) -> float:
        return self.sigma if self.sigma is not None else default_sigma(graph.num_edges)


@dataclass
class PerturbedGraph:
    X_p: np.ndarray
    A_p: sp.csr_array
    touched: np.ndarray
    gap: float
    added: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    removed: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    exhausted: bool = False


def selection_probabilities(weights: np.ndarray, sharpen_t: float) -> np.ndarray:
    """Softmax of ``weights * sharpen_t``."""
    z = np.asarray(weights, dtype=np.float64) * sharpen_t
    e = np.exp(z - z.max())
    return e / e.sum()


def probability_decay(P: np.ndarray, i: int, graph: Graph, decay_hops: int,
                      decay_ratio: float) -> np.ndarray:
    """Zero node ``i``, damp its ``decay_hops`` neighborhood by ``decay_ratio``, renormalize."""
    P = P.copy()
    P[i] = 0.0
    if decay_hops > 0:
        P[within_hops(graph, i, decay_hops)] *= decay_ratio
    total = P.sum()
    if total <= 0:
        raise SelectionExhausted(f"selection mass exhausted after node {i}")
    return P / total


class _EdgeState:
    """Original CSR plus a set of toggled undirected edges."""

    def __init__(self, graph: Graph):
        self.g = graph
        self.toggled: dict[int, set[int]] = {}

    def _orig(self, a, b):
        nb = self.g.neighbors(a)
        j = np.searchsorted(nb, b)
        return j < len(nb) and nb[j] == b

    def has(self, a, b):
        return self._orig(a, b) != (b in self.toggled.get(a, ()))

    def neighbors(self, a) -> list[int]:
        tog = self.toggled.get(a, set())
        base = [int(b) for b in self.g.neighbors(a) if b not in tog]
        base.extend(b for b in tog if not self._orig(a, b))
        return sorted(base)

    def toggle(self, a, b):
        for u, v in ((a, b), (b, a)):
            s = self.toggled.setdefault(u, set())
            s.symmetric_difference_update((v,))

    def changed(self) -> int:
        return sum(len(s) for s in self.toggled.values())

    def net_changes(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected ``(a, b)``, ``a < b`` edges added and removed relative to the original."""
        pairs = sorted((a, b) for a, s in self.toggled.items() for b in s if a < b)
        add = [p for p in pairs if not self._orig(*p)]
        rmv = [p for p in pairs if self._orig(*p)]
        return (np.array(add, dtype=np.int64).reshape(-1, 2),
                np.array(rmv, dtype=np.int64).reshape(-1, 2))


def _sample_non_neighbors(state: _EdgeState, i: int, count: int, current: set[int],
                          rng: np.random.Generator) -> list[int]:
    n = state.g.n
    free = n - 1 - len(current)
    count = min(count, free)
    chosen: list[int] = []
    tries = 0
    while len(chosen) < count and tries < 50 * count + 100:
        tries += 1
        x = int(rng.integers(n))
        if x != i and x not in current and x not in chosen:
            chosen.append(x)
    if len(chosen) < count:
        pool = [x for x in range(n) if x != i and x not in current and x not in chosen]
        chosen.extend(int(x) for x in rng.choice(pool, size=count - len(chosen), replace=False))
    return chosen


def perturb(graph: Graph, weights: np.ndarray, config: PerturbConfig,
            rng: np.random.Generator | None = None) -> PerturbedGraph:
    """Select nodes by sharpened weight, add/remove edges and mask features until the
    Frobenius gap to the original adjacency reaches sigma."""
    if rng is None:
        rng = stream(config.seed, "perturb")
    n, h = graph.n, graph.h
    sigma = config.sigma_for(graph)
    X_p = graph.X.copy()
    state = _EdgeState(graph)
    P = selection_probabilities(weights, config.sharpen_t)
    n_mask = int(math.floor(config.mask_rate * h))
    touched: list[int] = []
    gap = 0.0
    exhausted = False

    while gap < sigma:
        cum = np.cumsum(P)
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        i = min(i, n - 1)
        touched.append(i)

        before = state.neighbors(i)
        current = set(before)
        for x in _sample_non_neighbors(state, i, config.n_add, current, rng):
            state.toggle(i, x)
        if config.n_rmv and before:
            drop = rng.choice(before, size=min(config.n_rmv, len(before)), replace=False)
            for x in drop:
                state.toggle(i, int(x))
        if n_mask:
            X_p[i, rng.choice(h, size=n_mask, replace=False)] = 0.0

        gap = math.sqrt(state.changed())
        if gap >= sigma:
            break
        try:
            P = probability_decay(P, i, graph, config.decay_hops, config.decay_ratio)
        except SelectionExhausted:
            exhausted = True
            logger.warning("perturbation stopped early: gap %.3f < sigma %.3f", gap, sigma)
            break

    added, removed = state.net_changes()
    return PerturbedGraph(
        X_p=X_p,
        A_p=_materialize(state),
        touched=np.array(touched, dtype=np.int64),
        gap=gap,
        added=added,
        removed=removed,
        exhausted=exhausted,
    )


def _materialize(state: _EdgeState) -> sp.csr_array:
    g = state.g
    A = g.adjacency().tolil(copy=True)
    for a, partners in state.toggled.items():
        for b in partners:
            A[a, b] = 0.0 if state._orig(a, b) else 1.0
    A = sp.csr_array(A)
    A.eliminate_zeros()
    A.sort_indices()
    return A
