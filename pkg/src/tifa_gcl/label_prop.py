"""Label propagation with restart and feature-prototype adjustment."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from tifa_gcl.graph import COLUMN, Graph, normalize

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"label propagation did not converge in {iterations} sweeps "
                         f"(residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class LPConfig:
    alpha: float = 0.15
    max_iter: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True)
class LPResult:
    Z: np.ndarray
    Z_star: np.ndarray
    prototypes: np.ndarray
    iterations_used: int


def seed_matrix(graph: Graph) -> np.ndarray:
    """One-hot rows for train-labeled nodes, zeros elsewhere."""
    Z0 = np.zeros((graph.n, graph.k))
    idx = np.flatnonzero(graph.train_mask)
    Z0[idx, graph.y[idx]] = 1.0
    return Z0


def propagate(graph: Graph, config: LPConfig = LPConfig(), *,
              return_iterations: bool = False):
    """Damped power iteration ``Z <- (1-a) A D^-1 Z + a Z0`` from ``Z0``.

    Stops once the max-abs update drops below ``tol``.
    """
    if not graph.train_mask.any():
        raise ValueError("empty train set")
    A = normalize(graph, COLUMN).values
    Z0 = seed_matrix(graph)
    a = config.alpha
    Z = Z0.copy()
    for it in range(1, config.max_iter + 1):
        Z_next = (1 - a) * (A @ Z) + a * Z0
        delta = np.abs(Z_next - Z).max(initial=0.0)
        Z = Z_next
        if delta < config.tol:
            break
    else:
        residual = np.abs((1 - a) * (A @ Z) + a * Z0 - Z).max(initial=0.0)
        if residual >= config.tol:
            raise ConvergenceError(config.max_iter, residual)
    return (Z, it) if return_iterations else Z


def propagate_dense(graph: Graph, alpha: float) -> np.ndarray:
    """Closed form ``a (I - (1-a) A D^-1)^-1 Z0`` by a dense solve (small graphs only)."""
    A = normalize(graph, COLUMN).values.toarray()
    M = np.eye(graph.n) - (1 - alpha) * A
    return alpha * np.linalg.solve(M, seed_matrix(graph))


def class_prototypes(graph: Graph) -> np.ndarray:
    P = np.zeros((graph.k, graph.h))
    for c in range(graph.k):
        members = graph.train_mask & (graph.y == c)
        if members.any():
            P[c] = graph.X[members].mean(axis=0)
        else:
            logger.warning("class %d has no labeled train nodes; prototype set to zero", c)
    return P


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return np.divide(M, norms, out=np.zeros_like(M), where=norms > 0)


def adjust_with_prototypes(Z: np.ndarray, graph: Graph, prototypes: np.ndarray) -> np.ndarray:
    """Scale each ``Z[i, c]`` by ``(1 + cos(X_i, P_c)) / 2``; zero-norm vectors count as cosine 0."""
    if Z.shape != (graph.n, prototypes.shape[0]) or prototypes.shape[1] != graph.h:
        raise ValueError("shape mismatch between Z, features and prototypes")
    cos = _unit_rows(graph.X) @ _unit_rows(prototypes).T
    np.clip(cos, -1.0, 1.0, out=cos)
    return 0.5 * Z * (1.0 + cos)


def run_label_propagation(graph: Graph, config: LPConfig = LPConfig()) -> LPResult:
    Z, iters = propagate(graph, config, return_iterations=True)
    P = class_prototypes(graph)
    return LPResult(Z=Z, Z_star=adjust_with_prototypes(Z, graph, P), prototypes=P,
                    iterations_used=iters)
