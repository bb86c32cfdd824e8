"""Finite-difference gradient checking for the GCN objective."""

import numpy as np

from conftest import random_graph
from tifa_gcl.distance import DistanceConfig, sample_pairs
from tifa_gcl.gnn import BASELINE, TIFA, UNIFORM, Step, dropout_scale, frozen_log_probs, objective
from tifa_gcl.graph import SYMMETRIC, normalize, normalize_adjacency
from tifa_gcl.label_prop import run_label_propagation
from tifa_gcl.perturb import PerturbConfig, perturb
from tifa_gcl.rng import stream
from tifa_gcl.tig import tig_profile


def make_step(mode, seed, n=10, h=4, hidden=5, k=3, dropout=0.3, mu1=0.33, mu2=0.2):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.35, k=k, h=h)
    adj = normalize(g, SYMMETRIC).values
    W0 = rng.normal(0, 0.7, (h, hidden))
    W1 = rng.normal(0, 0.7, (hidden, k))
    step = Step(adj=adj, X=g.X, labels=g.y, train_idx=np.flatnonzero(g.train_mask),
                drop_clean=dropout_scale(rng, (n, hidden), dropout))
    if mode != BASELINE:
        lp = run_label_propagation(g)
        prof = tig_profile(lp.Z_star)
        pg = perturb(g, prof.weight, PerturbConfig(mask_rate=0.5, sigma=3.0), stream(seed, "p"))
        step.adj_p = normalize_adjacency(pg.A_p, SYMMETRIC).values
        step.X_p = pg.X_p
        step.drop_pert = dropout_scale(rng, (n, hidden), dropout)
        # frozen copy differs from the live parameters so the stop-gradient matters
        frozen = (W0 + rng.normal(0, 0.3, W0.shape), W1 + rng.normal(0, 0.3, W1.shape))
        step.frozen_logq = frozen_log_probs(adj, g.X, frozen)
        if mode == TIFA:
            step.weights = prof.weight
            pairs = sample_pairs(g, lp.Z_star, DistanceConfig(), 2, 3, 7)
            step.positives, step.negatives = pairs.positives, pairs.negatives
            step.mu1, step.mu2 = mu1, mu2
        else:
            step.weights = np.full(n, 1.5)
    return step, W0, W1


def numeric_grads(step, W0, W1, eps=1e-4):
    out = []
    for which in (0, 1):
        W = (W0, W1)[which]
        G = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + eps
            up = objective(W0, W1, step)[0]
            W[idx] = orig - eps
            down = objective(W0, W1, step)[0]
            W[idx] = orig
            G[idx] = (up - down) / (2 * eps)
        out.append(G)
    return out


def fd_mismatch(step, W0, W1, rtol=1e-4, atol=1e-8):
    """Worst ``|a - n| / (atol + rtol |n|)``; at most 1 means every entry agrees.

    ``atol`` covers entries so small that the step's own O(eps^2) truncation
    error dominates them.
    """
    analytic = objective(W0, W1, step)[2]
    numeric = numeric_grads(step, W0, W1)
    return max(float((np.abs(a - nm) / (atol + rtol * np.abs(nm))).max())
               for a, nm in zip(analytic, numeric))


MODES = (BASELINE, UNIFORM, TIFA)
