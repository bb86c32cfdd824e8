"""Two-layer GCN with hand-written backprop, contrastive losses, Adam and the training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from tifa_gcl.distance import PairSets
from tifa_gcl.graph import SYMMETRIC, Graph, NormalizedAdjacency, normalize, normalize_adjacency
from tifa_gcl.perturb import PerturbConfig, perturb
from tifa_gcl.rng import stream
from tifa_gcl.tig import TigProfile

logger = logging.getLogger(__name__)

BASELINE = "baseline"
UNIFORM = "uniform-gcl"
TIFA = "tifa-gcl"
MODES = (BASELINE, UNIFORM, TIFA)


class TrainingDiverged(RuntimeError):
    pass


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GcnModel:
    W0: np.ndarray
    W1: np.ndarray
    theta_frozen: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def init(cls, h: int, hidden: int, k: int, rng: np.random.Generator) -> "GcnModel":
        return cls(glorot(rng, h, hidden), glorot(rng, hidden, k))

    @property
    def hidden_dim(self) -> int:
        return self.W0.shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W0, self.W1]

    def refresh_frozen(self) -> None:
        self.theta_frozen = (self.W0.copy(), self.W1.copy())

    def copy(self) -> "GcnModel":
        frozen = None if self.theta_frozen is None else tuple(w.copy() for w in self.theta_frozen)
        return GcnModel(self.W0.copy(), self.W1.copy(), frozen)


# -- forward / backward -----------------------------------------------------

@dataclass
class Cache:
    adj: sp.csr_array
    AX: np.ndarray
    Z1: np.ndarray
    drop: np.ndarray | None
    H1: np.ndarray
    AH1: np.ndarray
    logg: np.ndarray


def _as_matrix(adj) -> sp.csr_array:
    return adj.values if isinstance(adj, NormalizedAdjacency) else adj


def log_softmax(S: np.ndarray) -> np.ndarray:
    S = S - S.max(axis=1, keepdims=True)
    return S - np.log(np.exp(S).sum(axis=1, keepdims=True))


def dropout_scale(rng: np.random.Generator, shape: tuple[int, int], p: float) -> np.ndarray | None:
    """Inverted-dropout multiplier (0 or 1/(1-p)); None when ``p == 0``."""
    if p <= 0:
        return None
    keep = 1.0 - p
    return (rng.random(shape) < keep) / keep


def forward(adj, X: np.ndarray, W0: np.ndarray, W1: np.ndarray,
            drop: np.ndarray | None = None, AX: np.ndarray | None = None):
    """``g = softmax(A relu(A X W0) W1)``; returns ``(g, cache)``."""
    A = _as_matrix(adj)
    if X.shape[1] != W0.shape[0] or W0.shape[1] != W1.shape[0] or A.shape[0] != X.shape[0]:
        raise ValueError("dimension mismatch in GCN forward")
    if AX is None:
        AX = A @ X
    Z1 = AX @ W0
    H1 = np.maximum(Z1, 0.0)
    if drop is not None:
        H1 = H1 * drop
    AH1 = A @ H1
    logg = log_softmax(AH1 @ W1)
    return np.exp(logg), Cache(A, AX, Z1, drop, H1, AH1, logg)


def backward(cache: Cache, dS: np.ndarray, W1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``W0, W1`` given the gradient w.r.t. the pre-softmax scores."""
    dW1 = cache.AH1.T @ dS
    dH1 = cache.adj.T @ (dS @ W1.T)
    if cache.drop is not None:
        dH1 = dH1 * cache.drop
    dZ1 = dH1 * (cache.Z1 > 0)
    dW0 = cache.AX.T @ dZ1
    return dW0, dW1


# -- losses -----------------------------------------------------------------

def ce_loss(g: np.ndarray, labels: np.ndarray, train_mask: np.ndarray) -> float:
    idx = np.flatnonzero(train_mask)
    if idx.size == 0:
        raise ValueError("empty train mask")
    return float(-np.log(g[idx, labels[idx]]).mean())


def kl_row(p: np.ndarray, q: np.ndarray) -> float:
    return float((p * (np.log(p) - np.log(q))).sum())


def self_consistency_loss(g_perturbed_i: np.ndarray, g_clean_frozen_i: np.ndarray) -> float:
    return kl_row(g_perturbed_i, g_clean_frozen_i)


def pairwise_loss(i: int, pairs: PairSets, g_perturbed: np.ndarray, g_clean_frozen: np.ndarray,
                  mu1: float) -> float:
    """Mean KL to positives minus ``mu1`` times mean KL to negatives (empty sets contribute 0)."""
    p = g_perturbed[i]
    pos = [kl_row(p, g_clean_frozen[j]) for j in pairs.positives[i]]
    neg = [kl_row(p, g_clean_frozen[j]) for j in pairs.negatives[i]]
    return (float(np.mean(pos)) if pos else 0.0) - mu1 * (float(np.mean(neg)) if neg else 0.0)


def unsupervised_loss(self_term, pair_term, mu2: float):
    return self_term + mu2 * pair_term


def total_loss(ce: float, unsup: np.ndarray, weights: np.ndarray | None) -> float:
    """``ce + mean(w * unsup)``; ``weights=None`` drops the contrastive part."""
    if weights is None:
        return ce
    return ce + float(np.mean(np.asarray(weights) * np.asarray(unsup)))


@dataclass
class Step:
    """Everything held fixed while evaluating the objective for one update."""

    adj: sp.csr_array
    X: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    drop_clean: np.ndarray | None = None
    AX: np.ndarray | None = None
    # contrastive branch; absent in baseline mode
    adj_p: sp.csr_array | None = None
    X_p: np.ndarray | None = None
    drop_pert: np.ndarray | None = None
    frozen_logq: np.ndarray | None = None
    weights: np.ndarray | None = None
    positives: np.ndarray | None = None
    negatives: np.ndarray | None = None
    mu1: float = 0.0
    mu2: float = 0.0

    @property
    def contrastive(self) -> bool:
        return self.X_p is not None


def frozen_log_probs(adj, X, theta_frozen, AX=None) -> np.ndarray:
    """Clean-graph log-probabilities under the frozen copy, evaluation mode."""
    _, cache = forward(adj, X, theta_frozen[0], theta_frozen[1], None, AX)
    return cache.logg


def unsupervised_terms(logp: np.ndarray, logq: np.ndarray, step: Step):
    """Per-node ``(L_s, L_p)`` plus the coefficients needed for the gradient."""
    p = np.exp(logp)
    ent = (p * logp).sum(axis=1)
    l_self = ent - (p * logq).sum(axis=1)
    l_pair = np.zeros(len(p))
    r = logq
    a = 1.0
    if step.mu2 and step.positives is not None and step.positives.shape[1]:
        lpos = logq[step.positives].mean(axis=1)
        l_pair = ent - (p * lpos).sum(axis=1)
        r = r + step.mu2 * lpos
        a += step.mu2
        if step.negatives is not None and step.negatives.shape[1]:
            lneg = logq[step.negatives].mean(axis=1)
            l_pair = l_pair - step.mu1 * (ent - (p * lneg).sum(axis=1))
            r = r - step.mu2 * step.mu1 * lneg
            a -= step.mu2 * step.mu1
    return l_self, l_pair, a, r


def objective(W0: np.ndarray, W1: np.ndarray, step: Step):
    """Total loss, its parts, and exact gradients w.r.t. the live parameters."""
    g, cache = forward(step.adj, step.X, W0, W1, step.drop_clean, step.AX)
    idx = step.train_idx
    ce = float(-cache.logg[idx, step.labels[idx]].mean())
    dS = np.zeros_like(g)
    dS[idx] = g[idx]
    dS[idx, step.labels[idx]] -= 1.0
    dS /= len(idx)
    dW0, dW1 = backward(cache, dS, W1)
    parts = {"ce": ce, "unsup_mean": 0.0}
    loss = ce

    if step.contrastive:
        gp, cp = forward(step.adj_p, step.X_p, W0, W1, step.drop_pert)
        l_self, l_pair, a, r = unsupervised_terms(cp.logg, step.frozen_logq, step)
        lu = unsupervised_loss(l_self, l_pair, step.mu2)
        n = len(lu)
        loss = total_loss(ce, lu, step.weights)
        parts["unsup_mean"] = float(lu.mean())
        # d/dp of a*sum(p log p) - p.r, pushed through the softmax
        dp = a * (cp.logg + 1.0) - r
        dSp = (step.weights / n)[:, None] * gp * (dp - (gp * dp).sum(axis=1, keepdims=True))
        e0, e1 = backward(cp, dSp, W1)
        dW0, dW1 = dW0 + e0, dW1 + e1

    parts["total"] = loss
    return loss, parts, (dW0, dW1)


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads, state: AdamState, lr: float,
              weight_decay: float = 0.0) -> list[np.ndarray]:
    """Bias-corrected Adam with the L2 term folded into the gradient; updates in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# -- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    mode: str = TIFA
    lr: float = 0.0075
    dropout: float = 0.5
    weight_decay: float = 0.005
    hidden: int = 64
    max_epochs: int = 200
    min_epochs: int = 30
    patience: int = 20
    lr_decay: float = 0.95
    decay_after: int = 30
    mu1: float = 0.33
    mu2: float = 0.1
    recompute_analysis: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("mu1 and mu2 must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class Analysis:
    """Training-static artifacts computed once on the clean graph."""

    profile: TigProfile | None = None
    pairs: PairSets | None = None
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    lp_alpha: float = 0.15


@dataclass
class TrainResult:
    model: GcnModel
    log: list[dict]
    best_epoch: int
    val_acc: float
    test_acc: float
    predictions: np.ndarray

    def log_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.log)


def evaluate(model: GcnModel, graph: Graph, mask: np.ndarray, adj=None):
    """Accuracy over labeled nodes in ``mask`` and argmax predictions for every node."""
    if adj is None:
        adj = normalize(graph, SYMMETRIC)
    g, _ = forward(adj, graph.X, model.W0, model.W1)
    pred = g.argmax(axis=1)
    sel = np.asarray(mask, dtype=bool) & (graph.y >= 0)
    if not sel.any():
        raise ValueError("empty evaluation mask")
    return float((pred[sel] == graph.y[sel]).mean()), pred


def _contrastive_weights(mode: str, profile: TigProfile) -> np.ndarray:
    if mode == TIFA:
        return profile.weight
    return np.full(profile.n, 0.5 * (profile.w_min + profile.w_max))


def _recomputed_weights(graph: Graph, A_p: sp.csr_array, profile: TigProfile, alpha: float):
    from tifa_gcl.graph import from_edges
    from tifa_gcl.label_prop import LPConfig, run_label_propagation
    from tifa_gcl.tig import tig_profile

    coo = sp.triu(A_p, k=1).tocoo()
    g2 = from_edges(graph.n, np.stack([coo.row, coo.col], axis=1), graph.X, graph.y, graph.k,
                    graph.train_mask, graph.val_mask, graph.test_mask)
    lp = run_label_propagation(g2, LPConfig(alpha=alpha))
    return tig_profile(lp.Z_star, profile.lam, profile.w_min, profile.w_max).weight


def train(graph: Graph, analysis: Analysis, config: TrainConfig) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    Each epoch refreshes the frozen copy, draws a fresh perturbation, takes one
    Adam step on the combined objective and returns the best-validation model.
    """
    mode = config.mode
    if mode != BASELINE and analysis.profile is None:
        raise ValueError(f"mode {mode} needs a TIG profile")
    if mode == TIFA and config.mu2 and analysis.pairs is None:
        raise ValueError("tifa-gcl with mu2 > 0 needs contrastive pairs")

    adj = normalize(graph, SYMMETRIC).values
    AX = adj @ graph.X
    train_idx = np.flatnonzero(graph.train_mask)
    if train_idx.size == 0:
        raise ValueError("empty train mask")
    model = GcnModel.init(graph.h, config.hidden, graph.k, stream(config.seed, "init"))
    state = AdamState.zeros_like(model.params)

    weights = sel_weights = None
    if mode != BASELINE:
        weights = _contrastive_weights(mode, analysis.profile)
        sel_weights = weights
    use_pairs = mode == TIFA and config.mu2 > 0

    lr = config.lr
    best = (-1.0, -math.inf)
    best_model, best_epoch = model.copy(), 0
    log: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        if epoch > config.decay_after:
            lr *= config.lr_decay
        model.refresh_frozen()
        drop_rng = stream(config.seed, "dropout", epoch)
        shape = (graph.n, config.hidden)
        step = Step(adj=adj, X=graph.X, labels=graph.y, train_idx=train_idx, AX=AX,
                    drop_clean=dropout_scale(drop_rng, shape, config.dropout))
        if mode != BASELINE:
            pg = perturb(graph, sel_weights, analysis.perturb, stream(config.seed, "perturb", epoch))
            step.adj_p = normalize_adjacency(pg.A_p, SYMMETRIC).values
            step.X_p = pg.X_p
            step.drop_pert = dropout_scale(drop_rng, shape, config.dropout)
            step.frozen_logq = frozen_log_probs(adj, graph.X, model.theta_frozen, AX)
            step.weights = weights
            if config.recompute_analysis:
                step.weights = _contrastive_weights(mode, analysis.profile) if mode == UNIFORM else \
                    _recomputed_weights(graph, pg.A_p, analysis.profile, analysis.lp_alpha)
            if use_pairs:
                step.positives = analysis.pairs.positives
                step.negatives = analysis.pairs.negatives
                step.mu1, step.mu2 = config.mu1, config.mu2

        loss, parts, grads = objective(model.W0, model.W1, step)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at epoch {epoch} (parts: {parts})")
        adam_step(model.params, grads, state, lr, config.weight_decay)

        g, cache = forward(adj, graph.X, model.W0, model.W1, None, AX)
        pred = g.argmax(axis=1)
        val_acc = _acc(pred, graph, graph.val_mask)
        test_acc = _acc(pred, graph, graph.test_mask)
        val_sel = graph.val_mask & (graph.y >= 0)
        val_loss = float(-cache.logg[val_sel, graph.y[val_sel]].mean()) if val_sel.any() else 0.0
        log.append({"epoch": epoch, "lr": lr, "loss_ce": parts["ce"],
                    "loss_unsup_mean": parts["unsup_mean"], "val_acc": val_acc,
                    "test_acc": test_acc})

        if (val_acc, -val_loss) > best:
            best = (val_acc, -val_loss)
            best_model, best_epoch = model.copy(), epoch
        if epoch >= config.min_epochs and epoch - best_epoch >= config.patience:
            break

    val_acc = _acc_model(best_model, graph, adj, AX, graph.val_mask)
    test_acc, pred = _acc_model(best_model, graph, adj, AX, graph.test_mask, with_pred=True)
    return TrainResult(best_model, log, best_epoch, val_acc, test_acc, pred)


def _acc(pred, graph, mask):
    sel = mask & (graph.y >= 0)
    return float((pred[sel] == graph.y[sel]).mean()) if sel.any() else float("nan")


def _acc_model(model, graph, adj, AX, mask, with_pred=False):
    g, _ = forward(adj, graph.X, model.W0, model.W1, None, AX)
    pred = g.argmax(axis=1)
    acc = _acc(pred, graph, mask)
    return (acc, pred) if with_pred else acc


def config_dict(config) -> dict:
    return asdict(config)
