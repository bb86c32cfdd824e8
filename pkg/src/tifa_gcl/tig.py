"""Topology information gain: intensity, clarity, ranking and CL weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TigProfile:
    intensity: np.ndarray
    clarity: np.ndarray
    tig: np.ndarray
    rank: np.ndarray
    weight: np.ndarray
    lam: float
    k: int
    w_min: float = 1.0
    w_max: float = 2.0

    @property
    def n(self) -> int:
        return len(self.tig)


def intensity(Z_star: np.ndarray) -> np.ndarray:
    return Z_star.max(axis=1, initial=0.0)


def clarity(Z_star: np.ndarray) -> np.ndarray:
    # max minus the full row sum, as printed; always <= 0 for nonnegative rows
    return Z_star.max(axis=1, initial=0.0) - Z_star.sum(axis=1)


def clarity_gap(Z_star: np.ndarray) -> np.ndarray:
    """Alternative reading: max minus the mass of the other classes."""
    m = Z_star.max(axis=1, initial=0.0)
    return m - (Z_star.sum(axis=1) - m)


def tig_scores(intensity: np.ndarray, clarity: np.ndarray, lam: float, k: int) -> np.ndarray:
    if k < 2:
        raise ValueError("TIG needs at least two classes")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return intensity + (lam / (k - 1)) * clarity


def rank_ascending(tig: np.ndarray) -> np.ndarray:
    """Position of each node in the ascending sort; ties keep node-id order."""
    order = np.argsort(tig, kind="stable")
    rank = np.empty(len(tig), dtype=np.int64)
    rank[order] = np.arange(len(tig))
    return rank


def cl_weights(rank: np.ndarray, n: int, w_min: float = 1.0, w_max: float = 2.0) -> np.ndarray:
    """Cosine schedule: ``w_max`` at rank 0 decaying toward ``w_min`` at rank n."""
    if n <= 0:
        raise ValueError("n must be positive")
    if w_max < w_min:
        raise ValueError("w_max must be >= w_min")
    w = w_min + 0.5 * (w_max - w_min) * (1.0 + np.cos(np.asarray(rank) * np.pi / n))
    return np.clip(w, w_min, w_max)


def tig_profile(Z_star: np.ndarray, lam: float = 0.1, w_min: float = 1.0,
                w_max: float = 2.0) -> TigProfile:
    n, k = Z_star.shape
    qi, qc = intensity(Z_star), clarity(Z_star)
    t = tig_scores(qi, qc, lam, k)
    r = rank_ascending(t)
    return TigProfile(qi, qc, t, r, cl_weights(r, n, w_min, w_max), lam, k, w_min, w_max)


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v, dtype=np.float64)
    return (v - lo) / (hi - lo)


def _scope(n, mask):
    return np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)


def grid_report(profile: TigProfile, predictions: np.ndarray, labels: np.ndarray,
                grid: int, mask: np.ndarray | None = None) -> list[dict]:
    """Error rate per cell of a ``grid x grid`` partition of the min-max scaled
    intensity x clarity plane.

    Scaling uses the nodes in ``mask`` (all nodes by default). Empty cells are
    reported with ``count == 0`` and ``error_rate`` NaN.
    """
    if grid < 1:
        raise ValueError("grid must be >= 1")
    sel = np.flatnonzero(_scope(profile.n, mask))
    cells = []
    if sel.size == 0:
        gx = gy = np.zeros(0, dtype=np.int64)
    else:
        gx = np.minimum((_minmax(profile.intensity[sel]) * grid).astype(np.int64), grid - 1)
        gy = np.minimum((_minmax(profile.clarity[sel]) * grid).astype(np.int64), grid - 1)
    wrong = predictions[sel] != labels[sel]
    for ix in range(grid):
        for iy in range(grid):
            in_cell = (gx == ix) & (gy == iy)
            count = int(in_cell.sum())
            errors = int(wrong[in_cell].sum())
            cells.append({
                "intensity_bin": ix,
                "clarity_bin": iy,
                "count": count,
                "errors": errors,
                "error_rate": errors / count if count else float("nan"),
                "empty": count == 0,
            })
    return cells


def bin_slices(m: int, bins: int) -> list[slice]:
    """Equal-size consecutive slices of ``range(m)``; the last absorbs the remainder."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    size = m // bins
    return [slice(b * size, (b + 1) * size if b < bins - 1 else m) for b in range(bins)]


def tig_bin_accuracy(profile: TigProfile, predictions: np.ndarray, labels: np.ndarray,
                     bins: int, mask: np.ndarray | None = None) -> list[float]:
    """Accuracy per TIG quantile bin, from the highest-TIG bin to the lowest."""
    sel = np.flatnonzero(_scope(profile.n, mask))
    order = sel[np.argsort(-profile.rank[sel], kind="stable")]
    correct = predictions[order] == labels[order]
    out = []
    for s in bin_slices(len(order), bins):
        part = correct[s]
        out.append(float(part.mean()) if part.size else float("nan"))
    return out
