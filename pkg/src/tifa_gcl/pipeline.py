"""One-shot analysis of a clean graph and repeated training runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tifa_gcl.distance import DistanceConfig, PairSets, default_window, pool_size, sample_pairs
from tifa_gcl.gnn import BASELINE, TIFA, Analysis, TrainConfig, TrainResult, train
from tifa_gcl.graph import Graph
from tifa_gcl.label_prop import LPConfig, LPResult, run_label_propagation
from tifa_gcl.perturb import PerturbConfig
from tifa_gcl.tig import TigProfile, tig_bin_accuracy, tig_profile


@dataclass(frozen=True)
class AnalysisConfig:
    lp: LPConfig = field(default_factory=LPConfig)
    lam: float = 0.1
    w_min: float = 1.0
    w_max: float = 2.0
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    post_end: int = 2
    negt_beg: int | None = None  # None: a quarter of the candidate pool
    negt_width: int = 128


@dataclass
class GraphAnalysis:
    lp: LPResult
    profile: TigProfile
    pairs: PairSets | None


def pair_window(n: int, config: AnalysisConfig) -> tuple[int, int, int]:
    pool = pool_size(n, config.distance)
    post_end, negt_beg, negt_end = default_window(pool, config.post_end, config.negt_width)
    if config.negt_beg is not None:
        negt_beg = config.negt_beg
        negt_end = min(negt_beg + config.negt_width, pool)
    return post_end, negt_beg, negt_end


def analyze(graph: Graph, config: AnalysisConfig = AnalysisConfig(),
            with_pairs: bool = True) -> GraphAnalysis:
    lp = run_label_propagation(graph, config.lp)
    profile = tig_profile(lp.Z_star, config.lam, config.w_min, config.w_max)
    pairs = None
    if with_pairs:
        pairs = sample_pairs(graph, lp.Z_star, config.distance, *pair_window(graph.n, config))
    return GraphAnalysis(lp, profile, pairs)


def run_mode(graph: Graph, ga: GraphAnalysis, train_config: TrainConfig,
             perturb_config: PerturbConfig = PerturbConfig(), lp_alpha: float = 0.15) -> TrainResult:
    analysis = Analysis(profile=ga.profile, pairs=ga.pairs, perturb=perturb_config,
                        lp_alpha=lp_alpha)
    return train(graph, analysis, train_config)


def tercile_accuracy(result: TrainResult, graph: Graph, profile: TigProfile) -> list[float]:
    """Test accuracy in the high, middle and low TIG thirds."""
    return tig_bin_accuracy(profile, result.predictions, graph.y, 3, graph.test_mask)


def summarize(values: list[float]) -> dict:
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std()), "n": int(a.size)}


__all__ = ["AnalysisConfig", "GraphAnalysis", "analyze", "run_mode", "summarize",
           "tercile_accuracy", "BASELINE", "TIFA"]
