"""Topology-information-gain aware graph contrastive learning."""

from tifa_gcl.graph import Graph, load_graph, save_graph, synth_sbm
from tifa_gcl.label_prop import LPConfig, LPResult, run_label_propagation
from tifa_gcl.tig import TigProfile, tig_profile

__all__ = [
    "Graph",
    "LPConfig",
    "LPResult",
    "TigProfile",
    "load_graph",
    "run_label_propagation",
    "save_graph",
    "synth_sbm",
    "tig_profile",
]
