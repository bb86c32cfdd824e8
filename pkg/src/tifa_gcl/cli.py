"""Command-line entry point: ``synth``, ``analyze``, ``train`` and ``sample``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from tifa_gcl.distance import DistanceConfig, intra_class_ratio_bins
from tifa_gcl.gnn import BASELINE, MODES, Analysis, TrainConfig, train
from tifa_gcl.graph import Graph, load_graph, row_normalize_features, save_graph, synth_sbm
from tifa_gcl.label_prop import LPConfig
from tifa_gcl.perturb import PerturbConfig, perturb
from tifa_gcl.pipeline import AnalysisConfig, analyze, run_mode, summarize
from tifa_gcl.rng import stream
from tifa_gcl.sampler import (
    SamplerConfig,
    edge_global_distances,
    intra_class_edge_fraction,
    sample_subgraph,
    transition_probs,
)
from tifa_gcl.tig import grid_report, tig_bin_accuracy

logger = logging.getLogger("tifa_gcl")

PAPER, IMPL = "paper", "implementation"

# name -> (default, type, provenance); names map to --kebab-case flags
PARAMS: dict[str, tuple] = {
    "alpha": (0.15, float, PAPER),
    "lambda": (0.1, float, PAPER),
    "w_min": (1.0, float, PAPER),
    "w_max": (2.0, float, PAPER),
    "mu1": (0.33, float, PAPER),
    "mu2": (0.1, float, IMPL),
    "lambda1": (0.5, float, PAPER),
    "lambda2": (0.75, float, PAPER),
    "hop_cap": (4, int, IMPL),
    "pool_size": (4096, int, IMPL),
    "post_end": (2, int, IMPL),
    "negt_beg": (None, int, IMPL),
    "negt_width": (128, int, IMPL),
    "perturb_t": (2.0, float, IMPL),
    "sigma": (None, float, IMPL),
    "n_add": (1, int, IMPL),
    "n_rmv": (1, int, IMPL),
    "mask_rate": (0.1, float, IMPL),
    "decay_hops": (1, int, IMPL),
    "decay_ratio": (0.5, float, IMPL),
    "n_roots": (100, int, IMPL),
    "walk_len": (3, int, PAPER),
    "sharpen_t": (0.25, float, PAPER),
    "epsilon": (0.01, float, IMPL),
    "lr": (0.0075, float, PAPER),
    "dropout": (0.5, float, PAPER),
    "weight_decay": (0.005, float, PAPER),
    "hidden": (64, int, PAPER),
    "max_epochs": (200, int, PAPER),
    "min_epochs": (30, int, PAPER),
    "patience": (20, int, PAPER),
    "lr_decay": (0.95, float, PAPER),
    "recompute_analysis": (False, bool, IMPL),
    "grid": (5, int, IMPL),
    "bins": (10, int, IMPL),
    "graph_seed": (0, int, IMPL),
    "feature_dim": (None, int, IMPL),
    "mode": ("baseline,uniform-gcl,tifa-gcl", str, IMPL),
    "seeds": ("0", str, IMPL),
    "normalize_features": (False, bool, IMPL),
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--dataset", metavar="DIR", help="dataset directory (TSV format)")
    src.add_argument("--synth", metavar="K,PER_CLASS,P_IN,P_OUT,NOISE,LABELS_PER_CLASS",
                     help="generate a stochastic block model instead of loading")
    common.add_argument("--out", metavar="DIR", required=True)
    common.add_argument("--config", metavar="FILE", help="JSON file of parameter overrides")
    common.add_argument("-v", "--verbose", action="store_true")
    for name, (default, typ, prov) in PARAMS.items():
        kw = {"dest": name, "default": None}
        if typ is bool:
            common.add_argument(_flag(name), action="store_const", const=True,
                                help=f"[{prov}] default {default}", **kw)
        else:
            common.add_argument(_flag(name), type=typ, help=f"[{prov}] default {default}", **kw)

    p = argparse.ArgumentParser(prog="tifa-gcl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic SBM dataset directory")
    a = sub.add_parser("analyze", parents=[common], help="TIG, grid, bin and pair reports")
    a.add_argument("--dump-lp", action="store_true", help="write Z.tsv and Z_star.tsv")
    a.add_argument("--pairs", action="store_true", help="write pairs.json")
    sub.add_parser("train", parents=[common], help="train every mode x seed and summarize")
    s = sub.add_parser("sample", parents=[common], help="dump sampled subgraphs / perturbations")
    s.add_argument("--saint", action="store_true", help="random-walk subgraph sampling")
    s.add_argument("--perturb", action="store_true", help="TIG-weighted perturbation")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Flags > config file > defaults."""
    cfg = {name: entry[0] for name, entry in PARAMS.items()}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg) - {"dataset", "synth"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in file_cfg.items() if k in cfg})
        for key in ("dataset", "synth"):
            if getattr(args, key) is None and key in file_cfg:
                setattr(args, key, file_cfg[key])
    for name in PARAMS:
        v = getattr(args, name)
        if v is not None:
            cfg[name] = v
    cfg["modes"] = [m.strip() for m in str(cfg["mode"]).split(",") if m.strip()]
    bad = set(cfg["modes"]) - set(MODES)
    if bad:
        raise ValueError(f"unknown mode(s) {sorted(bad)}; choose from {MODES}")
    cfg["seed_list"] = [int(s) for s in str(cfg["seeds"]).split(",") if s.strip()]
    if not cfg["seed_list"]:
        raise ValueError("no seeds given")
    return cfg


def load_input(args, cfg) -> Graph:
    if args.dataset:
        g = load_graph(args.dataset)
    elif args.synth:
        parts = [p for p in args.synth.split(",")]
        if len(parts) != 6:
            raise ValueError("--synth needs k,per_class,p_in,p_out,noise,labels_per_class")
        k, per, p_in, p_out, noise, lpc = parts
        g = synth_sbm(int(k), int(per), float(p_in), float(p_out), float(noise), int(lpc),
                      seed=cfg["graph_seed"], feature_dim=cfg["feature_dim"])
    else:
        raise ValueError("one of --dataset or --synth is required")
    return row_normalize_features(g) if cfg["normalize_features"] else g


def analysis_config(cfg, seed: int = 0) -> AnalysisConfig:
    return AnalysisConfig(
        lp=LPConfig(alpha=cfg["alpha"]),
        lam=cfg["lambda"], w_min=cfg["w_min"], w_max=cfg["w_max"],
        distance=DistanceConfig(lambda1=cfg["lambda1"], lambda2=cfg["lambda2"],
                                hop_cap=cfg["hop_cap"], pool_size=cfg["pool_size"], seed=seed),
        post_end=cfg["post_end"], negt_beg=cfg["negt_beg"], negt_width=cfg["negt_width"],
    )


def perturb_config(cfg, seed: int) -> PerturbConfig:
    return PerturbConfig(sharpen_t=cfg["perturb_t"], sigma=cfg["sigma"], n_add=cfg["n_add"],
                         n_rmv=cfg["n_rmv"], mask_rate=cfg["mask_rate"],
                         decay_hops=cfg["decay_hops"], decay_ratio=cfg["decay_ratio"], seed=seed)


def train_config(cfg, mode: str, seed: int) -> TrainConfig:
    return TrainConfig(mode=mode, lr=cfg["lr"], dropout=cfg["dropout"],
                       weight_decay=cfg["weight_decay"], hidden=cfg["hidden"],
                       max_epochs=cfg["max_epochs"], min_epochs=cfg["min_epochs"],
                       patience=cfg["patience"], lr_decay=cfg["lr_decay"], mu1=cfg["mu1"],
                       mu2=cfg["mu2"], recompute_analysis=bool(cfg["recompute_analysis"]),
                       seed=seed)


def write_config(out: str, args, cfg) -> None:
    echo = {
        "command": args.command,
        "dataset": args.dataset,
        "synth": args.synth,
        "values": {k: cfg[k] for k in PARAMS},
        "provenance": {k: entry[2] for k, entry in PARAMS.items()},
    }
    if args.command == "analyze":
        echo["values"].update(dump_lp=args.dump_lp, pairs=args.pairs)
    if args.command == "sample":
        echo["values"].update(saint=args.saint, perturb=args.perturb)
    _dump_json(os.path.join(out, "config.json"), echo)


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_tsv(path, header, rows, delimiter="\t"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# -- subcommands ------------------------------------------------------------

def cmd_synth(args, cfg, graph: Graph) -> None:
    save_graph(graph, args.out)


def cmd_analyze(args, cfg, graph: Graph) -> None:
    out = args.out
    seed = cfg["seed_list"][0]
    ga = analyze(graph, analysis_config(cfg, seed), with_pairs=args.pairs)
    prof = ga.profile
    _write_tsv(os.path.join(out, "tig.tsv"),
               ["node", "intensity", "clarity", "tig", "rank", "weight"],
               zip(range(graph.n), prof.intensity, prof.clarity, prof.tig, prof.rank, prof.weight))
    if args.dump_lp:
        _write_tsv(os.path.join(out, "Z.tsv"), None, ga.lp.Z.tolist())
        _write_tsv(os.path.join(out, "Z_star.tsv"), None, ga.lp.Z_star.tolist())
    if args.pairs:
        _dump_json(os.path.join(out, "pairs.json"), ga.pairs.to_json())

    labeled = graph.y >= 0
    grid_rows, bin_rows = [], []
    for mode in cfg["modes"]:
        res = run_mode(graph, ga, train_config(cfg, mode, seed), perturb_config(cfg, seed),
                       cfg["alpha"])
        for c in grid_report(prof, res.predictions, graph.y, cfg["grid"], labeled):
            grid_rows.append([mode, c["intensity_bin"], c["clarity_bin"], c["count"],
                              c["errors"], c["error_rate"], int(c["empty"])])
        accs = tig_bin_accuracy(prof, res.predictions, graph.y, cfg["bins"], graph.test_mask)
        bin_rows.extend([mode, b, a] for b, a in enumerate(accs))
    _write_tsv(os.path.join(out, "grid.csv"),
               ["mode", "intensity_bin", "clarity_bin", "count", "errors", "error_rate", "empty"],
               grid_rows, delimiter=",")
    _write_tsv(os.path.join(out, "bins.csv"), ["mode", "bin", "accuracy"], bin_rows, delimiter=",")

    intra = {scope: intra_class_ratio_bins(ga.lp.Z_star, graph, cfg["bins"], scope, seed=seed)
             for scope in ("neighbors", "all")}
    _write_tsv(os.path.join(out, "intra.csv"), ["bin", "neighbors", "all"],
               ([b, intra["neighbors"][b], intra["all"][b]] for b in range(cfg["bins"])),
               delimiter=",")


def cmd_train(args, cfg, graph: Graph) -> dict:
    out = args.out
    needs_pairs = "tifa-gcl" in cfg["modes"] and cfg["mu2"] > 0
    needs_profile = any(m != BASELINE for m in cfg["modes"])
    ga = analyze(graph, analysis_config(cfg), with_pairs=needs_pairs) if needs_profile else None
    per_mode: dict[str, list[float]] = {m: [] for m in cfg["modes"]}
    runs = []
    for mode in cfg["modes"]:
        for seed in cfg["seed_list"]:
            run_dir = os.path.join(out, mode, f"seed_{seed}")
            os.makedirs(run_dir, exist_ok=True)
            if ga is None:
                res = train(graph, Analysis(), train_config(cfg, mode, seed))
            else:
                res = run_mode(graph, ga, train_config(cfg, mode, seed),
                               perturb_config(cfg, seed), cfg["alpha"])
            with open(os.path.join(run_dir, "metrics.jsonl"), "w", encoding="utf-8") as fh:
                fh.write(res.log_jsonl())
            per_bin = (tig_bin_accuracy(ga.profile, res.predictions, graph.y, cfg["bins"],
                                        graph.test_mask) if ga is not None else None)
            report = {"mode": mode, "seed": seed, "best_epoch": res.best_epoch,
                      "val_acc": res.val_acc, "test_acc": res.test_acc,
                      "per_bin_acc": per_bin,
                      "config": asdict(train_config(cfg, mode, seed))}
            _dump_json(os.path.join(run_dir, "report.json"), report)
            per_mode[mode].append(res.test_acc)
            runs.append({"mode": mode, "seed": seed, "test_acc": res.test_acc})
            logger.info("%s seed %d: test acc %.4f (best epoch %d)", mode, seed, res.test_acc,
                        res.best_epoch)
    summary = {"modes": {m: summarize(v) for m, v in per_mode.items()}, "runs": runs}
    _dump_json(os.path.join(out, "summary.json"), summary)
    _write_tsv(os.path.join(out, "summary.csv"), ["mode", "mean", "std", "n"],
               ([m, s["mean"], s["std"], s["n"]] for m, s in summary["modes"].items()),
               delimiter=",")
    return summary


def cmd_sample(args, cfg, graph: Graph) -> None:
    if not (args.saint or args.perturb):
        raise ValueError("sample needs --saint and/or --perturb")
    out = args.out
    ga = analyze(graph, analysis_config(cfg), with_pairs=False)
    if args.saint:
        edge_dg = edge_global_distances(graph, ga.lp.Z_star)
        probs = transition_probs(graph, edge_dg, cfg["sharpen_t"], cfg["epsilon"])
        with open(os.path.join(out, "saint.jsonl"), "w", encoding="utf-8") as fh:
            for seed in cfg["seed_list"]:
                sc = SamplerConfig(n_roots=cfg["n_roots"], walk_len=cfg["walk_len"],
                                   sharpen_t=cfg["sharpen_t"], epsilon=cfg["epsilon"], seed=seed)
                sub, nodes = sample_subgraph(graph, probs, sc)
                frac = intra_class_edge_fraction(sub)
                rec = {"seed": seed, "nodes": nodes.tolist(), "size": sub.n,
                       "edges": sub.num_edges,
                       "intra_class_edge_fraction": None if math.isnan(frac) else frac}
                fh.write(json.dumps(rec) + "\n")
    if args.perturb:
        for seed in cfg["seed_list"]:
            pc = perturb_config(cfg, seed)
            pg = perturb(graph, ga.profile.weight, pc, stream(seed, "perturb", 0))
            d = os.path.join(out, "perturb", f"seed_{seed}")
            os.makedirs(d, exist_ok=True)
            _write_tsv(os.path.join(d, "added.tsv"), None, pg.added.tolist())
            _write_tsv(os.path.join(d, "removed.tsv"), None, pg.removed.tolist())
            _write_tsv(os.path.join(d, "touched.tsv"), None, ([i] for i in pg.touched))
            _dump_json(os.path.join(d, "stats.json"),
                       {"gap": pg.gap, "sigma": pc.sigma_for(graph), "exhausted": pg.exhausted,
                        "touched": len(pg.touched)})


COMMANDS = {"synth": cmd_synth, "analyze": cmd_analyze, "train": cmd_train, "sample": cmd_sample}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        cfg = resolve(args)
        graph = load_input(args, cfg)
        write_config(args.out, args, cfg)
        COMMANDS[args.command](args, cfg, graph)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a structured record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        try:
            _dump_json(os.path.join(args.out, "error.json"), record)
        except OSError:
            pass
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
