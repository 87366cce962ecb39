"""Command-line pipeline: image + scribbles in, label maps and statistics out.

Variants: ilp-pc (all labels connected), ilp-pcb (background exempt), ilp-p (no
connectivity), lp-pc (linear relaxation with the same cut loop on its integral
part), l0h (region-fusion heuristic only). The two connectivity-constrained ILP
variants are warm-started from l0h unless --no-warm-start is given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from mrfseg import branch_cut
from mrfseg.imagegraph import (
    SuperpixelConfig,
    build_grid_graph,
    build_superpixel_rag,
    load_image,
    write_label_map,
)
from mrfseg.lp import INFEASIBLE, add_rows_and_resolve, solve_lp
from mrfseg.model import (
    Labeling,
    MrfInstance,
    VARIANTS,
    build_instance,
    energy,
    extract_labeling,
    lower_model,
)
from mrfseg.region_fusion import init_state, run_fusion
from mrfseg.scribbles import parse_scribbles, seed_means, unary_from_means, unary_from_probmap
from mrfseg.separation import separate_all

STATS_KEYS = (
    "energy",
    "lower_bound",
    "gap",
    "status",
    "cuts_added",
    "separation_rounds",
    "nodes_explored",
    "time_seconds",
    "unlabeled_fraction",
)


@dataclass
class RunConfig:
    image: str
    scribbles: str
    variant: str
    probmap_prefix: str | None = None
    lam: float = 0.2
    eta: float = 0.1
    time_limit: float = 100.0
    gap_tol: float = 1e-4
    superpixels: int = 1000  # 0 = pixel grid
    warm_start: bool = True
    out_labels: str | None = None
    out_stats: str | None = None
    progress_log: str | None = None
    cut_log: str | None = None


@dataclass(eq=False)
class LpPcResult:
    objective: float
    labeling: Labeling
    cuts_added: int
    separation_rounds: int
    unlabeled_fraction: float
    x: np.ndarray


def solve_lp_pc(inst: MrfInstance, tol: float = 1e-6) -> LpPcResult:
    """Linear relaxation with iterated connectivity cuts on its near-integral part.

    Nodes whose strongest label stays below 1 - tol remain unlabeled; cuts are
    separated from the labeled portion only and a cut is added only while the
    current solution actually violates it, so the loop terminates."""
    vs = lower_model(inst)
    prob = vs.problem
    sol = solve_lp(prob)
    if sol.status != "optimal":
        raise RuntimeError(f"relaxation unexpectedly {sol.status}")
    rounds = 0
    added = 0
    while True:
        lab = extract_labeling(inst, sol.x[: vs.num_x], tol=tol)
        violated = []
        for cut in separate_all(inst.graph, lab, inst):
            lhs = sol.x[vs.x_index(cut.target, cut.label)]
            rhs = sum(sol.x[vs.x_index(s, cut.label)] for s in cut.separator)
            if lhs > rhs + 1e-7:
                violated.append(cut)
        if not violated:
            break
        rounds += 1
        added += len(violated)
        sol = add_rows_and_resolve(prob, [c.lp_row(vs) for c in violated], warm=sol.basis)
        if sol.status != "optimal":
            raise RuntimeError(f"relaxation unexpectedly {sol.status}")
    g = inst.graph
    arr = lab.as_array()
    unlabeled = float(g.sigma[arr == 0].sum()) / float(g.sigma.sum())
    return LpPcResult(sol.objective, lab, added, rounds, unlabeled, sol.x)


def _build_pipeline(cfg: RunConfig):
    img = load_image(cfg.image)
    if cfg.superpixels == 0:
        graph = build_grid_graph(img)
    else:
        graph = build_superpixel_rag(img, SuperpixelConfig(target_count=cfg.superpixels))
    scr = parse_scribbles(cfg.scribbles, graph)
    if cfg.probmap_prefix:
        unary = unary_from_probmap(cfg.probmap_prefix, graph, scr.k)
    else:
        unary = unary_from_means(graph, seed_means(graph, scr))
    return graph, scr, unary


def run_variant(graph, scr, unary, variant: str, cfg: RunConfig):
    """Dispatch one model variant; returns (stats dict, labeling or None, result or None)."""
    t0 = time.monotonic()
    inst = build_instance(graph, unary, scr, cfg.lam, variant)
    stats = dict.fromkeys(STATS_KEYS)
    stats["cuts_added"] = 0
    stats["separation_rounds"] = 0
    stats["nodes_explored"] = 0
    stats["unlabeled_fraction"] = 0.0
    result = None
    if variant == "l0h":
        lab = run_fusion(init_state(graph, scr, cfg.eta))
        stats["energy"] = energy(inst, lab)
        stats["status"] = "heuristic"
    elif variant == "lp-pc":
        lp = solve_lp_pc(inst)
        lab = lp.labeling
        stats["energy"] = lp.objective
        stats["lower_bound"] = lp.objective
        stats["status"] = "relaxation"
        stats["cuts_added"] = lp.cuts_added
        stats["separation_rounds"] = lp.separation_rounds
        stats["unlabeled_fraction"] = lp.unlabeled_fraction
    else:
        warm = None
        if variant in ("ilp-pc", "ilp-pcb") and cfg.warm_start:
            warm = run_fusion(init_state(graph, scr, cfg.eta))
        limits = branch_cut.SolveLimits(
            time_limit=cfg.time_limit, gap_tol=cfg.gap_tol
        )
        result = branch_cut.solve(inst, warm=warm, limits=limits)
        lab = result.labeling
        stats["energy"] = result.energy
        stats["lower_bound"] = result.lower_bound
        stats["gap"] = result.gap if np.isfinite(result.gap) else None
        stats["status"] = result.status
        stats["cuts_added"] = result.cuts_added
        stats["separation_rounds"] = result.separation_rounds
        stats["nodes_explored"] = result.nodes_explored
    stats["time_seconds"] = time.monotonic() - t0
    return stats, lab, result


def run_single(cfg: RunConfig) -> dict:
    """Run one variant end to end, writing the label map and stats JSON."""
    graph, scr, unary = _build_pipeline(cfg)
    stats, lab, result = run_variant(graph, scr, unary, cfg.variant, cfg)
    if cfg.out_labels and lab is not None:
        write_label_map(cfg.out_labels, graph, lab.as_array())
    if cfg.out_stats:
        with open(cfg.out_stats, "w") as f:
            json.dump(stats, f, sort_keys=True, indent=2)
            f.write("\n")
    if cfg.progress_log and result is not None:
        with open(cfg.progress_log, "w") as f:
            f.write("time,nodes,incumbent,lower_bound,gap,cuts\n")
            for ev in result.events:
                f.write(
                    f"{ev.wall_time!r},{ev.nodes_explored},{ev.incumbent!r},"
                    f"{ev.lower_bound!r},{ev.gap!r},{ev.cuts_added}\n"
                )
    if cfg.cut_log and result is not None:
        with open(cfg.cut_log, "w") as f:
            f.write("round,label,target,component_size,layer_size\n")
            for rnd, label, target, h_size, layer in result.cut_rounds:
                f.write(f"{rnd},{label},{target},{h_size},{layer}\n")
    return stats


_ORDER_TOL = 1e-9


def verify_ordering(rows: dict) -> list:
    """Relaxation-ordering checks across variant stats; returns violation messages.

    The two relaxations can never exceed the constrained optimum, the heuristic
    can never beat it, and dropping one label's requirement cannot raise it."""
    problems = []
    pc = rows.get("ilp-pc", {}).get("energy")

    def check(msg, lhs, rhs):
        if lhs is not None and rhs is not None and lhs > rhs + _ORDER_TOL:
            problems.append(f"{msg}: {lhs!r} > {rhs!r}")

    if pc is not None:
        check("ilp-p exceeds ilp-pc", rows.get("ilp-p", {}).get("energy"), pc)
        check("lp-pc exceeds ilp-pc", rows.get("lp-pc", {}).get("energy"), pc)
        check("ilp-pcb exceeds ilp-pc", rows.get("ilp-pcb", {}).get("energy"), pc)
        check("ilp-pc exceeds l0h", pc, rows.get("l0h", {}).get("energy"))
    return problems


def run_compare(cfg: RunConfig, variants: list, out_csv: str) -> dict:
    """Run several variants on the same inputs and write a comparison CSV.

    A failing variant aborts the run, leaving a partial table plus an error row;
    relaxation-ordering violations append ERROR rows."""
    graph, scr, unary = _build_pipeline(cfg)
    rows = {}
    error = None
    for variant in variants:
        try:
            stats, _, _ = run_variant(graph, scr, unary, variant, cfg)
            rows[variant] = stats
        except Exception as e:  # noqa: BLE001 - turned into an error row by contract
            error = (variant, str(e))
            break
    header = ["model", *STATS_KEYS]
    lines = [",".join(header)]
    for variant in variants:
        if variant not in rows:
            continue
        st = rows[variant]
        cells = [variant] + [("" if st[k] is None else repr(st[k]) if isinstance(st[k], float) else str(st[k])) for k in STATS_KEYS]
        lines.append(",".join(cells))
    if error is not None:
        lines.append(f"ERROR,run of {error[0]} failed: {error[1]}")
    else:
        for msg in verify_ordering(rows):
            lines.append(f"ERROR,ordering violation: {msg}")
    with open(out_csv, "w") as f:
        f.write("\n".join(lines) + "\n")
    if error is not None:
        raise RuntimeError(f"variant {error[0]} failed: {error[1]}")
    return rows


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", required=True, help="input image (binary PGM/PPM, maxval 255)")
    p.add_argument("--scribbles", required=True, help="scribble JSON file")
    p.add_argument("--probmap-prefix", default=None, help="read unaries from {prefix}_label{l}.pgm")
    p.add_argument("--lambda", dest="lam", type=float, default=0.2, help="smoothness weight in [0, 1]")
    p.add_argument("--eta", type=float, default=0.1, help="region-fusion regularization")
    p.add_argument("--time-limit", type=float, default=100.0, help="solver time limit in seconds")
    p.add_argument("--gap-tol", type=float, default=1e-4, help="relative gap at which the solver stops")
    p.add_argument(
        "--superpixels",
        type=int,
        default=1000,
        help="target superpixel count; 0 solves on the pixel grid",
    )
    p.add_argument("--no-warm-start", action="store_true", help="skip the region-fusion warm start")


def _config_from_args(args, variant: str) -> RunConfig:
    return RunConfig(
        image=args.image,
        scribbles=args.scribbles,
        variant=variant,
        probmap_prefix=args.probmap_prefix,
        lam=args.lam,
        eta=args.eta,
        time_limit=args.time_limit,
        gap_tol=args.gap_tol,
        superpixels=args.superpixels,
        warm_start=not args.no_warm_start,
        out_labels=getattr(args, "out_labels", None),
        out_stats=getattr(args, "out_stats", None),
        progress_log=getattr(args, "progress_log", None),
        cut_log=getattr(args, "cut_log", None),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mrfseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run one model variant")
    _add_common(p_solve)
    p_solve.add_argument("--model", required=True, choices=VARIANTS)
    p_solve.add_argument("--out-labels", default=None, help="label map output (PGM)")
    p_solve.add_argument("--out-stats", default=None, help="stats JSON output")
    p_solve.add_argument("--progress-log", default=None, help="solver progress CSV")
    p_solve.add_argument("--cut-log", default=None, help="separator cut CSV")
    p_compare = sub.add_parser("compare", help="run several variants and tabulate")
    _add_common(p_compare)
    p_compare.add_argument("--models", required=True, help="comma-separated variant list")
    p_compare.add_argument("--out-csv", required=True, help="comparison table output")
    args = parser.parse_args(argv)
    if args.command == "solve":
        cfg = _config_from_args(args, args.model)
        stats = run_single(cfg)
        print(json.dumps(stats, sort_keys=True))
        return 0
    variants = [v.strip() for v in args.models.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            parser.error(f"unknown model {v!r}; choose from {', '.join(VARIANTS)}")
    cfg = _config_from_args(args, variants[0])
    rows = run_compare(cfg, variants, args.out_csv)
    problems = verify_ordering(rows)
    for msg in problems:
        print(f"ERROR: {msg}", file=sys.stderr)
    return 2 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
