"""Branch-and-bound with lazy connectivity cuts.

The relaxation omits the connectivity priors entirely. Whenever a node LP comes
back integral the labeling is checked; disconnected required labels produce
rooted separator cuts that are added globally (they are valid for the polytope,
not just the node) and the node LP is re-solved before continuing. Search is a
depth-first dive until the first incumbent when no warm start is given, then
best-bound. Everything is deterministic: node selection ties break on depth and
insertion order, branching ties on variable index.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from mrfseg.lp import BREAKDOWN, INFEASIBLE, LpBasis, LpError, solve_lp
from mrfseg.model import Labeling, MrfInstance, energy, extract_labeling, lower_model
from mrfseg.oracle import connectivity_check
from mrfseg.separation import separate_all

_INT_TOL = 1e-6
_INCUMBENT_TOL = 1e-9

OPTIMAL = "optimal"
TIME_LIMIT = "time-limit"
INFEASIBLE_STATUS = "infeasible"


@dataclass(eq=False)
class SearchNode:
    """Bound changes relative to the root plus bookkeeping for node selection."""

    bounds: dict  # var index -> (lo, hi), cumulative from the root
    bound: float  # inherited LP objective, a valid lower bound for the subtree
    depth: int
    seq: int
    basis: LpBasis | None = None


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 100.0
    gap_tol: float = 1e-4
    node_cap: int = 1_000_000


@dataclass(frozen=True)
class SolveEvent:
    wall_time: float
    nodes_explored: int
    incumbent: float
    lower_bound: float
    gap: float
    cuts_added: int


@dataclass(eq=False)
class SolveResult:
    labeling: Labeling | None
    energy: float
    lower_bound: float
    gap: float
    status: str
    status_reason: str
    cuts_added: int
    separation_rounds: int
    nodes_explored: int
    lp_pivots: int
    wall_time: float
    cuts: list = field(default_factory=list)
    cut_rounds: list = field(default_factory=list)  # (round, label, target, |H|, layer size)
    events: list = field(default_factory=list)


def ilp_gap(incumbent: float, bound: float) -> float:
    """(I - LP) / I for a minimization run; 0 when the bound has closed."""
    if not math.isfinite(incumbent):
        return math.inf
    d = incumbent - bound
    if d <= 0:
        return 0.0
    if incumbent == 0:
        return math.inf
    return d / abs(incumbent)


def select_node(open_nodes) -> SearchNode:
    """Best-bound selection; ties break on lowest depth, then insertion order."""
    if not open_nodes:
        raise ValueError("open list is empty")
    return min(open_nodes, key=lambda nd: (nd.bound, nd.depth, nd.seq))


def select_branch_var(x_binaries, tol: float = _INT_TOL) -> int:
    """Fractional binary closest to one half; ties break on lowest index.

    Distances are rounded to 12 decimals so that values symmetric around one half
    (0.3 vs 0.7) count as an exact tie despite binary floating point."""
    x = np.asarray(x_binaries, dtype=np.float64)
    frac = (x > tol) & (x < 1.0 - tol)
    if not frac.any():
        raise ValueError("no fractional binary variable")
    score = np.where(frac, np.round(np.abs(x - 0.5), 12), np.inf)
    return int(np.argmin(score))


def _is_integral(x: np.ndarray, tol: float = _INT_TOL) -> bool:
    return bool(np.all((x <= tol) | (x >= 1.0 - tol)))


def solve(inst: MrfInstance, warm: Labeling | None = None, limits: SolveLimits | None = None) -> SolveResult:
    """Minimize the instance objective over labelings meeting the connectivity
    requirements; returns the incumbent plus a valid global lower bound even when
    stopped early by the time or node limit."""
    limits = limits or SolveLimits()
    t0 = time.monotonic()
    vs = lower_model(inst)
    prob = vs.problem
    incumbent = math.inf
    best: Labeling | None = None
    if warm is not None:
        _check_warm(inst, warm)
        incumbent = energy(inst, warm)
        best = warm
    events: list = []
    cuts: list = []
    cut_rounds: list = []
    sep_rounds = 0
    nodes_explored = 0
    pivots = 0
    lower = -math.inf
    seq = 0
    open_nodes = [SearchNode({}, -math.inf, 0, seq)]
    status = None
    reason = ""

    def record(extra_bound=None):
        nonlocal lower
        vals = [nd.bound for nd in open_nodes]
        if extra_bound is not None:
            vals.append(extra_bound)
        now = min(vals) if vals else incumbent
        if math.isfinite(incumbent):
            now = min(now, incumbent)
        lower = max(lower, now)
        events.append(
            SolveEvent(
                time.monotonic() - t0,
                nodes_explored,
                incumbent,
                lower,
                ilp_gap(incumbent, lower),
                len(cuts),
            )
        )

    def out_of_budget():
        nonlocal status, reason
        if time.monotonic() - t0 > limits.time_limit:
            status, reason = TIME_LIMIT, "time limit reached"
            return True
        if nodes_explored >= limits.node_cap:
            status, reason = TIME_LIMIT, "node cap reached"
            return True
        return False

    while True:
        if not open_nodes:
            if best is None:
                status, reason = INFEASIBLE_STATUS, "search tree exhausted without a feasible labeling"
            else:
                status, reason = OPTIMAL, "search tree exhausted"
                lower = incumbent
            break
        if best is not None:
            lower = max(lower, min(min(nd.bound for nd in open_nodes), incumbent))
            if ilp_gap(incumbent, lower) <= limits.gap_tol:
                status, reason = OPTIMAL, "gap tolerance reached"
                break
        if out_of_budget():
            break
        node = open_nodes[-1] if best is None else select_node(open_nodes)
        open_nodes.remove(node)
        if node.bound >= incumbent - _INCUMBENT_TOL:
            continue
        lb = prob.lb.copy()
        ub = prob.ub.copy()
        for var, (lo, hi) in node.bounds.items():
            lb[var] = lo
            ub[var] = hi
        node_prob = prob.with_bounds(lb, ub)
        sol = solve_lp(node_prob, warm=node.basis)
        nodes_explored += 1
        pivots += sol.pivots
        if sol.status == BREAKDOWN:
            raise LpError("node LP broke down numerically")
        if sol.status == INFEASIBLE:
            record()
            continue
        node_bound = max(node.bound, sol.objective)
        record(node_bound)
        fathomed = False
        while True:
            if sol.objective >= incumbent - _INCUMBENT_TOL:
                fathomed = True
                break
            xb = sol.x[: vs.num_x]
            if not _is_integral(xb):
                break
            lab = extract_labeling(inst, xb)
            new_cuts = separate_all(inst.graph, lab, inst)
            if not new_cuts:
                cand = energy(inst, lab)
                if cand < incumbent - _INCUMBENT_TOL:
                    incumbent = cand
                    best = lab
                    open_nodes = [
                        nd for nd in open_nodes if nd.bound < incumbent - _INCUMBENT_TOL
                    ]
                record(node_bound)
                fathomed = True
                break
            # add the violated cuts globally, then re-solve this node's LP
            sep_rounds += 1
            for cut in new_cuts:
                cols, vals, sense, rhs = cut.lp_row(vs)
                prob.add_row(cols, vals, sense, rhs)
                cuts.append(cut)
                cut_rounds.append((sep_rounds, cut.label, cut.target, cut.h_size, len(cut.separator)))
            if out_of_budget():
                fathomed = True
                break
            sol = solve_lp(node_prob, warm=sol.basis)
            pivots += sol.pivots
            if sol.status == BREAKDOWN:
                raise LpError("node LP broke down numerically")
            if sol.status == INFEASIBLE:
                record()
                fathomed = True
                break
            node_bound = max(node_bound, sol.objective)
            record(node_bound)
        if status is not None:
            break
        if fathomed:
            continue
        branch_var = select_branch_var(sol.x[: vs.num_x])
        for fix in (0.0, 1.0):
            seq += 1
            child_bounds = dict(node.bounds)
            child_bounds[branch_var] = (fix, fix)
            open_nodes.append(
                SearchNode(child_bounds, node_bound, node.depth + 1, seq, basis=sol.basis)
            )
    if status == OPTIMAL:
        lower = min(lower, incumbent)
    # a budget stop whose bound already closed within tolerance is an optimal stop
    if status == TIME_LIMIT and ilp_gap(incumbent, lower) <= limits.gap_tol:
        status, reason = OPTIMAL, "gap tolerance reached at budget stop"
        lower = min(lower, incumbent)
    record()
    gap = ilp_gap(incumbent, lower)
    return SolveResult(
        labeling=best,
        energy=incumbent,
        lower_bound=lower,
        gap=gap,
        status=status,
        status_reason=reason,
        cuts_added=len(cuts),
        separation_rounds=sep_rounds,
        nodes_explored=nodes_explored,
        lp_pivots=pivots,
        wall_time=time.monotonic() - t0,
        cuts=cuts,
        cut_rounds=cut_rounds,
        events=events,
    )


def _check_warm(inst: MrfInstance, warm: Labeling) -> None:
    if len(warm) != inst.graph.n:
        raise ValueError("warm labeling has the wrong length")
    if not warm.is_total:
        raise ValueError("warm labeling must be total")
    arr = warm.as_array()
    for node, label in inst.fixed:
        if arr[node] != label:
            raise ValueError(f"warm labeling violates fixing ({node}, {label})")
    if not connectivity_check(inst.graph, warm, inst):
        raise ValueError("warm labeling violates a connectivity requirement")
