"""Greedy region fusion producing exactly k connected, seed-consistent segments.

Starts from one group per scribble plus singleton groups for uncovered nodes and
repeatedly merges adjacent groups i, j whenever

    size_i * size_j * |mean_i - mean_j|  <=  beta * boundary_ij * (size_i + size_j)

and the merge would not put two different seeds into one group. beta follows the
schedule beta = (iter / 100) ** 2.2 * eta, one increment per full sweep, so the
criterion keeps loosening until exactly k groups remain. Groups only ever merge
across adjacency, which keeps every group connected and makes the result a valid
warm start for the connectivity-constrained solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mrfseg.imagegraph import RagGraph
from mrfseg.model import Labeling
from mrfseg.scribbles import ScribbleSet

_MAX_SWEEPS = 1_000_000


class FusionError(RuntimeError):
    """Fusion cannot produce k seed-consistent groups."""


@dataclass(eq=False)
class FusionState:
    graph: RagGraph
    k: int
    eta: float
    node_group: np.ndarray  # node -> initial group id
    parent: dict  # union-find over group ids, merged id = min of the pair
    size: dict  # group id -> pixel count
    feat_sum: dict  # group id -> sum of size-weighted features
    tag: dict  # group id -> label id or None
    adj: dict  # group id -> {neighbor group id: boundary length}
    iter_count: int = 0
    beta: float = 0.0

    @property
    def num_groups(self) -> int:
        return len(self.size)

    def find(self, gid: int) -> int:
        while self.parent[gid] != gid:
            self.parent[gid] = self.parent[self.parent[gid]]
            gid = self.parent[gid]
        return gid

    def mean_of(self, gid: int) -> np.ndarray:
        return self.feat_sum[gid] / self.size[gid]


def init_state(graph: RagGraph, scribbles: ScribbleSet, eta: float) -> FusionState:
    """One group per scribble (its covered nodes merged), singletons elsewhere."""
    if not eta > 0:
        raise FusionError(f"eta must be > 0, got {eta}")
    k = scribbles.k
    node_group = np.full(graph.n, -1, dtype=np.int64)
    for ls in scribbles.labels:
        nodes = set(ls.nodes)
        # a scribble group must induce a connected subgraph
        queue = [ls.nodes[0]]
        seen = {ls.nodes[0]}
        for u in queue:
            for v in graph.neighbor_ids(u):
                if v in nodes and v not in seen:
                    seen.add(v)
                    queue.append(v)
        if seen != nodes:
            raise FusionError(f"scribble for label {ls.label} covers a disconnected node set")
        node_group[list(nodes)] = ls.label - 1
    next_gid = k
    for node in range(graph.n):
        if node_group[node] < 0:
            node_group[node] = next_gid
            next_gid += 1
    size: dict = {}
    feat_sum: dict = {}
    tag: dict = {}
    for gid in range(next_gid):
        members = np.flatnonzero(node_group == gid)
        w = graph.sigma[members].astype(np.float64)
        size[gid] = int(w.sum())
        feat_sum[gid] = (graph.features[members] * w[:, None]).sum(axis=0)
        tag[gid] = gid + 1 if gid < k else None
    adj: dict = {gid: {} for gid in range(next_gid)}
    for e, (i, j) in enumerate(graph.edges):
        gi, gj = int(node_group[i]), int(node_group[j])
        if gi == gj:
            continue
        adj[gi][gj] = adj[gi].get(gj, 0) + int(graph.gamma[e])
        adj[gj][gi] = adj[gj].get(gi, 0) + int(graph.gamma[e])
    parent = {gid: gid for gid in range(next_gid)}
    return FusionState(graph, k, float(eta), node_group, parent, size, feat_sum, tag, adj)


def merge_predicate(state: FusionState, i: int, j: int) -> bool:
    """Merge test for two adjacent groups under the current beta.

    False when the groups carry different seeds; multichannel means are compared
    by mean absolute difference per channel."""
    if i == j or j not in state.adj[i]:
        raise FusionError(f"groups {i} and {j} are not adjacent")
    ti, tj = state.tag[i], state.tag[j]
    if ti is not None and tj is not None and ti != tj:
        return False
    d = float(np.abs(state.mean_of(i) - state.mean_of(j)).mean())
    si, sj = state.size[i], state.size[j]
    return si * sj * d <= state.beta * state.adj[i][j] * (si + sj)


def _merge(state: FusionState, i: int, j: int) -> None:
    keep, gone = (i, j) if i < j else (j, i)
    state.parent[gone] = keep
    state.size[keep] += state.size[gone]
    state.feat_sum[keep] = state.feat_sum[keep] + state.feat_sum[gone]
    if state.tag[keep] is None:
        state.tag[keep] = state.tag[gone]
    del state.size[gone], state.feat_sum[gone], state.tag[gone]
    for nbr, g in state.adj[gone].items():
        del state.adj[nbr][gone]
        if nbr == keep:
            continue
        state.adj[keep][nbr] = state.adj[keep].get(nbr, 0) + g
        state.adj[nbr][keep] = state.adj[keep][nbr]
    del state.adj[gone]


def _sweep(state: FusionState) -> bool:
    """One pass at the current beta: scan adjacent pairs in ascending id order,
    merge whenever the predicate holds, rescan after every merge. Stops as soon
    as only k groups remain."""
    merged_any = True
    progress = False
    while merged_any and state.num_groups > state.k:
        merged_any = False
        pairs = sorted((a, b) for a in state.adj for b in state.adj[a] if a < b)
        for a, b in pairs:
            if merge_predicate(state, a, b):
                _merge(state, a, b)
                merged_any = True
                progress = True
                break
    return progress


def run_fusion(state: FusionState) -> Labeling:
    """Grow beta sweep by sweep until exactly k groups remain, then read labels off
    the seed tags."""
    while state.num_groups > state.k:
        if state.iter_count >= _MAX_SWEEPS:
            raise FusionError("beta schedule exhausted without reaching k groups")
        state.iter_count += 1
        state.beta = beta_schedule(state.iter_count, state.eta)
        if not _sweep(state) and state.num_groups > state.k:
            conflict_only = all(
                state.tag[a] is not None
                and state.tag[b] is not None
                and state.tag[a] != state.tag[b]
                for a in state.adj
                for b in state.adj[a]
                if a < b
            )
            if conflict_only:
                raise FusionError(
                    f"stuck at {state.num_groups} groups: every remaining adjacent pair "
                    "carries two different seeds"
                )
    labels = np.zeros(state.graph.n, dtype=np.int64)
    for node in range(state.graph.n):
        gid = state.find(int(state.node_group[node]))
        tag = state.tag[gid]
        if tag is None:
            raise FusionError(f"terminal group {gid} carries no seed")
        labels[node] = tag
    return Labeling.from_array(labels)


def beta_schedule(iter_count: int, eta: float) -> float:
    """Merge-threshold schedule: (iter / 100) ** 2.2 * eta."""
    return (iter_count / 100.0) ** 2.2 * eta
