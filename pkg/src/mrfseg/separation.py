"""Connectivity checking of labelings and rooted vertex-separator cut generation.

A label whose active node set splits into several components violates the
connectivity prior. For each component H not containing the label's root we run
a breadth-first search from H that only traverses nodes currently inactive for
that label. Every complete BFS distance layer is a vertex separator between H
and all other active nodes, so each layer yields a violated inequality

    x[target, label] <= sum over s in layer of x[s, label]

with target the lowest node id of H. Layer generation stops after |H| layers or
when the search touches another active node while building a layer, whichever
comes first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mrfseg.imagegraph import RagGraph
from mrfseg.model import Labeling, MrfInstance, VariableSpace


class SeparationError(RuntimeError):
    """Internal bookkeeping violation (not a user input error)."""


@dataclass(frozen=True)
class SeparatorCut:
    """One rooted vertex-separator inequality for a label.

    ``separator`` disconnects ``target`` from the label's root; ``h_size`` and
    ``trigger_active`` record the component and active set that produced the cut
    (audit metadata, not part of the inequality).
    """

    label: int
    target: int
    separator: tuple
    h_size: int = 0
    trigger_active: tuple = ()

    def lp_row(self, vs: VariableSpace):
        cols = [vs.x_index(self.target, self.label)]
        vals = [1.0]
        for s in self.separator:
            cols.append(vs.x_index(s, self.label))
            vals.append(-1.0)
        return np.array(cols), np.array(vals), "<=", 0.0


@dataclass(frozen=True)
class ActiveComponents:
    """Connected components of one label's active node set."""

    label: int
    components: tuple  # sorted tuples of node ids, ordered by smallest member
    root_component: int | None  # index into components, if a root was supplied

    @property
    def connected(self) -> bool:
        return len(self.components) == 1


def components_of_label(graph: RagGraph, lab: Labeling, label: int, root: int | None = None) -> ActiveComponents:
    """Split the active set {i : lab(i) == label} into connected components."""
    arr = lab.as_array()
    active = set(np.flatnonzero(arr == label).tolist())
    if not active:
        raise SeparationError(f"label {label} has no active nodes")
    comps = []
    seen = set()
    for start in sorted(active):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        for u in comp:
            for v in graph.neighbor_ids(u):
                if v in active and v not in seen:
                    seen.add(v)
                    comp.append(v)
        comps.append(tuple(sorted(comp)))
    root_comp = None
    if root is not None:
        for idx, comp in enumerate(comps):
            if root in comp:
                root_comp = idx
                break
        if root_comp is None:
            raise SeparationError(f"root {root} of label {label} is not active")
    return ActiveComponents(label, tuple(comps), root_comp)


def _separates(graph: RagGraph, blocked: set, src: int, dst: int) -> bool:
    """True iff removing ``blocked`` disconnects src from dst in the full graph."""
    if src in blocked or dst in blocked:
        raise SeparationError("separator may not contain its endpoints")
    seen = {src}
    queue = [src]
    for u in queue:
        for v in graph.neighbor_ids(u):
            if v == dst:
                return False
            if v not in seen and v not in blocked:
                seen.add(v)
                queue.append(v)
    return True


def knearest_separators(
    graph: RagGraph, lab: Labeling, label: int, component, root: int
) -> list:
    """Generate one separator cut per BFS distance layer around a stranded component.

    ``component`` must be a maximal connected active component not containing the
    root. Layers consist of nodes inactive for the label at exactly distance m;
    generation emits layers 1..K with K = min(|component|, d-1) where d is the
    distance at which another active node is first reached.
    """
    arr = lab.as_array()
    h_set = set(int(v) for v in component)
    if root in h_set:
        raise SeparationError("component contains the root")
    for u in h_set:
        if arr[u] != label:
            raise SeparationError(f"node {u} is not active for label {label}")
    target = min(h_set)
    dist = {u: 0 for u in h_set}
    frontier = sorted(h_set)
    layers = []
    while len(layers) < len(h_set):
        nxt = set()
        hit_active = False
        for u in frontier:
            for v in graph.neighbor_ids(u):
                if v in dist:
                    continue
                if arr[v] == label:
                    hit_active = True
                    if not layers:
                        # an active neighbor of a maximal component is a bookkeeping bug
                        raise SeparationError(
                            f"component of label {label} touches another active node {v}"
                        )
                else:
                    nxt.add(v)
        if hit_active or not nxt:
            break
        layer = tuple(sorted(nxt))
        for v in layer:
            dist[v] = len(layers) + 1
        layers.append(layer)
        frontier = list(layer)
    trigger = tuple(sorted(int(v) for v in np.flatnonzero(arr == label)))
    cuts = []
    for layer in layers:
        if not _separates(graph, set(layer), target, root):
            raise SeparationError("BFS layer failed to separate target from root")
        cuts.append(
            SeparatorCut(label, target, layer, h_size=len(h_set), trigger_active=trigger)
        )
    return cuts


def separate_all(graph: RagGraph, lab: Labeling, inst: MrfInstance) -> list:
    """All violated separator cuts of a labeling, over connectivity-required labels.

    Empty iff every required label's active set is connected (unlabeled nodes
    count as inactive for every label, so partially labeled solutions work too).
    """
    cuts = []
    for label in range(1, inst.k + 1):
        if not inst.connectivity_required[label - 1]:
            continue
        root = inst.roots[label - 1]
        comps = components_of_label(graph, lab, label, root=root)
        if comps.connected:
            continue
        for idx, comp in enumerate(comps.components):
            if idx == comps.root_component:
                continue
            cuts.extend(knearest_separators(graph, lab, label, comp, root))
    return cuts
