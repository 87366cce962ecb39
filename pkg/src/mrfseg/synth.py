"""Synthetic graphs and instances for tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mrfseg.imagegraph import RagGraph, RasterImage, build_grid_graph
from mrfseg.model import MrfInstance, build_instance
from mrfseg.scribbles import ScribbleSet, UnaryField, scribbles_from_nodes


def make_rag(edges, sigma, features=None, gamma=None, channels=1) -> RagGraph:
    """RagGraph over an abstract connected graph; memberships are fabricated as
    consecutive pixel ranges of a 1-row image so the partition invariants hold."""
    sigma = np.asarray(sigma, dtype=np.int64)
    n = sigma.size
    if features is None:
        features = np.zeros((n, channels))
    if gamma is None:
        gamma = np.ones(len(edges), dtype=np.int64)
    bounds = np.concatenate([[0], np.cumsum(sigma)])
    membership = [np.arange(bounds[i], bounds[i + 1]) for i in range(n)]
    width = int(sigma.sum())
    return RagGraph(width, 1, channels, list(edges), sigma, gamma, np.asarray(features, float), membership)


def random_image(rng, width, height, channels=1) -> RasterImage:
    return RasterImage(width, height, channels, rng.random((height, width, channels)))


def random_connected_rag(rng, n, extra_edges=0.3, max_sigma=3, max_gamma=3, channels=1) -> RagGraph:
    """Random spanning tree plus extra edges, random node sizes and boundary lengths."""
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.add((j, i))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edges:
                edges.add((i, j))
    edges = sorted(edges)
    sigma = rng.integers(1, max_sigma + 1, size=n)
    gamma = rng.integers(1, max_gamma + 1, size=len(edges))
    features = rng.random((n, channels))
    return make_rag(edges, sigma, features, gamma, channels)


def random_grid_rag(rng, width, height, channels=1) -> RagGraph:
    return build_grid_graph(random_image(rng, width, height, channels))


def random_scribbles(rng, graph: RagGraph, k, multi_prob=0.3, background=False) -> ScribbleSet:
    """k single- or two-node seeds on distinct nodes; two-node seeds stay adjacent."""
    roots = rng.choice(graph.n, size=k, replace=False)
    taken = set(int(r) for r in roots)
    node_lists = {}
    for label in range(1, k + 1):
        nodes = [int(roots[label - 1])]
        if rng.random() < multi_prob:
            free = [v for v in graph.neighbor_ids(nodes[0]) if v not in taken]
            if free:
                extra = free[int(rng.integers(0, len(free)))]
                nodes.append(extra)
                taken.add(extra)
        node_lists[label] = nodes
    background_label = int(rng.integers(1, k + 1)) if background else None
    return scribbles_from_nodes(graph, node_lists, background_label)


@dataclass(eq=False)
class Bundle:
    """Shared data from which all model variants build their instances."""

    graph: RagGraph
    scribbles: ScribbleSet
    unary: UnaryField
    lam: float

    def instance(self, variant: str) -> MrfInstance:
        return build_instance(self.graph, self.unary, self.scribbles, self.lam, variant)


def random_bundle(rng, max_nodes=9, k_choices=(2, 3), lam_choices=(0.0, 0.2, 0.5), background=False) -> Bundle:
    """Random small instance bundle: a grid up to 3x3 or a random connected graph
    up to max_nodes nodes, unaries uniform in [0, 1], random valid scribbles."""
    if rng.random() < 0.5:
        w = int(rng.integers(1, 4))
        h = int(rng.integers(1, 4))
        if w * h < 2:
            h = 2
        graph = random_grid_rag(rng, w, h)
    else:
        n = int(rng.integers(2, max_nodes + 1))
        graph = random_connected_rag(rng, n)
    k = int(rng.choice([c for c in k_choices if c <= graph.n]))
    unary = UnaryField(rng.random((graph.n, k)))
    lam = float(rng.choice(lam_choices))
    scribbles = random_scribbles(rng, graph, k, background=background)
    return Bundle(graph, scribbles, unary, lam)


def two_node_instance(lam=0.2, variant="ilp-pc") -> MrfInstance:
    """Two adjacent nodes, k=2, costs favoring labels (1, 2); optimum energy 2*lam
    at labeling (1, 2) once lam < 0.5."""
    graph = make_rag([(0, 1)], [1, 1], features=[[0.0], [1.0]])
    scribbles = scribbles_from_nodes(graph, {1: [0], 2: [1]})
    unary = UnaryField(np.array([[0.0, 1.0], [1.0, 0.0]]))
    return build_instance(graph, unary, scribbles, lam, variant)


def path3_connectivity_instance(lam=0.05):
    """Path 0-1-2 where label 1 is fixed at both ends and label 2 is cheapest in
    the middle: without connectivity the optimum is (1, 2, 1), with it (1, 1, 1)."""
    graph = make_rag([(0, 1), (1, 2)], [1, 1, 1], features=[[0.0], [1.0], [0.0]])
    unary = UnaryField(np.array([[0.0, 1.0], [0.9, 0.0], [0.0, 1.0]]))
    required = MrfInstance(
        graph=graph,
        k=2,
        unary=unary,
        lam=lam,
        variant="ilp-pc",
        connectivity_required=(True, False),
        roots=(0, None),
        fixed=((0, 1), (2, 1)),
    )
    relaxed = MrfInstance(
        graph=graph,
        k=2,
        unary=unary,
        lam=lam,
        variant="ilp-p",
        connectivity_required=(False, False),
        roots=(0, None),
        fixed=((0, 1), (2, 1)),
    )
    return required, relaxed


def fractional_lp_instance(lam=0.2) -> MrfInstance:
    """Triangle core {0, 1, 2} with pendant seeds {3, 4, 5}, k=3. Each core node
    dislikes its pendant's label, so the relaxation prefers a half-integral core
    strictly below any connectivity-feasible labeling."""
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 4), (2, 5)]
    graph = make_rag(edges, [1] * 6, features=np.zeros((6, 1)))
    unary = UnaryField(
        np.array(
            [
                [3.0, 0.0, 0.0],
                [0.0, 3.0, 0.0],
                [0.0, 0.0, 3.0],
                [0.0, 3.0, 3.0],
                [3.0, 0.0, 3.0],
                [3.0, 3.0, 0.0],
            ]
        )
    )
    scribbles = scribbles_from_nodes(graph, {1: [3], 2: [4], 3: [5]})
    return build_instance(graph, unary, scribbles, lam, "lp-pc")
