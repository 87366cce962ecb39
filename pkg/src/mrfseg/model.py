"""Optimization instance assembly and energy evaluation.

The objective being minimized over one-hot node labelings x is

    (1 - lam) * sum_i sigma_i * c[i, x(i)]  +  lam * sum_{(i,j) in E} gamma_ij * 2 * [x(i) != x(j)]

where the factor 2 comes from writing the boundary term as a per-label sum of
|x_il - x_jl|, which counts every disagreeing edge twice. The linear lower model
splits each |x_il - x_jl| into a pair of nonnegative slacks per (edge, label).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from mrfseg.imagegraph import RagGraph
from mrfseg.lp import LpProblem
from mrfseg.scribbles import ScribbleSet, UnaryField

VARIANTS = ("ilp-pc", "ilp-pcb", "ilp-p", "lp-pc", "l0h")

UNLABELED = 0


class ModelError(ValueError):
    """Inconsistent instance data or labeling."""


@dataclass(frozen=True)
class Labeling:
    """Per-node labels in 1..k; 0 marks an unlabeled node (fractional extraction)."""

    labels: tuple

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def is_total(self) -> bool:
        return UNLABELED not in self.labels

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    @staticmethod
    def from_array(arr) -> "Labeling":
        return Labeling(tuple(int(v) for v in arr))


@dataclass(frozen=True, eq=False)
class MrfInstance:
    """Complete optimization input: graph, costs, smoothness weight, variant switches."""

    graph: RagGraph
    k: int
    unary: UnaryField
    lam: float
    variant: str
    connectivity_required: tuple  # per label, index l-1
    roots: tuple  # per label, node id or None
    fixed: tuple  # ((node, label), ...) scribble fixings
    background_label: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ModelError(f"lam must lie in [0, 1], got {self.lam}")
        if self.k < 1:
            raise ModelError("k must be >= 1")
        if self.unary.c.shape != (self.graph.n, self.k):
            raise ModelError(
                f"unary shape {self.unary.c.shape} does not match n={self.graph.n}, k={self.k}"
            )
        if len(self.connectivity_required) != self.k or len(self.roots) != self.k:
            raise ModelError("per-label switches must have length k")
        seen = {}
        for node, label in self.fixed:
            if not (0 <= node < self.graph.n and 1 <= label <= self.k):
                raise ModelError(f"fixed assignment ({node}, {label}) out of range")
            if seen.get(node, label) != label:
                raise ModelError(f"conflicting fixed assignments at node {node}")
            seen[node] = label
        for label in range(1, self.k + 1):
            if self.connectivity_required[label - 1] and self.roots[label - 1] is None:
                raise ModelError(f"label {label} requires connectivity but has no root")


def build_instance(
    graph: RagGraph,
    unary: UnaryField,
    scribbles: ScribbleSet,
    lam: float,
    variant: str,
) -> MrfInstance:
    """Assemble the instance for a model variant: scribble-covered nodes become fixed
    assignments, connectivity flags follow the variant, roots come from the scribbles."""
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}")
    k = scribbles.k
    roots = tuple(scribbles.root_of(label) for label in range(1, k + 1))
    background = scribbles.background_label
    if variant == "ilp-p":
        required = (False,) * k
    elif variant == "ilp-pcb":
        if background is None:
            raise ModelError("ilp-pcb needs a background label flagged in the scribbles")
        required = tuple(label != background for label in range(1, k + 1))
    else:
        if variant == "ilp-pc" and background is not None:
            warnings.warn("background flag ignored for ilp-pc", stacklevel=2)
        required = (True,) * k
    fixed = []
    for ls in scribbles.labels:
        fixed.extend((node, ls.label) for node in ls.nodes)
    return MrfInstance(
        graph=graph,
        k=k,
        unary=unary,
        lam=float(lam),
        variant=variant,
        connectivity_required=required,
        roots=roots,
        fixed=tuple(fixed),
        background_label=background if variant == "ilp-pcb" else None,
    )


@dataclass(eq=False)
class VariableSpace:
    """Index map and linear rows of the relaxation.

    Binaries x[i, l] live at i*k + (l-1); each (edge, label) owns a slack pair at
    n*k + 2*(e*k + (l-1)) (+0 positive side, +1 negative side). Rows: one per node
    (labels sum to 1), one per (edge, label) tying x differences to the slack pair.
    """

    n: int
    k: int
    edges: list
    problem: LpProblem

    @property
    def num_x(self) -> int:
        return self.n * self.k

    def x_index(self, node: int, label: int) -> int:
        return node * self.k + (label - 1)

    def eps_index(self, edge_idx: int, label: int, positive: bool) -> int:
        return self.num_x + 2 * (edge_idx * self.k + (label - 1)) + (0 if positive else 1)


def lower_model(inst: MrfInstance) -> VariableSpace:
    """Build the linear relaxation: objective (1-lam)*sigma*c on binaries and
    lam*gamma on slacks, one-label rows, edge rows, and scribble fixings as bounds."""
    g = inst.graph
    n, k = g.n, inst.k
    ne = len(g.edges)
    ncols = n * k + 2 * ne * k
    c = np.zeros(ncols)
    c[: n * k] = ((1.0 - inst.lam) * g.sigma[:, None] * inst.unary.c).ravel()
    eps_cost = (inst.lam * g.gamma.astype(np.float64)).repeat(2 * k)
    c[n * k :] = eps_cost
    lb = np.zeros(ncols)
    ub = np.ones(ncols)
    problem = LpProblem(c, lb, ub)
    vs = VariableSpace(n, k, list(g.edges), problem)
    for node, label in inst.fixed:
        for l in range(1, k + 1):
            idx = vs.x_index(node, l)
            if l == label:
                lb[idx] = 1.0
            else:
                ub[idx] = 0.0
    for i in range(n):
        cols = np.array([vs.x_index(i, l) for l in range(1, k + 1)])
        problem.add_row(cols, np.ones(k), "=", 1.0)
    for e, (i, j) in enumerate(g.edges):
        for l in range(1, k + 1):
            cols = np.array(
                [vs.x_index(i, l), vs.x_index(j, l), vs.eps_index(e, l, True), vs.eps_index(e, l, False)]
            )
            problem.add_row(cols, np.array([1.0, -1.0, -1.0, 1.0]), "=", 0.0)
    return vs


def energy(inst: MrfInstance, lab: Labeling) -> float:
    """Objective value of a total labeling."""
    arr = lab.as_array()
    if arr.shape != (inst.graph.n,):
        raise ModelError("labeling length mismatch")
    if (arr == UNLABELED).any():
        raise ModelError("unlabeled node present")
    g = inst.graph
    unary = float((g.sigma * inst.unary.c[np.arange(g.n), arr - 1]).sum())
    if g.edges:
        ij = np.asarray(g.edges, dtype=np.int64)
        diff = arr[ij[:, 0]] != arr[ij[:, 1]]
        pair = float((g.gamma * 2 * diff).sum())
    else:
        pair = 0.0
    return (1.0 - inst.lam) * unary + inst.lam * pair


def extract_labeling(inst: MrfInstance, x, tol: float = 1e-6) -> Labeling:
    """Read node labels off the binary block of a solution vector.

    A node gets label l iff x[i, l] >= 1 - tol; nodes where no label reaches the
    threshold stay unlabeled (fractional solutions)."""
    xmat = np.asarray(x, dtype=np.float64)
    if xmat.size != inst.graph.n * inst.k:
        raise ModelError(f"expected {inst.graph.n * inst.k} binaries, got {xmat.size}")
    xmat = xmat.reshape(inst.graph.n, inst.k)
    active = xmat >= 1.0 - tol
    counts = active.sum(axis=1)
    if (counts > 1).any():
        node = int(np.argmax(counts > 1))
        raise ModelError(f"two labels active at node {node}")
    labels = np.where(counts == 1, np.argmax(active, axis=1) + 1, UNLABELED)
    return Labeling.from_array(labels)


def instance_summary(inst: MrfInstance) -> dict:
    """Free-form debug dump of instance dimensions and switches."""
    return {
        "nodes": inst.graph.n,
        "edges": len(inst.graph.edges),
        "k": inst.k,
        "lam": inst.lam,
        "variant": inst.variant,
        "connectivity_required": list(inst.connectivity_required),
        "roots": list(inst.roots),
        "fixed_count": len(inst.fixed),
        "background_label": inst.background_label,
    }
