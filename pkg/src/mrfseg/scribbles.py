"""Scribble ingestion and unary potentials (seed means or probability maps)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from mrfseg.imagegraph import RagGraph, read_pnm


class ScribbleError(ValueError):
    """Invalid scribble file or scribble/graph mismatch."""


@dataclass(frozen=True)
class LabelScribble:
    label: int  # 1-based
    background: bool
    pixels: tuple  # ((row, col), ...) as given; first pixel defines the root
    nodes: tuple  # covered node ids, ascending
    root: int  # node containing the first scribble pixel


@dataclass(frozen=True)
class ScribbleSet:
    k: int
    labels: tuple  # one LabelScribble per label, ordered by label id
    background_label: int | None

    def covered(self) -> dict:
        """node id -> label id over all scribbles."""
        out = {}
        for ls in self.labels:
            for node in ls.nodes:
                out[node] = ls.label
        return out

    def root_of(self, label: int) -> int:
        return self.labels[label - 1].root


def _assemble(graph: RagGraph, per_label: list, background_label: int | None) -> ScribbleSet:
    """per_label: list of (label, background, pixels, node_list in first-pixel order)."""
    k = len(per_label)
    if k < 2:
        raise ScribbleError(f"need at least 2 labels, got {k}")
    owner = {}
    entries = []
    for label, background, pixels, node_seq in per_label:
        if not node_seq:
            raise ScribbleError(f"label {label} has an empty scribble")
        for node in node_seq:
            if not 0 <= node < graph.n:
                raise ScribbleError(f"label {label} covers nonexistent node {node}")
            if owner.get(node, label) != label:
                raise ScribbleError(f"conflicting scribbles at node {node}")
            owner[node] = label
        entries.append(
            LabelScribble(label, background, tuple(pixels), tuple(sorted(set(node_seq))), node_seq[0])
        )
    return ScribbleSet(k, tuple(entries), background_label)


def parse_scribbles(path, graph: RagGraph) -> ScribbleSet:
    """Parse the scribble JSON file and map pixel coordinates onto graph nodes.

    Expected layout: {"labels": [{"id": 1, "background": false,
    "pixels": [[row, col], ...]}, ...]} with consecutive ids starting at 1 and at
    most one background flag.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ScribbleError(f"missing file: {path}") from None
    except json.JSONDecodeError as e:
        raise ScribbleError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("labels"), list):
        raise ScribbleError('top level must be {"labels": [...]}')
    raw = doc["labels"]
    ids = sorted(entry.get("id") for entry in raw)
    if ids != list(range(1, len(raw) + 1)):
        raise ScribbleError(f"label ids must be consecutive from 1, got {ids}")
    raw = sorted(raw, key=lambda e: e["id"])
    background = [e["id"] for e in raw if e.get("background", False)]
    if len(background) > 1:
        raise ScribbleError(f"more than one background label: {background}")
    per_label = []
    for entry in raw:
        label = entry["id"]
        pixels = entry.get("pixels", [])
        if not pixels:
            raise ScribbleError(f"label {label} has an empty scribble")
        nodes = []
        coords = []
        for rc in pixels:
            if len(rc) != 2:
                raise ScribbleError(f"label {label}: pixel entries must be [row, col]")
            r, c = int(rc[0]), int(rc[1])
            if not (0 <= r < graph.height and 0 <= c < graph.width):
                raise ScribbleError(f"label {label}: pixel ({r}, {c}) out of bounds")
            coords.append((r, c))
            nodes.append(int(graph.pixel_node[r * graph.width + c]))
        per_label.append((label, entry.get("background", False), coords, nodes))
    return _assemble(graph, per_label, background[0] if background else None)


def scribbles_from_nodes(graph: RagGraph, node_lists: dict, background_label: int | None = None) -> ScribbleSet:
    """Build a ScribbleSet directly from node ids: {label: [node, ...]}.

    The first node of each list becomes the root. Pixel coordinates are synthesized
    from each node's first member pixel.
    """
    labels = sorted(node_lists)
    if labels != list(range(1, len(labels) + 1)):
        raise ScribbleError(f"label ids must be consecutive from 1, got {labels}")
    if background_label is not None and background_label not in node_lists:
        raise ScribbleError(f"background label {background_label} not among labels")
    per_label = []
    for label in labels:
        nodes = [int(v) for v in node_lists[label]]
        coords = []
        for node in nodes:
            if not 0 <= node < graph.n:
                raise ScribbleError(f"label {label} covers nonexistent node {node}")
            p = int(graph.membership[node][0])
            coords.append((p // graph.width, p % graph.width))
        per_label.append((label, label == background_label, coords, nodes))
    return _assemble(graph, per_label, background_label)


@dataclass(frozen=True, eq=False)
class UnaryField:
    """Per-node, per-label data costs; shape (n, k), entries finite and >= 0."""

    c: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.c, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("unary matrix must be 2-D")
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise ValueError("unary costs must be finite and nonnegative")
        object.__setattr__(self, "c", arr)


def seed_means(graph: RagGraph, scribbles: ScribbleSet) -> np.ndarray:
    """Size-weighted mean feature of each label's covered nodes; shape (k, channels)."""
    out = np.zeros((scribbles.k, graph.channels))
    for ls in scribbles.labels:
        nodes = np.array(ls.nodes, dtype=np.int64)
        weights = graph.sigma[nodes].astype(np.float64)
        out[ls.label - 1] = (graph.features[nodes] * weights[:, None]).sum(axis=0) / weights.sum()
    return out


def unary_from_means(graph: RagGraph, means: np.ndarray) -> UnaryField:
    """Data cost c[i, l] = mean absolute per-channel distance |f_i - Y_l|, in [0, 1]."""
    means = np.asarray(means, dtype=np.float64)
    c = np.abs(graph.features[:, None, :] - means[None, :, :]).mean(axis=2)
    return UnaryField(c)


def unary_from_prob_arrays(graph: RagGraph, planes: np.ndarray, tol: float = 1e-6) -> UnaryField:
    """Cost = 1 - (size-weighted mean node probability); planes shape (k, h, w)."""
    planes = np.asarray(planes, dtype=np.float64)
    k = planes.shape[0]
    if planes.shape != (k, graph.height, graph.width):
        raise ScribbleError(
            f"probability plane shape {planes.shape[1:]} does not match "
            f"image {graph.height}x{graph.width}"
        )
    if planes.min() < -tol or planes.max() > 1 + tol:
        raise ScribbleError("probabilities outside [0, 1]")
    flat = planes.reshape(k, -1)
    c = np.empty((graph.n, k))
    for i, pix in enumerate(graph.membership):
        c[i] = 1.0 - flat[:, pix].mean(axis=1)
    return UnaryField(np.clip(c, 0.0, 1.0))


def unary_from_probmap(prefix, graph: RagGraph, k: int) -> UnaryField:
    """Load one 8-bit PGM probability map per label from {prefix}_label{l}.pgm."""
    planes = np.empty((k, graph.height, graph.width))
    for label in range(1, k + 1):
        path = f"{prefix}_label{label}.pgm"
        w, h, ch, arr = read_pnm(path)
        if ch != 1:
            raise ScribbleError(f"{path}: probability maps must be grayscale")
        if (w, h) != (graph.width, graph.height):
            raise ScribbleError(
                f"{path}: size {w}x{h} does not match image {graph.width}x{graph.height}"
            )
        planes[label - 1] = arr[:, :, 0] / 255.0
    return unary_from_prob_arrays(graph, planes)
