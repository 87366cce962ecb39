"""Raster input/output and graph construction: pixel grids and superpixel RAGs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage


class PnmError(ValueError):
    """Malformed, truncated, or unsupported PGM/PPM data."""


_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        b = data[pos]
        if b == 0x23:  # '#' comment runs to end of line
            while pos < n and data[pos] not in (0x0A, 0x0D):
                pos += 1
        elif bytes((b,)).isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PnmError("unexpected end of data while reading header")
    start = pos
    while pos < n and not bytes((data[pos],)).isspace():
        pos += 1
    return data[start:pos], pos


def read_pnm(path) -> tuple[int, int, int, np.ndarray]:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns (width, height, channels, uint8 array of shape (height, width, channels)).
    """
    p = Path(path)
    if not p.is_file():
        raise PnmError(f"missing file: {p}")
    data = p.read_bytes()
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported magic {magic!r} (binary P5/P6 only)")
    vals = []
    for name in ("width", "height", "maxval"):
        tok, pos = _next_token(data, pos)
        try:
            v = int(tok)
        except ValueError:
            raise PnmError(f"malformed header: non-numeric {name} {tok!r}") from None
        if v <= 0:
            raise PnmError(f"malformed header: {name} must be positive, got {v}")
        vals.append(v)
    width, height, maxval = vals
    if maxval != 255:
        raise PnmError(f"unsupported bit depth: maxval {maxval} (only maxval 255 is supported)")
    if pos >= len(data) or not bytes((data[pos],)).isspace():
        raise PnmError("malformed header: missing whitespace before raster data")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise PnmError("unexpected end of data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return width, height, channels, arr.copy()


def write_pnm(path, arr: np.ndarray, maxval: int = 255) -> None:
    """Write a binary PGM/PPM. 2-D or (h, w, 1) arrays become P5, (h, w, 3) P6.

    maxval 65535 writes 16-bit big-endian P5 (grayscale only), anything else
    must fit in a byte.
    """
    a = np.asarray(arr)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise PnmError(f"cannot write array of shape {np.asarray(arr).shape}")
    if a.min() < 0 or a.max() > maxval:
        raise PnmError(f"pixel values outside [0, {maxval}]")
    h, w, ch = a.shape
    if maxval == 65535:
        if ch != 1:
            raise PnmError("16-bit output is grayscale only")
        payload = a[:, :, 0].astype(">u2").tobytes()
        magic = b"P5"
    elif maxval <= 255:
        payload = a.astype(np.uint8).tobytes()
        magic = b"P5" if ch == 1 else b"P6"
    else:
        raise PnmError(f"unsupported maxval {maxval}")
    header = magic + b"\n" + f"{w} {h}\n{maxval}\n".encode()
    Path(path).write_bytes(header + payload)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Normalized raster image; data is (height, width, channels) float64 in [0, 1]."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height


def load_image(path) -> RasterImage:
    """Load a binary PGM/PPM and normalize intensities to [0, 1]."""
    w, h, ch, arr = read_pnm(path)
    return RasterImage(w, h, ch, arr.astype(np.float64) / 255.0)


@dataclass(eq=False)
class RagGraph:
    """Weighted adjacency graph over an image partition.

    Nodes are pixel groups (single pixels for grid graphs). ``sigma`` holds per-node
    pixel counts, ``gamma`` per-edge shared-boundary lengths, ``features`` the
    per-node mean intensity in [0, 1]. ``membership[i]`` lists the row-major pixel
    indices of node i; the lists must partition the image.
    """

    width: int
    height: int
    channels: int
    edges: list
    sigma: np.ndarray
    gamma: np.ndarray
    features: np.ndarray
    membership: list
    neighbors: list = field(init=False, repr=False)
    pixel_node: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.int64)
        self.gamma = np.asarray(self.gamma, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = len(self.sigma)
        if self.features.shape != (n, self.channels):
            raise ValueError("features shape mismatch")
        if len(self.membership) != n:
            raise ValueError("membership length mismatch")
        if n > 0 and self.sigma.min() < 1:
            raise ValueError("node sizes must be >= 1")
        if len(self.edges) != len(self.gamma):
            raise ValueError("gamma length mismatch")
        if len(self.gamma) and self.gamma.min() < 1:
            raise ValueError("boundary lengths must be >= 1")
        seen = set()
        self.neighbors = [[] for _ in range(n)]
        for e, (i, j) in enumerate(self.edges):
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < j < n):
                raise ValueError(f"bad edge ({i}, {j})")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            self.neighbors[i].append((j, e))
            self.neighbors[j].append((i, e))
        for lst in self.neighbors:
            lst.sort()
        npix = self.width * self.height
        node_of = np.full(npix, -1, dtype=np.int64)
        total = 0
        for i, pix in enumerate(self.membership):
            pix = np.asarray(pix, dtype=np.int64)
            if len(pix) != self.sigma[i]:
                raise ValueError(f"membership size of node {i} disagrees with sigma")
            if node_of[pix].max(initial=-1) != -1:
                raise ValueError("pixel covered by two nodes")
            node_of[pix] = i
            total += len(pix)
        if total != npix or (node_of < 0).any():
            raise ValueError("pixel memberships do not partition the image")
        self.pixel_node = node_of
        if n and len(self._bfs_from(0)) != n:
            raise ValueError("graph is not connected")

    @property
    def n(self) -> int:
        return len(self.sigma)

    def neighbor_ids(self, i: int) -> list:
        return [j for j, _ in self.neighbors[i]]

    def _bfs_from(self, start: int) -> list:
        seen = {start}
        queue = [start]
        for u in queue:
            for v, _ in self.neighbors[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return queue

    @property
    def node_map(self) -> np.ndarray:
        return self.pixel_node.reshape(self.height, self.width)


def rag_from_node_map(img: RasterImage, node_map: np.ndarray) -> RagGraph:
    """Build the region adjacency graph of a dense node-id map over img's pixels.

    Boundary lengths count 4-adjacent pixel pairs spanning two nodes; features
    are per-node mean intensities.
    """
    nm = np.asarray(node_map, dtype=np.int64).reshape(img.height, img.width)
    n = int(nm.max()) + 1
    if not np.array_equal(np.unique(nm), np.arange(n)):
        raise ValueError("node ids must be dense 0..n-1")
    flat = nm.ravel()
    sigma = np.bincount(flat, minlength=n)
    feats = np.zeros((n, img.channels))
    np.add.at(feats, flat, img.data.reshape(-1, img.channels))
    feats /= sigma[:, None]
    a = np.concatenate([nm[:, :-1].ravel(), nm[:-1, :].ravel()])
    b = np.concatenate([nm[:, 1:].ravel(), nm[1:, :].ravel()])
    cross = a != b
    lo = np.minimum(a[cross], b[cross])
    hi = np.maximum(a[cross], b[cross])
    if lo.size:
        pairs, counts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True)
        edges = [(int(i), int(j)) for i, j in pairs]
        gamma = counts
    else:
        edges, gamma = [], np.zeros(0, dtype=np.int64)
    order = np.argsort(flat, kind="stable")
    bounds = np.cumsum(sigma)
    membership = np.split(order, bounds[:-1])
    return RagGraph(img.width, img.height, img.channels, edges, sigma, gamma, feats, membership)


def build_grid_graph(img: RasterImage) -> RagGraph:
    """Pixel-grid graph: one node per pixel, 4-neighborhood edges, unit weights."""
    nm = np.arange(img.pixel_count, dtype=np.int64).reshape(img.height, img.width)
    return rag_from_node_map(img, nm)


@dataclass(frozen=True)
class SuperpixelConfig:
    """Settings for the local 5-D k-means over-segmentation."""

    target_count: int = 1000
    compactness: float = 0.2
    max_iters: int = 10

    def __post_init__(self):
        if self.target_count < 2:
            raise ValueError("target_count must be >= 2")
        if not self.compactness > 0:
            raise ValueError("compactness must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def _seed_grid(width: int, height: int, target: int) -> tuple[int, int]:
    # Pick a seed lattice whose cell count approximates target with near-square cells;
    # ties prefer more seeds along x so wide splits beat tall ones deterministically.
    best = None
    for nx in range(1, min(width, target) + 1):
        ny = min(height, max(1, round(target / nx)))
        score = (abs(nx * ny - target), abs(math.log((width * ny) / (height * nx))), -nx)
        if best is None or score < best[0]:
            best = (score, nx, ny)
    return best[1], best[2]


def _boundary_label_counts(label: np.ndarray, pix: np.ndarray, n_labels: int) -> np.ndarray:
    counts = np.zeros(n_labels, dtype=np.int64)
    for axis in (0, 1):
        inner = pix[:-1, :] if axis == 0 else pix[:, :-1]
        outer = ~pix[1:, :] if axis == 0 else ~pix[:, 1:]
        hit = inner & outer
        vals = (label[1:, :] if axis == 0 else label[:, 1:])[hit]
        counts += np.bincount(vals, minlength=n_labels)
        inner = pix[1:, :] if axis == 0 else pix[:, 1:]
        outer = ~pix[:-1, :] if axis == 0 else ~pix[:, :-1]
        hit = inner & outer
        vals = (label[:-1, :] if axis == 0 else label[:, :-1])[hit]
        counts += np.bincount(vals, minlength=n_labels)
    return counts


def _enforce_connected(label: np.ndarray) -> np.ndarray:
    """Reassign stray (non-largest) 4-connected fragments of each superpixel to the
    neighboring superpixel sharing the longest boundary."""
    label = label.copy()
    n_labels = int(label.max()) + 1
    while True:
        changed = False
        for lab_id in range(n_labels):
            mask = label == lab_id
            if not mask.any():
                continue
            comp, ncomp = ndimage.label(mask, structure=_FOUR_CONN)
            if ncomp <= 1:
                continue
            sizes = np.bincount(comp.ravel())
            sizes[0] = 0
            keep = int(np.argmax(sizes))  # largest; ties go to the earliest raster component
            for c in range(1, ncomp + 1):
                if c == keep:
                    continue
                pix = comp == c
                counts = _boundary_label_counts(label, pix, n_labels)
                target = int(np.argmax(counts))
                label[pix] = target
                changed = True
        if not changed:
            return label


def build_superpixel_rag(img: RasterImage, cfg: SuperpixelConfig) -> RagGraph:
    """Over-segment img into roughly cfg.target_count connected superpixels and
    return their region adjacency graph.

    Local k-means in (feature, x, y) space with grid seeding; spatial distances are
    scaled by compactness/step so compactness trades color fit against regular shape.
    Stray fragments are folded into the neighbor with the longest shared boundary,
    so every superpixel is 4-connected.
    """
    npix = img.pixel_count
    if cfg.target_count > npix:
        raise ValueError(f"target_count {cfg.target_count} exceeds pixel count {npix}")
    h, w = img.height, img.width
    nx, ny = _seed_grid(w, h, cfg.target_count)
    nseeds = nx * ny
    step = math.sqrt(npix / nseeds)
    cys = (np.arange(ny) + 0.5) * h / ny - 0.5
    cxs = (np.arange(nx) + 0.5) * w / nx - 0.5
    pos = np.array([(cy, cx) for cy in cys for cx in cxs])
    iy = np.clip(np.floor(pos[:, 0] + 0.5).astype(int), 0, h - 1)
    ix = np.clip(np.floor(pos[:, 1] + 0.5).astype(int), 0, w - 1)
    colors = img.data[iy, ix, :].copy()
    spatial_w = (cfg.compactness / step) ** 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    label = np.full((h, w), -1, dtype=np.int64)
    reach = int(math.ceil(2 * step))
    for _ in range(cfg.max_iters):
        dist = np.full((h, w), np.inf)
        newlab = np.full((h, w), -1, dtype=np.int64)
        for s in range(nseeds):
            py, px = pos[s]
            y0 = max(0, int(math.floor(py)) - reach)
            y1 = min(h, int(math.ceil(py)) + reach + 1)
            x0 = max(0, int(math.floor(px)) - reach)
            x1 = min(w, int(math.ceil(px)) + reach + 1)
            d = ((img.data[y0:y1, x0:x1, :] - colors[s]) ** 2).sum(axis=2)
            d += spatial_w * ((yy[y0:y1, x0:x1] - py) ** 2 + (xx[y0:y1, x0:x1] - px) ** 2)
            dw = dist[y0:y1, x0:x1]
            lw = newlab[y0:y1, x0:x1]
            upd = d < dw
            dw[upd] = d[upd]
            lw[upd] = s
        if (newlab < 0).any():  # window misses are possible on extreme aspect ratios
            miss = newlab < 0
            mdist = np.full(miss.sum(), np.inf)
            mlab = np.zeros(miss.sum(), dtype=np.int64)
            my, mx = yy[miss], xx[miss]
            mcol = img.data[miss]
            for s in range(nseeds):
                d = ((mcol - colors[s]) ** 2).sum(axis=1)
                d += spatial_w * ((my - pos[s, 0]) ** 2 + (mx - pos[s, 1]) ** 2)
                upd = d < mdist
                mdist[upd] = d[upd]
                mlab[upd] = s
            newlab[miss] = mlab
        if np.array_equal(newlab, label):
            break
        label = newlab
        flat = label.ravel()
        cnt = np.bincount(flat, minlength=nseeds)
        csum = np.zeros((nseeds, img.channels))
        np.add.at(csum, flat, img.data.reshape(-1, img.channels))
        ysum = np.bincount(flat, weights=yy.ravel(), minlength=nseeds)
        xsum = np.bincount(flat, weights=xx.ravel(), minlength=nseeds)
        live = cnt > 0
        colors[live] = csum[live] / cnt[live, None]
        pos[live, 0] = ysum[live] / cnt[live]
        pos[live, 1] = xsum[live] / cnt[live]
    label = _enforce_connected(label)
    _, dense = np.unique(label, return_inverse=True)
    return rag_from_node_map(img, dense.reshape(h, w))


def write_superpixel_map(path, graph: RagGraph) -> None:
    """Export the node-id map as 16-bit PGM for inspection."""
    if graph.n > 65536:
        raise PnmError("too many nodes for 16-bit export")
    write_pnm(path, graph.node_map.astype(np.uint32), maxval=65535)


def write_label_map(path, graph: RagGraph, labels) -> None:
    """Write a per-pixel label map as 8-bit PGM; value = label id, 0 = unlabeled."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (graph.n,):
        raise ValueError("labels must have one entry per node")
    if lab.max(initial=0) > 255 or lab.min(initial=0) < 0:
        raise ValueError("label ids must fit in a byte")
    img = lab[graph.pixel_node].reshape(graph.height, graph.width)
    write_pnm(path, img.astype(np.uint8), maxval=255)


def read_label_map(path) -> np.ndarray:
    """Read back a label map written by write_label_map; returns (h, w) int array."""
    _, _, ch, arr = read_pnm(path)
    if ch != 1:
        raise PnmError("label maps are grayscale")
    return arr[:, :, 0].astype(np.int64)
