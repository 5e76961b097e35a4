"""Weighted undirected graphs in CSR form, edge-list I/O and the largest connected component."""
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed edge-list input; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class NodeIdMap:
    """Bijection between opaque external labels and dense indices ``0..n-1``."""

    def __init__(self, labels: Sequence[str]):
        self._labels = tuple(str(x) for x in labels)
        self._index = {lab: i for i, lab in enumerate(self._labels)}
        if len(self._index) != len(self._labels):
            raise ValueError("node labels must be unique")

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, NodeIdMap) and self._labels == other._labels

    @property
    def labels(self):
        return self._labels

    def index(self, label: str) -> int:
        return self._index[label]

    def indices(self, labels: Iterable[str]) -> np.ndarray:
        return np.fromiter((self._index[x] for x in labels), dtype=np.int64)

    def label(self, i: int) -> str:
        return self._labels[i]


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted undirected graph.

    Neighbours of ``u`` are ``indices[indptr[u]:indptr[u+1]]`` sorted ascending,
    with matching ``weights``. Every edge is stored in both directions.
    """
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    node_ids: NodeIdMap
    skipped_self_loops: int = field(default=0)

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def degree(self, u=None):
        deg = np.diff(self.indptr)
        return deg if u is None else int(deg[u])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def neighbor_weights(self, u: int) -> np.ndarray:
        return self.weights[self.indptr[u]:self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < len(nb) and nb[k] == v)

    def edge_weight(self, u: int, v: int) -> float:
        nb = self.neighbors(u)
        k = int(np.searchsorted(nb, v))
        if k < len(nb) and nb[k] == v:
            return float(self.weights[self.indptr[u] + k])
        raise KeyError((u, v))

    def edges(self):
        """Return ``(src, dst, weight)`` arrays with ``src < dst`` (each edge once)."""
        src = np.repeat(np.arange(self.node_count), np.diff(self.indptr))
        keep = src < self.indices
        return src[keep], self.indices[keep].astype(np.int64), self.weights[keep]

    def to_scipy(self) -> csr_matrix:
        n = self.node_count
        return csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph on ``nodes`` (dense indices), relabelled in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        sub = self.to_scipy()[nodes][:, nodes].tocsr()
        sub.sort_indices()
        labels = [self.node_ids.label(i) for i in nodes]
        return Graph(sub.indptr.astype(np.int64), sub.indices.astype(np.int32),
                     sub.data.astype(np.float64), NodeIdMap(labels))


def from_edges(src, dst, weights=None, n_nodes=None, labels=None) -> Graph:
    """Build a graph from undirected dense-index edge arrays.

    Self-loops are dropped (and counted). Repeated edges must agree on weight.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (len(src) == len(dst) == len(w)):
        raise ValueError("edge arrays must have equal length")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("edge weights must be positive and finite")
    if n_nodes is None:
        n_nodes = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1) if labels is None else len(labels)
    loops = src == dst
    n_loops = int(loops.sum())
    src, dst, w = src[~loops], dst[~loops], w[~loops]

    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    key = lo * n_nodes + hi
    order = np.lexsort((w, key))
    key, w, lo, hi = key[order], w[order], lo[order], hi[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    dup = ~first
    if np.any(dup):
        bad = dup & (w != np.roll(w, 1))
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise ValueError(f"conflicting weights for edge ({lo[k]}, {hi[k]})")
    lo, hi, w = lo[first], hi[first], w[first]

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    vals = np.concatenate([w, w])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    if labels is None:
        labels = [str(i) for i in range(n_nodes)]
    return Graph(indptr, cols.astype(np.int32), vals, NodeIdMap(labels), n_loops)


@dataclass(frozen=True)
class EdgeListFormat:
    """Edge-list dialect. ``separator=None`` auto-detects comma vs whitespace."""
    separator: Optional[str] = None
    comment: str = "#"


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_edge_list(source, fmt: EdgeListFormat = EdgeListFormat()) -> Graph:
    """Read ``src dst [weight]`` records into an undirected :class:`Graph`.

    ``source`` may be a path, raw bytes, or a text/binary stream. Labels keep
    first-appearance order for their dense index.
    """
    fh, owned = _open_text(source)
    sep = fmt.separator
    labels = {}
    src, dst, wts = [], [], []
    seen = {}
    n_loops = 0
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(fmt.comment):
                continue
            if sep is None:
                sep = "," if "," in line else ""
            parts = [t.strip() for t in line.split(sep)] if sep else line.split()
            if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
                raise GraphFormatError(f"expected 'src dst [weight]', got {raw.rstrip()!r}", lineno)
            a, b = parts[0], parts[1]
            w = 1.0
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphFormatError(f"non-numeric weight {parts[2]!r}", lineno) from None
                if not np.isfinite(w) or w <= 0:
                    raise GraphFormatError(f"weight must be positive, got {parts[2]}", lineno)
            ia = labels.setdefault(a, len(labels))
            ib = labels.setdefault(b, len(labels))
            if ia == ib:
                n_loops += 1
                continue
            key = (ia, ib) if ia < ib else (ib, ia)
            prev = seen.get(key)
            if prev is not None:
                if prev != w:
                    raise GraphFormatError(f"conflicting weight for edge {a}-{b} ({prev} vs {w})", lineno)
                continue
            seen[key] = w
            src.append(ia)
            dst.append(ib)
            wts.append(w)
    finally:
        if owned:
            fh.close()
    if n_loops:
        logger.warning("skipped %d self-loop record(s)", n_loops)
    g = from_edges(src, dst, wts, n_nodes=len(labels), labels=list(labels))
    return Graph(g.indptr, g.indices, g.weights, g.node_ids, n_loops)


def write_edge_list(g: Graph, sink, with_weights=True):
    """Write each undirected edge once, as ``src dst [weight]`` external labels."""
    src, dst, w = g.edges()
    labels = g.node_ids.labels
    owned = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if owned else sink
    try:
        for a, b, x in zip(src, dst, w):
            if with_weights:
                fh.write(f"{labels[a]} {labels[b]} {float(x)!r}\n")
            else:
                fh.write(f"{labels[a]} {labels[b]}\n")
    finally:
        if owned:
            fh.close()


def largest_connected_component(g: Graph):
    """Return ``(lcc, original_index)``.

    ``original_index[i]`` is the dense index in ``g`` of node ``i`` of the
    returned graph (ascending). Ties in size go to the component holding
    the smallest dense index.
    """
    if g.node_count == 0:
        raise ValueError("graph is empty")
    _, comp = connected_components(g.to_scipy(), directed=False)
    sizes = np.bincount(comp)
    _, first = np.unique(comp, return_index=True)
    tied = np.flatnonzero(sizes == sizes.max())
    winner = int(tied[np.argmin(first[tied])])
    keep = np.flatnonzero(comp == winner)
    if len(keep) == g.node_count:
        return g, keep
    return g.subgraph(keep), keep
