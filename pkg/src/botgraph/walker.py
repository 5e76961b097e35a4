"""Second-order (p, q) biased random walks.

Two sampling modes share one distribution:

* ``"on-the-fly"`` draws a candidate from the first-order alias table of the
  current node and accepts it with probability ``alpha / max(alpha)``, where
  ``alpha`` is ``1/p`` (return), ``1`` (neighbour of previous) or ``1/q``.
  Memory is O(|E|).
* ``"precomputed"`` stores one alias table per directed edge, i.e.
  ``sum_v deg(v)**2`` entries, and draws in O(1).
"""
import os
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from ._rng import next_double, stream_seed
from .alias import draw_alias, fill_alias
from .graph import Graph

ON_THE_FLY = "on-the-fly"
PRECOMPUTED = "precomputed"
DEFAULT_MEMORY_BUDGET = 50_000_000


class MemoryBudgetExceeded(MemoryError):
    """The per-edge transition store would not fit the requested budget."""

    def __init__(self, needed, budget):
        super().__init__(f"edge transition store needs {needed} entries, budget is {budget}")
        self.needed = needed
        self.budget = budget


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 80
    walks_per_node: int = 10
    seed: int = 0
    mode: str = ON_THE_FLY
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    workers: int = 1

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")
        if self.walk_length < 1 or self.walks_per_node < 1:
            raise ValueError("walk_length and walks_per_node must be >= 1")
        if self.mode not in (ON_THE_FLY, PRECOMPUTED):
            raise ValueError(f"unknown walk mode {self.mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(eq=False)
class WalkCorpus:
    """Walks stored as a padded int32 matrix (``-1`` past each walk's length)."""
    walks: np.ndarray
    lengths: np.ndarray
    graph_node_count: int
    config: Optional[WalkConfig] = None

    def __len__(self):
        return len(self.lengths)

    def __getitem__(self, i):
        return self.walks[i, :self.lengths[i]]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        return (isinstance(other, WalkCorpus)
                and self.graph_node_count == other.graph_node_count
                and np.array_equal(self.lengths, other.lengths)
                and np.array_equal(self.walks, other.walks))

    @classmethod
    def from_walks(cls, walks, node_count, config=None):
        walks = [np.asarray(w, dtype=np.int32) for w in walks]
        width = max((len(w) for w in walks), default=1)
        arr = np.full((len(walks), width), -1, dtype=np.int32)
        for i, w in enumerate(walks):
            arr[i, :len(w)] = w
        return cls(arr, np.array([len(w) for w in walks], dtype=np.int32), node_count, config)

    def token_counts(self) -> np.ndarray:
        valid = self.walks[self.walks >= 0]
        return np.bincount(valid, minlength=self.graph_node_count)


# ---------------------------------------------------------------- kernels

@njit(cache=True, inline="always")
def _is_neighbor(indptr, indices, u, x):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        v = indices[mid]
        if v < x:
            lo = mid + 1
        elif v > x:
            hi = mid
        else:
            return True
    return False


@njit(cache=True)
def _build_node_alias(indptr, weights, prob, alias):
    for u in range(indptr.shape[0] - 1):
        a, b = indptr[u], indptr[u + 1]
        if b > a:
            fill_alias(weights[a:b], prob[a:b], alias[a:b])


@njit(cache=True)
def _edge_slot(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _build_edge_alias(indptr, indices, weights, inv_p, inv_q, offsets, prob, alias):
    n = indptr.shape[0] - 1
    buf = np.empty(weights.shape[0])
    for u in range(n):
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            a, b = indptr[v], indptr[v + 1]
            for k in range(a, b):
                x = indices[k]
                w = weights[k]
                if x == u:
                    w *= inv_p
                elif not _is_neighbor(indptr, indices, u, x):
                    w *= inv_q
                buf[k - a] = w
            o = offsets[e]
            fill_alias(buf[:b - a], prob[o:o + b - a], alias[o:o + b - a])


@njit(cache=True)
def _walk_onfly(indptr, indices, nprob, nalias, start, length, inv_p, inv_q, state, out):
    out[0] = start
    deg = indptr[start + 1] - indptr[start]
    if length == 1 or deg == 0:
        return 1
    out[1] = indices[indptr[start] + draw_alias(nprob, nalias, indptr[start], deg, state)]
    top = max(inv_p, 1.0, inv_q)
    for t in range(2, length):
        prev = out[t - 2]
        cur = out[t - 1]
        a = indptr[cur]
        deg = indptr[cur + 1] - a
        while True:
            x = indices[a + draw_alias(nprob, nalias, a, deg, state)]
            if x == prev:
                alpha = inv_p
            elif _is_neighbor(indptr, indices, prev, x):
                alpha = 1.0
            else:
                alpha = inv_q
            if next_double(state) * top < alpha:
                break
        out[t] = x
    return length


@njit(cache=True)
def _walk_pre(indptr, indices, nprob, nalias, offsets, eprob, ealias, start, length, state, out):
    out[0] = start
    deg = indptr[start + 1] - indptr[start]
    if length == 1 or deg == 0:
        return 1
    out[1] = indices[indptr[start] + draw_alias(nprob, nalias, indptr[start], deg, state)]
    for t in range(2, length):
        prev = out[t - 2]
        cur = out[t - 1]
        e = _edge_slot(indptr, indices, prev, cur)
        deg = indptr[cur + 1] - indptr[cur]
        out[t] = indices[indptr[cur] + draw_alias(eprob, ealias, offsets[e], deg, state)]
    return length


def _corpus_impl(indptr, indices, nprob, nalias, offsets, eprob, ealias, precomputed,
                 starts, rounds, seed, inv_p, inv_q, out, lens):
    n_walks, length = out.shape
    for i in prange(n_walks):
        state = np.empty(1, dtype=np.uint64)
        state[0] = stream_seed(seed, starts[i], rounds[i])
        if precomputed:
            lens[i] = _walk_pre(indptr, indices, nprob, nalias, offsets, eprob, ealias,
                                starts[i], length, state, out[i])
        else:
            lens[i] = _walk_onfly(indptr, indices, nprob, nalias, starts[i], length,
                                  inv_p, inv_q, state, out[i])


_corpus_serial = njit(cache=True, nogil=True)(_corpus_impl)
_corpus_parallel = njit(cache=True, parallel=True)(_corpus_impl)


# ---------------------------------------------------------------- stores

@dataclass(frozen=True, eq=False)
class NodeAliasStore:
    """First-order alias tables for every node, laid out like the CSR arrays."""
    prob: np.ndarray
    alias: np.ndarray


@dataclass(frozen=True, eq=False)
class EdgeTransitionStore:
    """Alias table for each directed edge slot ``e`` (CSR position of ``u -> v``).

    The table for slot ``e`` lives at ``prob[offsets[e]:offsets[e] + deg(v)]``.
    """
    p: float
    q: float
    offsets: np.ndarray
    prob: np.ndarray
    alias: np.ndarray

    @property
    def n_tables(self):
        return len(self.offsets) - 1

    @property
    def size(self):
        return len(self.prob)


_node_alias_cache = {}


def node_alias_store(g: Graph) -> NodeAliasStore:
    key = id(g)
    hit = _node_alias_cache.get(key)
    if hit is not None and hit[0] is g:
        return hit[1]
    prob = np.ones(len(g.weights))
    alias = np.zeros(len(g.weights), dtype=np.int64)
    _build_node_alias(g.indptr, g.weights, prob, alias)
    store = NodeAliasStore(prob, alias)
    _node_alias_cache.clear()
    _node_alias_cache[key] = (g, store)
    return store


def edge_store_size(g: Graph) -> int:
    """Entries needed by :func:`precompute_edge_transitions`: ``sum_v deg(v)**2``."""
    deg = g.degree().astype(np.int64)
    return int(np.sum(deg * deg))


def precompute_edge_transitions(g: Graph, p: float, q: float,
                                memory_budget: Optional[int] = DEFAULT_MEMORY_BUDGET) -> EdgeTransitionStore:
    """Build an alias table per directed edge.

    Raises
    ------
    MemoryBudgetExceeded
        When ``sum_v deg(v)**2`` exceeds ``memory_budget`` entries.
    """
    if not (p > 0 and q > 0):
        raise ValueError("p and q must be positive")
    needed = edge_store_size(g)
    if memory_budget is not None and needed > memory_budget:
        raise MemoryBudgetExceeded(needed, memory_budget)
    deg = g.degree().astype(np.int64)
    sizes = deg[g.indices]
    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    prob = np.ones(needed)
    alias = np.zeros(needed, dtype=np.int64)
    _build_edge_alias(g.indptr, g.indices, g.weights, 1.0 / p, 1.0 / q, offsets, prob, alias)
    return EdgeTransitionStore(p, q, offsets, prob, alias)


# ---------------------------------------------------------------- public API

def transition_weights(g: Graph, prev: Optional[int], curr: int, p: float, q: float):
    """Unnormalised next-step weights out of ``curr`` having arrived from ``prev``.

    Returns ``(neighbors, weights)``. ``prev=None`` gives the first-order step.
    """
    nb = g.neighbors(curr)
    if len(nb) == 0:
        raise ValueError(f"node {curr} has no neighbors")
    w = g.neighbor_weights(curr).astype(np.float64).copy()
    if prev is None:
        return nb.astype(np.int64), w
    if not g.has_edge(prev, curr):
        raise ValueError(f"{prev} and {curr} are not adjacent")
    prev_nb = g.neighbors(prev)
    is_ret = nb == prev
    is_mid = np.isin(nb, prev_nb)
    w[is_ret] /= p
    w[~is_ret & ~is_mid] /= q
    return nb.astype(np.int64), w


def _edge_arrays(store):
    if store is None:
        z = np.zeros(1, dtype=np.int64)
        return z, np.ones(1), z, False
    return store.offsets, store.prob, store.alias, True


def _resolve_store(g, cfg, store):
    if store is not None or cfg.mode != PRECOMPUTED:
        return store
    return precompute_edge_transitions(g, cfg.p, cfg.q, cfg.memory_budget)


def generate_walk(g: Graph, start: int, cfg: WalkConfig, rng: np.random.Generator,
                  store: Optional[EdgeTransitionStore] = None) -> np.ndarray:
    """One biased walk from ``start``; truncated at isolated nodes."""
    if not 0 <= start < g.node_count:
        raise IndexError(f"start node {start} out of range")
    store = _resolve_store(g, cfg, store)
    na = node_alias_store(g)
    state = np.array([rng.integers(0, 2**63, dtype=np.uint64)], dtype=np.uint64)
    out = np.empty(cfg.walk_length, dtype=np.int32)
    if store is not None:
        n = _walk_pre(g.indptr, g.indices, na.prob, na.alias, store.offsets, store.prob,
                      store.alias, start, cfg.walk_length, state, out)
    else:
        n = _walk_onfly(g.indptr, g.indices, na.prob, na.alias, start, cfg.walk_length,
                        1.0 / cfg.p, 1.0 / cfg.q, state, out)
    return out[:n].copy()


def walk_order(node_count: int, cfg: WalkConfig):
    """Start nodes and round indices in corpus order: one shuffled pass per round."""
    starts = np.empty(node_count * cfg.walks_per_node, dtype=np.int64)
    rounds = np.repeat(np.arange(cfg.walks_per_node, dtype=np.int64), node_count)
    for r in range(cfg.walks_per_node):
        rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, r])
        starts[r * node_count:(r + 1) * node_count] = rng.permutation(node_count)
    return starts, rounds


def generate_corpus(g: Graph, cfg: WalkConfig, store: Optional[EdgeTransitionStore] = None) -> WalkCorpus:
    """``walks_per_node`` walks from every node.

    Each walk's random stream depends only on ``(seed, start, round)``, so
    the corpus is identical for any worker count.
    """
    if g.node_count == 0:
        raise ValueError("graph is empty")
    store = _resolve_store(g, cfg, store)
    na = node_alias_store(g)
    starts, rounds = walk_order(g.node_count, cfg)
    out = np.full((len(starts), cfg.walk_length), -1, dtype=np.int32)
    lens = np.zeros(len(starts), dtype=np.int32)
    offsets, eprob, ealias, pre = _edge_arrays(store)
    args = (g.indptr, g.indices, na.prob, na.alias, offsets, eprob, ealias, pre,
            starts, rounds, np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF), 1.0 / cfg.p, 1.0 / cfg.q, out, lens)
    if cfg.workers > 1:
        prev = numba.get_num_threads()
        numba.set_num_threads(min(cfg.workers, numba.config.NUMBA_NUM_THREADS))
        try:
            _corpus_parallel(*args)
        finally:
            numba.set_num_threads(prev)
    else:
        _corpus_serial(*args)
    return WalkCorpus(out, lens, g.node_count, cfg)


def save_corpus(corpus: WalkCorpus, sink, labels) -> None:
    """One walk per line, external labels separated by spaces."""
    owned = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if owned else sink
    labels = list(labels)
    try:
        for walk in corpus:
            fh.write(" ".join(labels[i] for i in walk))
            fh.write("\n")
    finally:
        if owned:
            fh.close()


def load_corpus(source, node_ids, config: Optional[WalkConfig] = None) -> WalkCorpus:
    """Inverse of :func:`save_corpus`; unknown labels raise ``KeyError``."""
    owned = isinstance(source, (str, os.PathLike))
    fh = open(source, "r", encoding="utf-8") if owned else source
    try:
        walks = [node_ids.indices(line.split()) for line in fh if line.strip()]
    finally:
        if owned:
            fh.close()
    return WalkCorpus.from_walks(walks, len(node_ids), config)


def with_pq(cfg: WalkConfig, p: float, q: float) -> WalkConfig:
    return replace(cfg, p=p, q=q)
