"""Skip-gram with negative sampling over walk corpora.

``train_node2vec`` learns a free vector per node. ``train_attri2vec`` learns a
projection ``W`` so that a node's vector is ``mapping(W @ x)`` of its
attributes ``x``; unseen nodes can then be embedded with
:func:`attri2vec_forward`.
"""
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np
from numba import njit, prange

from ._rng import next_below, next_double, stream_seed
from .alias import AliasTable, build_alias_table, draw_alias
from .graph import NodeIdMap
from .walker import WalkCorpus

RELU, SIGMOID, FOURIER = "relu", "sigmoid", "fourier"
MAPPINGS = (RELU, SIGMOID, FOURIER)
_MAPPING_CODE = {RELU: 0, SIGMOID: 1, FOURIER: 2}


@dataclass(frozen=True)
class EmbedConfig:
    """Training hyper-parameters.

    ``epochs`` drives node2vec; ``total_samples`` drives attri2vec. The learning
    rate decays linearly from ``lr_initial`` to ``lr_initial * min_lr_fraction``.
    """
    dims: int = 50
    context_size: int = 10
    negatives: int = 5
    epochs: int = 10
    total_samples: int = 1_000_000
    lr_initial: float = 0.025
    min_lr_fraction: float = 1e-4
    seed: int = 0
    workers: int = 1
    report_every: int = 100_000

    def __post_init__(self):
        if self.dims < 1 or self.context_size < 1 or self.negatives < 1:
            raise ValueError("dims, context_size and negatives must be >= 1")
        if self.epochs < 0 or self.total_samples < 0:
            raise ValueError("epochs and total_samples must be >= 0")
        if not self.lr_initial > 0:
            raise ValueError("lr_initial must be positive")
        if not 0 < self.min_lr_fraction <= 1:
            raise ValueError("min_lr_fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def learning_rate(cfg: EmbedConfig, fraction_done: float) -> float:
    return cfg.lr_initial * max(1.0 - fraction_done, cfg.min_lr_fraction)


@dataclass(eq=False)
class EmbeddingMatrix:
    vectors: np.ndarray
    node_ids: NodeIdMap
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.node_ids):
            raise ValueError("vectors must be (node_count, dims) and match node_ids")

    @property
    def dims(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]


@dataclass(eq=False)
class Attri2vecModel:
    """``W`` is (dims, n_attrs); ``b`` is only used by the Fourier mapping."""
    W: np.ndarray
    b: np.ndarray
    mapping: str
    context_vectors: np.ndarray
    history: list = field(default_factory=list)

    def embed(self, X) -> np.ndarray:
        return attri2vec_forward(self, X)


# ------------------------------------------------------------------ numerics

@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _sigmoid_and_log(f):
    """``(sigmoid(f), log sigmoid(f))`` from a single exp."""
    e = math.exp(-abs(f))
    lp = math.log1p(e)
    if f >= 0:
        return 1.0 / (1.0 + e), -lp
    return e / (1.0 + e), f - lp


@njit(cache=True, fastmath=True)
def _pair_step(U, ui, ctx, rows, lr, gu):
    """SGNS loss for centre ``U[ui]`` against ``ctx[rows[0]]`` (positive) and the rest (negatives).

    Writes dLoss/du into ``gu`` and applies ``ctx[r] -= lr * dLoss/dctx[r]``
    in place. ``U`` itself is not modified.
    """
    d = U.shape[1]
    for k in range(d):
        gu[k] = 0.0
    loss = 0.0
    for r in range(rows.shape[0]):
        row = rows[r]
        f = 0.0
        for k in range(d):
            f += U[ui, k] * ctx[row, k]
        s, ls = _sigmoid_and_log(f)
        if r == 0:
            g = s - 1.0
            loss -= ls
        else:
            # log sigmoid(-f) = log sigmoid(f) - f
            g = s
            loss -= ls - f
        step = lr * g
        for k in range(d):
            gu[k] += g * ctx[row, k]
            ctx[row, k] -= step * U[ui, k]
    return loss


@njit(cache=True)
def _map_forward(code, z, h):
    for k in range(z.shape[0]):
        if code == 0:
            h[k] = z[k] if z[k] > 0.0 else 0.0
        elif code == 1:
            h[k] = _sigmoid(z[k])
        else:
            h[k] = math.cos(z[k])


@njit(cache=True)
def _map_backward(code, z, h, gh, gz):
    for k in range(z.shape[0]):
        if code == 0:
            gz[k] = gh[k] if z[k] > 0.0 else 0.0
        elif code == 1:
            gz[k] = gh[k] * h[k] * (1.0 - h[k])
        else:
            gz[k] = -gh[k] * math.sin(z[k])


@njit(cache=True)
def _a2v_sample(W, b, code, use_bias, x, ctx, rows, lr, z, h, gh, gz):
    d, m = W.shape
    for k in range(d):
        s = b[k] if use_bias else 0.0
        for j in range(m):
            s += W[k, j] * x[j]
        z[k] = s
    _map_forward(code, z, h[0])
    loss = _pair_step(h, 0, ctx, rows, lr, gh)
    _map_backward(code, z, h[0], gh, gz)
    for k in range(d):
        g = lr * gz[k]
        if g != 0.0:
            for j in range(m):
                W[k, j] -= g * x[j]
            if use_bias:
                b[k] -= g
    return loss


# ------------------------------------------------------------------ pairs

@njit(cache=True)
def walk_pair_count(length, window):
    """Ordered (centre, context) pairs in one walk of ``length`` tokens."""
    total = 0
    for k in range(1, min(window, length - 1) + 1):
        total += 2 * (length - k)
    return total


@njit(cache=True)
def _pair_offsets(lens, window):
    out = np.zeros(lens.shape[0] + 1, dtype=np.int64)
    for w in range(lens.shape[0]):
        out[w + 1] = out[w] + walk_pair_count(lens[w], window)
    return out


@njit(cache=True)
def _fill_pairs(walks, lens, offsets, window, centers, contexts):
    for w in range(lens.shape[0]):
        L = lens[w]
        k = offsets[w]
        for i in range(L):
            for j in range(max(0, i - window), min(L, i + window + 1)):
                if j != i:
                    centers[k] = walks[w, i]
                    contexts[k] = walks[w, j]
                    k += 1


def extract_pairs(corpus: WalkCorpus, context_size: int):
    """All (centre, context) pairs with ``0 < |i - j| <= context_size``, in walk order.

    Returns two int32 arrays of equal length.
    """
    if context_size < 1:
        raise ValueError("context_size must be >= 1")
    offsets = _pair_offsets(corpus.lengths, context_size)
    centers = np.empty(offsets[-1], dtype=np.int32)
    contexts = np.empty(offsets[-1], dtype=np.int32)
    _fill_pairs(corpus.walks, corpus.lengths, offsets, context_size, centers, contexts)
    return centers, contexts


# ------------------------------------------------------------------ negatives

class NegativeSampler:
    """Draws nodes with probability proportional to ``count ** power``."""

    def __init__(self, counts, power=0.75):
        counts = np.asarray(counts, dtype=np.float64)
        if not np.any(counts > 0):
            raise ValueError("corpus has no tokens")
        self.weights = counts ** power
        self.table: AliasTable = build_alias_table(self.weights)

    @classmethod
    def from_corpus(cls, corpus: WalkCorpus, power=0.75):
        return cls(corpus.token_counts(), power)

    @property
    def probabilities(self):
        return self.weights / self.weights.sum()


# ------------------------------------------------------------------ gradients

def sgns_loss_and_grads(center, context, negatives):
    """Loss ``-log s(u.v) - sum_k log s(-u.n_k)`` and its gradients.

    Returns ``(loss, grad_center, grad_context, grad_negatives)``; the last is
    shaped like ``negatives`` (k, d).
    """
    u = np.ascontiguousarray(center, dtype=np.float64)[None, :]
    negs = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    table = np.vstack([np.asarray(context, dtype=np.float64)[None, :], negs])
    before = table.copy()
    rows = np.arange(table.shape[0], dtype=np.int64)
    gu = np.empty(u.shape[1])
    # lr = 1 makes the in-place context update equal to minus its gradient
    loss = _pair_step(u, 0, table, rows, 1.0, gu)
    gv = before - table
    return loss, gu, gv[0], gv[1:]


def attri2vec_loss_and_grads(W, b, mapping, x, context, negatives):
    """Loss of one attri2vec sample and its gradients w.r.t. ``W`` and ``b``.

    ``b`` only enters the Fourier mapping; its gradient is zero otherwise.
    """
    code = _MAPPING_CODE[mapping]
    W = np.array(W, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    W0, b0 = W.copy(), b.copy()
    x = np.ascontiguousarray(x, dtype=np.float64)
    table = np.vstack([np.asarray(context, dtype=np.float64)[None, :],
                       np.atleast_2d(np.asarray(negatives, dtype=np.float64))])
    rows = np.arange(table.shape[0], dtype=np.int64)
    d = W.shape[0]
    bufs = [np.empty(d), np.empty((1, d)), np.empty(d), np.empty(d)]
    loss = _a2v_sample(W, b, code, code == 2, x, table, rows, 1.0, *bufs)
    return loss, W0 - W, b0 - b


# ------------------------------------------------------------------ kernels

def _n2v_epoch_impl(walks, lens, offsets, epoch, total_pairs, window, n_neg, lr0, min_frac,
                    center, context, nprob, nalias, seed, n_chunks, loss_out):
    n_walks = lens.shape[0]
    d = center.shape[1]
    n_nodes = nprob.shape[0]
    per_epoch = offsets[n_walks]
    for c in prange(n_chunks):
        state = np.empty(1, dtype=np.uint64)
        state[0] = stream_seed(seed, epoch, c)
        gu = np.empty(d)
        rows = np.empty(n_neg + 1, dtype=np.int64)
        lo = c * n_walks // n_chunks
        hi = (c + 1) * n_walks // n_chunks
        acc = 0.0
        for w in range(lo, hi):
            L = lens[w]
            done = epoch * per_epoch + offsets[w]
            for i in range(L):
                a = walks[w, i]
                for j in range(max(0, i - window), min(L, i + window + 1)):
                    if j == i:
                        continue
                    lr = lr0 * max(1.0 - done / total_pairs, min_frac)
                    done += 1
                    rows[0] = walks[w, j]
                    for r in range(1, n_neg + 1):
                        rows[r] = draw_alias(nprob, nalias, 0, n_nodes, state)
                    acc += _pair_step(center, a, context, rows, lr, gu)
                    for k in range(d):
                        center[a, k] -= lr * gu[k]
        loss_out[c] = acc


_n2v_serial = njit(cache=True, nogil=True)(_n2v_epoch_impl)
_n2v_parallel = njit(cache=True, parallel=True)(_n2v_epoch_impl)


@njit(cache=True)
def _draw_pair(walks, lens, wprob, walias, window, state):
    w = draw_alias(wprob, walias, 0, wprob.shape[0], state)
    L = lens[w]
    r = next_below(state, walk_pair_count(L, window))
    k = 1
    while r >= 2 * (L - k):
        r -= 2 * (L - k)
        k += 1
    i = r >> 1
    if r & 1:
        return walks[w, i + k], walks[w, i]
    return walks[w, i], walks[w, i + k]


def _a2v_chunk_impl(walks, lens, wprob, walias, window, n_neg, X, W, b, code, use_bias, context,
                    nprob, nalias, lr0, min_frac, start, stop, total, seed, n_chunks, loss_out):
    d = W.shape[0]
    n_nodes = nprob.shape[0]
    span = stop - start
    for c in prange(n_chunks):
        state = np.empty(1, dtype=np.uint64)
        state[0] = stream_seed(seed, start, c)
        rows = np.empty(n_neg + 1, dtype=np.int64)
        z = np.empty(d)
        h = np.empty((1, d))
        gh = np.empty(d)
        gz = np.empty(d)
        lo = start + c * span // n_chunks
        hi = start + (c + 1) * span // n_chunks
        acc = 0.0
        for s in range(lo, hi):
            lr = lr0 * max(1.0 - s / total, min_frac)
            a, ctx_node = _draw_pair(walks, lens, wprob, walias, window, state)
            rows[0] = ctx_node
            for r in range(1, n_neg + 1):
                rows[r] = draw_alias(nprob, nalias, 0, n_nodes, state)
            acc += _a2v_sample(W, b, code, use_bias, X[a], context, rows, lr, z, h, gh, gz)
        loss_out[c] = acc


_a2v_serial = njit(cache=True, nogil=True)(_a2v_chunk_impl)
_a2v_parallel = njit(cache=True, parallel=True)(_a2v_chunk_impl)


def _run(kernel_serial, kernel_parallel, workers, args_fn):
    if workers <= 1:
        loss = np.zeros(1)
        kernel_serial(*args_fn(1), loss)
        return loss.sum()
    prev = numba.get_num_threads()
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    try:
        loss = np.zeros(workers)
        kernel_parallel(*args_fn(workers), loss)
    finally:
        numba.set_num_threads(prev)
    return loss.sum()


def _emit(progress, record):
    if progress is not None:
        progress(record)


def jsonl_progress(fh) -> Callable[[dict], None]:
    """Progress callback writing one JSON object per line to ``fh``."""
    def write(record):
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()
    return write


# ------------------------------------------------------------------ trainers

def _init_rng(cfg, salt):
    return np.random.default_rng([cfg.seed & 0xFFFFFFFF, salt])


def train_node2vec(corpus: WalkCorpus, cfg: EmbedConfig, node_ids: Optional[NodeIdMap] = None,
                   progress: Optional[Callable[[dict], None]] = None) -> EmbeddingMatrix:
    """Train centre/context tables over the fixed corpus for ``cfg.epochs`` passes.

    The centre table is returned. With ``cfg.workers == 1`` training is
    bit-reproducible; more workers use racy shared updates.
    """
    n = corpus.graph_node_count
    if n < 2:
        raise ValueError("corpus must cover at least 2 nodes")
    if node_ids is None:
        node_ids = NodeIdMap([str(i) for i in range(n)])
    d = cfg.dims
    rng = _init_rng(cfg, 1)
    center = rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))
    context = np.zeros((n, d))
    result = EmbeddingMatrix(center, node_ids)
    if cfg.epochs == 0:
        return result
    sampler = NegativeSampler.from_corpus(corpus)
    offsets = _pair_offsets(corpus.lengths, cfg.context_size)
    per_epoch = int(offsets[-1])
    if per_epoch == 0:
        raise ValueError("corpus yields no training pairs")
    total = float(per_epoch * cfg.epochs)
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    for epoch in range(cfg.epochs):
        loss = _run(_n2v_serial, _n2v_parallel, cfg.workers, lambda k: (
            corpus.walks, corpus.lengths, offsets, epoch, total, cfg.context_size, cfg.negatives,
            cfg.lr_initial, cfg.min_lr_fraction, center, context, sampler.table.prob,
            sampler.table.alias, seed, k))
        record = {"stage": "node2vec", "epoch": epoch + 1, "samples": per_epoch * (epoch + 1),
                  "loss": loss / per_epoch,
                  "lr": learning_rate(cfg, (epoch + 1) / cfg.epochs)}
        result.history.append(record)
        _emit(progress, record)
    return result


def init_attri2vec(n_attrs: int, n_nodes: int, mapping: str, cfg: EmbedConfig) -> Attri2vecModel:
    if mapping not in MAPPINGS:
        raise ValueError(f"mapping must be one of {MAPPINGS}")
    d = cfg.dims
    rng = _init_rng(cfg, 2)
    if mapping == FOURIER:
        W = rng.normal(0.0, 1.0 / math.sqrt(max(n_attrs, 1)), size=(d, n_attrs))
        b = rng.uniform(0.0, 2 * math.pi, size=d)
    else:
        W = rng.uniform(-0.5 / d, 0.5 / d, size=(d, n_attrs))
        b = np.zeros(d)
    return Attri2vecModel(W, b, mapping, np.zeros((n_nodes, d)))


def train_attri2vec(corpus: WalkCorpus, attrs, cfg: EmbedConfig, mapping: str = SIGMOID,
                    progress: Optional[Callable[[dict], None]] = None) -> Attri2vecModel:
    """Fit the attribute projection on ``cfg.total_samples`` pairs drawn from the corpus.

    Pairs are drawn uniformly (with replacement) from all (centre, context)
    pairs the corpus yields at ``cfg.context_size``.
    """
    X = np.ascontiguousarray(getattr(attrs, "values", attrs), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != corpus.graph_node_count:
        raise ValueError(f"attribute rows ({X.shape[0] if X.ndim == 2 else '?'}) "
                         f"must equal corpus node count ({corpus.graph_node_count})")
    if not np.all(np.isfinite(X)):
        raise ValueError("attributes must be finite")
    model = init_attri2vec(X.shape[1], X.shape[0], mapping, cfg)
    if cfg.total_samples == 0:
        return model
    counts = np.array([walk_pair_count(int(L), cfg.context_size) for L in corpus.lengths], dtype=np.float64)
    if counts.sum() == 0:
        raise ValueError("corpus yields no training pairs")
    walk_table = build_alias_table(counts)
    sampler = NegativeSampler.from_corpus(corpus)
    code = _MAPPING_CODE[mapping]
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    total = cfg.total_samples
    step = max(1, cfg.report_every)
    for start in range(0, total, step):
        stop = min(total, start + step)
        loss = _run(_a2v_serial, _a2v_parallel, cfg.workers, lambda k: (
            corpus.walks, corpus.lengths, walk_table.prob, walk_table.alias, cfg.context_size,
            cfg.negatives, X, model.W, model.b, code, code == 2, model.context_vectors,
            sampler.table.prob, sampler.table.alias, cfg.lr_initial, cfg.min_lr_fraction,
            start, stop, float(total), seed, k))
        record = {"stage": "attri2vec", "mapping": mapping, "samples": stop,
                  "loss": loss / (stop - start), "lr": learning_rate(cfg, stop / total)}
        model.history.append(record)
        _emit(progress, record)
    return model


def attri2vec_forward(model: Attri2vecModel, x) -> np.ndarray:
    """``mapping(W x)`` (``+ b`` for Fourier) for one vector or a row-stacked matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.W.shape[1]:
        raise ValueError(f"expected {model.W.shape[1]} attributes, got {x.shape[-1]}")
    z = x @ model.W.T
    if model.mapping == RELU:
        return np.maximum(z, 0.0)
    if model.mapping == SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if model.mapping == FOURIER:
        return np.cos(z + model.b)
    raise ValueError(f"unknown mapping {model.mapping!r}")


# ------------------------------------------------------------------ I/O

def save_embeddings(e: EmbeddingMatrix, sink) -> None:
    """word2vec text format: ``n d`` header, then ``label v1 .. vd`` per node."""
    owned = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if owned else sink
    try:
        fh.write(f"{len(e)} {e.dims}\n")
        for label, row in zip(e.node_ids.labels, e.vectors):
            fh.write(label + " " + " ".join(f"{v:.9g}" for v in row) + "\n")
    finally:
        if owned:
            fh.close()


def load_embeddings(source) -> EmbeddingMatrix:
    owned = isinstance(source, (str, os.PathLike))
    fh = open(source, "r", encoding="utf-8") if owned else source
    try:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("embedding header must be 'n d'")
        try:
            n, d = int(header[0]), int(header[1])
        except ValueError:
            raise ValueError(f"non-numeric embedding header {header}") from None
        if n <= 0 or d <= 0:
            raise ValueError("empty embedding")
        labels = []
        vectors = np.empty((n, d))
        rows = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if rows >= n:
                raise ValueError(f"more rows than header count {n}")
            if len(parts) != d + 1:
                raise ValueError(f"line {lineno}: expected {d} values, got {len(parts) - 1}")
            try:
                vectors[rows] = [float(v) for v in parts[1:]]
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric field") from None
            labels.append(parts[0])
            rows += 1
    finally:
        if owned:
            fh.close()
    if rows != n:
        raise ValueError(f"header declares {n} rows, found {rows}")
    return EmbeddingMatrix(vectors, NodeIdMap(labels))


def attri2vec_embedding(model: Attri2vecModel, attrs, node_ids: NodeIdMap) -> EmbeddingMatrix:
    X = getattr(attrs, "values", attrs)
    return EmbeddingMatrix(attri2vec_forward(model, X), node_ids, list(model.history))
