import io
from collections import Counter

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botgraph.graph import from_edges
from botgraph.synth import sbm_edges
from botgraph.walker import (ON_THE_FLY, PRECOMPUTED, MemoryBudgetExceeded, WalkConfig, edge_store_size,
                             generate_corpus, generate_walk, load_corpus, precompute_edge_transitions,
                             save_corpus, transition_weights)
from conftest import random_graph


def as_dict(g, nb, w):
    return {g.node_ids.label(int(x)): float(v) for x, v in zip(nb, w)}


def assert_walks_follow_edges(g, corpus):
    for walk in corpus:
        for a, b in zip(walk[:-1], walk[1:]):
            assert g.has_edge(int(a), int(b))


def test_path_fixture(path_abc):
    nb, w = transition_weights(path_abc, 0, 1, p=2, q=0.5)
    assert as_dict(path_abc, nb, w) == {"a": 0.5, "c": 2.0}


def test_triangle_pendant_fixture(triangle_pendant):
    nb, w = transition_weights(triangle_pendant, 0, 2, p=4, q=0.25)
    assert as_dict(triangle_pendant, nb, w) == {"a": 0.25, "b": 1.0, "d": 4.0}


def test_first_step_uses_raw_weights(triangle_pendant):
    nb, w = transition_weights(triangle_pendant, None, 2, p=4, q=0.25)
    assert w.tolist() == [1.0, 1.0, 1.0]


def test_requires_adjacent_prev(triangle_pendant):
    with pytest.raises(ValueError):
        transition_weights(triangle_pendant, 3, 0, 1, 1)


def test_isolated_curr_raises():
    g = from_edges([0], [1], n_nodes=3)
    with pytest.raises(ValueError):
        transition_weights(g, None, 2, 1, 1)


def _oracle_weights(g, prev, curr, p, q):
    h = nx.Graph()
    h.add_nodes_from(range(g.node_count))
    for u, v, w in zip(*g.edges()):
        h.add_edge(int(u), int(v), weight=float(w))
    dist = nx.single_source_shortest_path_length(h, prev, cutoff=2)
    out = {}
    for x in sorted(h.neighbors(curr)):
        w = h[curr][x]["weight"]
        d = dist.get(x, 2)
        out[x] = w / p if d == 0 else (w if d == 1 else w / q)
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.floats(0.1, 0.9), st.integers(0, 2**32 - 1),
       st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_three_case_rule_matches_shortest_path_oracle(n, density, seed, p, q):
    rng = np.random.default_rng(seed)
    base = random_graph(rng, n, density)
    src, dst, _ = base.edges()
    g = from_edges(src, dst, rng.uniform(0.5, 3.0, len(src)), n_nodes=n)
    for u, v in zip(src.tolist(), dst.tolist()):
        for prev, curr in ((u, v), (v, u)):
            nb, w = transition_weights(g, prev, curr, p, q)
            oracle = _oracle_weights(g, prev, curr, p, q)
            assert nb.tolist() == list(oracle)
            np.testing.assert_allclose(w, list(oracle.values()), rtol=1e-14)
            # p = q = 1 reduces to raw weights
            assert np.array_equal(transition_weights(g, prev, curr, 1.0, 1.0)[1], g.neighbor_weights(curr))


def test_isolated_start_gives_length_one_walk():
    g = from_edges([0], [1], n_nodes=3)
    walk = generate_walk(g, 2, WalkConfig(walk_length=10), np.random.default_rng(0))
    assert walk.tolist() == [2]


@pytest.mark.parametrize("p, q", [(1, 1), (0.25, 4), (4, 0.25)])
def test_two_node_path_alternates(p, q):
    g = from_edges([0], [1])
    walk = generate_walk(g, 0, WalkConfig(p=p, q=q, walk_length=4), np.random.default_rng(0))
    assert walk.tolist() == [0, 1, 0, 1]


def empirical_transitions(corpus):
    counts = {}
    for walk in corpus:
        w = walk.tolist()
        for a, b, c in zip(w, w[1:], w[2:]):
            counts.setdefault((a, b), Counter())[c] += 1
    return counts


def max_transition_error(g, corpus, p, q):
    worst = 0.0
    for (a, b), ctr in empirical_transitions(corpus).items():
        nb, w = transition_weights(g, a, b, p, q)
        total = sum(ctr.values())
        for x, prob in zip(nb.tolist(), w / w.sum()):
            worst = max(worst, abs(ctr[x] / total - prob))
    return worst


@pytest.mark.parametrize("mode", [ON_THE_FLY, PRECOMPUTED])
def test_monte_carlo_transition_law(triangle_pendant, mode):
    cfg = WalkConfig(p=0.5, q=2, walk_length=3, walks_per_node=25_000, seed=5, mode=mode)
    corpus = generate_corpus(triangle_pendant, cfg)
    assert len(corpus) == 100_000
    assert max_transition_error(triangle_pendant, corpus, 0.5, 2) < 0.01


def test_modes_agree_in_distribution(triangle_pendant):
    dists = []
    for mode in (ON_THE_FLY, PRECOMPUTED):
        corpus = generate_corpus(triangle_pendant, WalkConfig(p=4, q=0.25, walk_length=5,
                                                              walks_per_node=25_000, seed=11, mode=mode))
        ctr = Counter(tuple(w.tolist()[-3:]) for w in corpus)
        dists.append({k: v / len(corpus) for k, v in ctr.items()})
    keys = set(dists[0]) | set(dists[1])
    assert max(abs(dists[0].get(k, 0) - dists[1].get(k, 0)) for k in keys) < 0.01


def test_precomputed_tables_match_transition_weights():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 25, 0.3)
    store = precompute_edge_transitions(g, 0.5, 3.0)
    for u in range(g.node_count):
        for e in range(g.indptr[u], g.indptr[u + 1]):
            v = int(g.indices[e])
            lo, size = store.offsets[e], store.offsets[e + 1] - store.offsets[e]
            prob, alias = store.prob[lo:lo + size], store.alias[lo:lo + size]
            recon = prob.copy()
            np.add.at(recon, alias, 1.0 - prob)
            _, w = transition_weights(g, u, v, 0.5, 3.0)
            np.testing.assert_allclose(recon / size, w / w.sum(), atol=1e-12)


def test_path_has_four_edge_tables(path_abc):
    assert precompute_edge_transitions(path_abc, 1, 1).n_tables == 4


def test_star_rejected_by_budget():
    star = from_edges(np.zeros(1000, dtype=int), np.arange(1, 1001))
    assert edge_store_size(star) == 1_001_000
    with pytest.raises(MemoryBudgetExceeded):
        precompute_edge_transitions(star, 1, 1, memory_budget=100_000)
    with pytest.raises(MemoryBudgetExceeded):
        generate_corpus(star, WalkConfig(mode=PRECOMPUTED, memory_budget=100_000))


def test_corpus_cardinality_and_edges():
    g = random_graph(np.random.default_rng(1), 100, 0.08)
    cfg = WalkConfig(p=0.5, q=2, walk_length=20, walks_per_node=10, seed=3)
    corpus = generate_corpus(g, cfg)
    assert len(corpus) == 1000
    assert corpus.lengths.max() <= 20
    assert sorted(Counter(int(w[0]) for w in corpus).values()) == [10] * 100
    assert_walks_follow_edges(g, corpus)


def test_corpus_is_deterministic_and_thread_independent():
    g = random_graph(np.random.default_rng(2), 200, 0.05)
    cfg = WalkConfig(p=0.25, q=4, walk_length=30, walks_per_node=3, seed=17)
    a = generate_corpus(g, cfg)
    b = generate_corpus(g, cfg)
    c = generate_corpus(g, WalkConfig(p=0.25, q=4, walk_length=30, walks_per_node=3, seed=17, workers=2))
    assert a == b == c
    d = generate_corpus(g, WalkConfig(p=0.25, q=4, walk_length=30, walks_per_node=3, seed=18))
    assert a != d


def test_corpus_round_trip(triangle_pendant):
    corpus = generate_corpus(triangle_pendant, WalkConfig(walk_length=6, walks_per_node=2))
    buf = io.StringIO()
    save_corpus(corpus, buf, triangle_pendant.node_ids.labels)
    assert buf.getvalue().splitlines()[0].split()[0] in "abcd"
    buf.seek(0)
    assert load_corpus(buf, triangle_pendant.node_ids) == corpus


def _block_stay_fraction(g, block, cfg):
    corpus = generate_corpus(g, cfg)
    stay = total = 0
    for walk in corpus:
        b0 = block[walk[0]]
        stay += int(np.sum(block[walk[1:]] == b0))
        total += len(walk) - 1
    return stay / total


def test_inward_walks_stay_in_block_more():
    rng = np.random.default_rng(0)
    src, dst = sbm_edges(np.array([50, 50]), 0.3, 0.01, rng)
    g = from_edges(src, dst, n_nodes=100)
    block = np.repeat([0, 1], 50)
    base = _block_stay_fraction(g, block, WalkConfig(walk_length=40, walks_per_node=20, seed=1))
    local = _block_stay_fraction(g, block, WalkConfig(q=4, walk_length=40, walks_per_node=20, seed=1))
    assert local > base


@pytest.mark.parametrize("kw", [dict(p=0), dict(q=-1), dict(walk_length=0), dict(walks_per_node=0),
                                dict(mode="bogus"), dict(workers=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        WalkConfig(**kw)
