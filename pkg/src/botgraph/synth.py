"""Labelled synthetic social graphs with two planted bot classes.

Humans form a stochastic block model. Technical bots befriend uniformly
random humans and have sparse profiles. Sophisticated bots copy part of a
human template's friend list, pad with random humans up to the template's
degree, and have human-like profile fill rates.
"""
import os
from dataclasses import dataclass, field

import numpy as np

from .features import COUNT_FIELDS, FLAG_FIELDS, ProfileRecord, write_labels, write_profiles
from .graph import Graph, from_edges, write_edge_list

HUMAN, TECHNICAL, SOPHISTICATED = "human", "technical", "sophisticated"
CLASSES = (HUMAN, TECHNICAL, SOPHISTICATED)

# per-class profile model: Bernoulli flag rates, mean of each count field,
# gender probabilities (male, female, unknown)
DEFAULT_PROFILES = {
    HUMAN: {
        "flags": {"phone_verified": 0.9, "has_nickname": 0.3, "has_website": 0.05,
                  "has_facebook": 0.2, "has_instagram": 0.35, "has_twitter": 0.1,
                  "has_photo": 0.9, "status_filled": 0.5},
        "counts": {"subscriptions": 60.0, "videos": 25.0, "audios": 120.0,
                   "days_since_last_login": 6.0},
        "age": (32.0, 11.0),
        "gender": (0.46, 0.46, 0.08),
        "friends_factor": 2.0,
    },
    TECHNICAL: {
        "flags": {"phone_verified": 0.4, "has_nickname": 0.02, "has_website": 0.01,
                  "has_facebook": 0.02, "has_instagram": 0.03, "has_twitter": 0.01,
                  "has_photo": 0.35, "status_filled": 0.05},
        "counts": {"subscriptions": 8.0, "videos": 1.0, "audios": 3.0,
                   "days_since_last_login": 40.0},
        "age": (24.0, 6.0),
        "gender": (0.3, 0.3, 0.4),
        "friends_factor": 1.2,
    },
    SOPHISTICATED: {
        "flags": {"phone_verified": 0.95, "has_nickname": 0.25, "has_website": 0.08,
                  "has_facebook": 0.25, "has_instagram": 0.45, "has_twitter": 0.12,
                  "has_photo": 0.95, "status_filled": 0.55},
        "counts": {"subscriptions": 110.0, "videos": 12.0, "audios": 60.0,
                   "days_since_last_login": 2.0},
        "age": (29.0, 7.0),
        "gender": (0.3, 0.62, 0.08),
        "friends_factor": 2.0,
    },
}


@dataclass
class SynthConfig:
    n_humans: int = 5000
    n_communities: int = 10
    intra_p: float = 0.02
    inter_p: float = 0.0004
    n_technical: int = 30
    n_sophisticated: int = 20
    technical_degree: float = 20.0
    sophisticated_mimic_fraction: float = 0.7
    n_cities: int = 40
    home_city_rate: float = 0.7
    human_fill_rate: float = 0.8
    technical_fill_rate: float = 0.25
    sophisticated_fill_rate: float = -1.0  # negative: same as humans
    seed: int = 0
    profiles: dict = field(default_factory=lambda: DEFAULT_PROFILES)

    def __post_init__(self):
        for name in ("intra_p", "inter_p", "sophisticated_mimic_fraction", "home_city_rate",
                     "human_fill_rate", "technical_fill_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sophisticated_fill_rate > 1.0:
            raise ValueError("sophisticated_fill_rate must be <= 1")
        for name in ("n_humans", "n_technical", "n_sophisticated", "n_cities"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_communities < 1 or self.n_humans < self.n_communities:
            raise ValueError("need 1 <= n_communities <= n_humans")
        if self.technical_degree < 0:
            raise ValueError("technical_degree must be >= 0")

    def fill_rate(self, cls):
        if cls == SOPHISTICATED and self.sophisticated_fill_rate < 0:
            return self.human_fill_rate
        return getattr(self, f"{cls}_fill_rate")


@dataclass(eq=False)
class SynthDataset:
    graph: Graph
    profiles: list
    labels: dict
    community: np.ndarray  # block id for humans, -1 for bots

    def class_indices(self, cls) -> np.ndarray:
        ids = self.graph.node_ids
        return np.sort(np.array([ids.index(n) for n, c in self.labels.items() if c == cls], dtype=np.int64))


def block_sizes(n, k):
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def _sample_pairs(rng, n_pairs, p):
    k = rng.binomial(n_pairs, p)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(n_pairs, size=k, replace=False))


def _triangle_row(k):
    """Row ``i`` with ``i(i-1)/2 <= k < i(i+1)/2``."""
    i = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k)) / 2.0).astype(np.int64)
    i -= i * (i - 1) // 2 > k
    i += (i + 1) * i // 2 <= k
    return i


def sbm_edges(sizes, intra_p, inter_p, rng):
    """Edge arrays of an undirected SBM with constant intra/inter probabilities."""
    starts = np.concatenate([[0], np.cumsum(sizes)])
    src, dst = [], []
    for a in range(len(sizes)):
        na = int(sizes[a])
        # within block: pair index k enumerates (i, j), j < i, row by row
        idx = _sample_pairs(rng, na * (na - 1) // 2, intra_p)
        if idx.size:
            i = _triangle_row(idx)
            j = idx - i * (i - 1) // 2
            src.append(starts[a] + i)
            dst.append(starts[a] + j)
        for b in range(a + 1, len(sizes)):
            nb = int(sizes[b])
            idx = _sample_pairs(rng, na * nb, inter_p)
            if idx.size:
                src.append(starts[a] + idx // nb)
                dst.append(starts[b] + idx % nb)
    if not src:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(src), np.concatenate(dst)


def _adjacency_lists(n, src, dst):
    nbrs = [[] for _ in range(n)]
    for a, b in zip(src.tolist(), dst.tolist()):
        nbrs[a].append(b)
        nbrs[b].append(a)
    return nbrs


def _profile(rng, node, cls, degree, home_city, cfg: SynthConfig):
    model = cfg.profiles[cls]
    fill = cfg.fill_rate(cls)
    kw = {"node": node}

    def filled():
        return rng.random() < fill

    mu, sd = model["age"]
    age = max(14.0, round(rng.normal(mu, sd)))
    if filled():
        kw["age"] = float(age)
    for name in FLAG_FIELDS + ("status_filled",):
        val = bool(rng.random() < model["flags"][name])
        if filled():
            kw[name] = val
    for name in COUNT_FIELDS:
        if name == "friends":
            val = int(round(degree * model["friends_factor"] * rng.lognormal(0.0, 0.3)))
        else:
            val = int(rng.poisson(rng.exponential(model["counts"][name])))
        if filled():
            kw[name] = val
    if cfg.n_cities > 0 and filled():
        kw["city"] = home_city if home_city is not None else f"c{rng.integers(cfg.n_cities):03d}"
    kw["gender"] = str(rng.choice(("male", "female", "unknown"), p=model["gender"]))
    return ProfileRecord(**kw)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Build the labelled graph and profiles; deterministic for a given ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    nh, nt, ns = cfg.n_humans, cfg.n_technical, cfg.n_sophisticated
    if nh == 0 or nh + nt + ns < 2:
        raise ValueError("configuration produces no usable graph")
    sizes = block_sizes(nh, cfg.n_communities)
    community = np.concatenate([np.repeat(np.arange(cfg.n_communities), sizes),
                                np.full(nt + ns, -1)])
    src, dst = sbm_edges(sizes, cfg.intra_p, cfg.inter_p, rng)
    human_nbrs = _adjacency_lists(nh, src, dst)
    human_deg = np.array([len(x) for x in human_nbrs])

    bot_src, bot_dst = [], []
    for t in range(nt):
        k = min(nh, max(1, int(rng.poisson(cfg.technical_degree))))
        for h in rng.choice(nh, size=k, replace=False):
            bot_src.append(nh + t)
            bot_dst.append(int(h))

    templates = np.full(ns, -1)
    candidates = np.flatnonzero(human_deg > 0)
    if ns and candidates.size == 0:
        raise ValueError("no human has friends to imitate; raise intra_p/inter_p")
    for s in range(ns):
        node = nh + nt + s
        tpl = int(rng.choice(candidates))
        templates[s] = tpl
        friends = np.array(sorted(human_nbrs[tpl]))
        k = int(round(cfg.sophisticated_mimic_fraction * len(friends)))
        chosen = set(rng.choice(friends, size=k, replace=False).tolist()) if k else set()
        want = len(friends)
        while len(chosen) < min(want, nh):
            chosen.add(int(rng.integers(nh)))
        for h in sorted(chosen):
            bot_src.append(node)
            bot_dst.append(h)

    all_src = np.concatenate([src, np.array(bot_src, dtype=np.int64)])
    all_dst = np.concatenate([dst, np.array(bot_dst, dtype=np.int64)])
    n = nh + nt + ns
    # opaque ids so the label cannot be read off the node name
    names = [f"n{i:06d}" for i in rng.permutation(n)]
    graph = from_edges(all_src, all_dst, n_nodes=n, labels=names)
    deg = graph.degree()

    city_of_block = rng.integers(cfg.n_cities, size=cfg.n_communities) if cfg.n_cities else None
    classes = [HUMAN] * nh + [TECHNICAL] * nt + [SOPHISTICATED] * ns
    home = [None] * n
    for i in range(nh):
        if cfg.n_cities and rng.random() < cfg.home_city_rate:
            home[i] = f"c{city_of_block[community[i]]:03d}"
    for s in range(ns):
        home[nh + nt + s] = home[templates[s]]
    profiles = [_profile(rng, names[i], classes[i], deg[i], home[i], cfg) for i in range(n)]
    labels = {names[i]: classes[i] for i in range(n)}
    return SynthDataset(graph, profiles, labels, community)


EDGES_FILE, PROFILES_FILE, LABELS_FILE = "edges.txt", "profiles.csv", "labels.csv"


def export(ds: SynthDataset, directory) -> dict:
    """Write edge list, profile CSV and labels CSV; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = {"edges": os.path.join(directory, EDGES_FILE),
             "profiles": os.path.join(directory, PROFILES_FILE),
             "labels": os.path.join(directory, LABELS_FILE)}
    write_edge_list(ds.graph, paths["edges"], with_weights=False)
    write_profiles(ds.profiles, paths["profiles"])
    write_labels(ds.labels, paths["labels"])
    return paths
