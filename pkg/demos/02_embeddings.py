"""
Skip-gram embeddings from walks
===============================

node2vec learns a free vector per node; attri2vec learns a map from node
attributes to vectors, so unseen nodes can be embedded from attributes alone.
"""
import numpy as np

from botgraph.embed import EmbedConfig, train_attri2vec, train_node2vec
from botgraph.graph import from_edges
from botgraph.walker import WalkConfig, generate_corpus

# two 10-cliques joined by one bridge
src, dst = [], []
for off in (0, 10):
    for i in range(10):
        for j in range(i + 1, 10):
            src.append(off + i)
            dst.append(off + j)
g = from_edges(src + [0], dst + [10], n_nodes=20)
corpus = generate_corpus(g, WalkConfig(walk_length=20, walks_per_node=10, seed=0))


def block_similarity(vectors):
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    sim = unit @ unit.T
    same = np.equal.outer(np.repeat([0, 1], 10), np.repeat([0, 1], 10))
    np.fill_diagonal(same, False)
    return sim[same].mean(), sim[~np.equal.outer(np.repeat([0, 1], 10), np.repeat([0, 1], 10))].mean()


emb = train_node2vec(corpus, EmbedConfig(dims=8, context_size=5, epochs=5, seed=1))
print("node2vec per-epoch loss:", [round(float(r["loss"]), 3) for r in emb.history])
print("node2vec cosine intra / inter: %.3f / %.3f" % block_similarity(emb.vectors))

# attribute = which clique the node is in
attrs = np.repeat(np.eye(2), 10, axis=0)
model = train_attri2vec(corpus, attrs, EmbedConfig(dims=8, context_size=5, total_samples=200_000, seed=1))
print("attri2vec cosine intra / inter: %.3f / %.3f" % block_similarity(model.embed(attrs)))

# a node never seen in training, described only by its attributes
print("unseen node embedding:", np.round(model.embed([1.0, 0.0]), 3))
