"""
Biased second-order walks
=========================

How p and q reshape a walk: a low q pushes walks outward, a high q keeps them
near where they came from.
"""
import numpy as np

from botgraph.graph import from_edges
from botgraph.synth import sbm_edges
from botgraph.walker import WalkConfig, generate_corpus, transition_weights

# a triangle a-b-c with a pendant d hanging off c
g = from_edges([0, 1, 0, 2], [1, 2, 2, 3], labels=["a", "b", "c", "d"])

# arriving at c from a: return to a, stay next to a (b), or move away (d)
for p, q in [(1, 1), (4, 0.25), (0.25, 4)]:
    nb, w = transition_weights(g, prev=0, curr=2, p=p, q=q)
    probs = w / w.sum()
    print(f"p={p:<4} q={q:<4}", {g.node_ids.label(int(x)): round(float(pr), 3) for x, pr in zip(nb, probs)})

# two planted communities; count how often a walk is still in its start block
rng = np.random.default_rng(0)
src, dst = sbm_edges(np.array([100, 100]), 0.15, 0.01, rng)
sbm = from_edges(src, dst, n_nodes=200)
block = np.repeat([0, 1], 100)

for q in (0.25, 1.0, 4.0):
    corpus = generate_corpus(sbm, WalkConfig(q=q, walk_length=30, walks_per_node=10, seed=1))
    same = np.mean([np.mean(block[w[1:]] == block[w[0]]) for w in corpus])
    print(f"q={q:<4}  steps in start block: {same:.3f}")

# corpora are reproducible and do not depend on the worker count
a = generate_corpus(sbm, WalkConfig(p=0.5, q=2, seed=3))
b = generate_corpus(sbm, WalkConfig(p=0.5, q=2, seed=3, workers=2))
print("identical across worker counts:", a == b)
