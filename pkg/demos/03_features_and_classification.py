"""
Profiles, imputation and logistic regression
============================================

Encode synthetic profiles, fill the gaps two ways, and score the technical
bots with and without graph embeddings.
"""
import numpy as np

from botgraph.classify import LabeledDataset, fit_and_evaluate, stratified_split_indices
from botgraph.embed import EmbedConfig, EmbeddingMatrix, train_node2vec
from botgraph.features import (Constant, MedianOfObserved, as_feature_matrix, concat, encode, fit_schema, impute,
                               standardize)
from botgraph.graph import largest_connected_component
from botgraph.synth import HUMAN, TECHNICAL, SynthConfig, generate
from botgraph.walker import WalkConfig, generate_corpus

ds = generate(SynthConfig(n_humans=2000, n_communities=5, intra_p=0.03, inter_p=0.0005, seed=4))
g, _ = largest_connected_component(ds.graph)
records = {r.node: r for r in ds.profiles}

nodes = [n for n in g.node_ids.labels if ds.labels[n] in (HUMAN, TECHNICAL)]
y = np.array([ds.labels[n] == TECHNICAL for n in nodes], dtype=int)
train, test = stratified_split_indices(y, 0.3, seed=0)
print(f"{len(nodes)} labelled nodes, {y.sum()} technical; test size {len(test)}")

# the schema only sees training rows
schema = fit_schema([records[nodes[i]] for i in train], city_min_count=10)
raw = encode([records[n] for n in nodes], schema)
print(f"width {schema.width}: {len(schema.numeric_columns)} numeric, {len(schema.cities)} cities, 2 gender")
print(f"missing cells: {raw.mask.mean():.1%}")


def score(fm):
    z, stats = standardize(fm.rows([nodes[i] for i in train]))
    zt, _ = standardize(fm.rows([nodes[i] for i in test]), stats)
    report, _ = fit_and_evaluate(LabeledDataset(z.values, y[train]), LabeledDataset(zt.values, y[test]))
    return report.roc_auc


for name, strategy in [("constant 0", Constant(0.0)), ("median", MedianOfObserved())]:
    print(f"features only, {name:>10}: AUC {score(impute(raw, strategy, reference_rows=train)):.3f}")

corpus = generate_corpus(g, WalkConfig(q=4, walk_length=40, walks_per_node=10, seed=0))
emb = train_node2vec(corpus, EmbedConfig(dims=32, context_size=5, epochs=1, seed=0), g.node_ids)
emb_rows = emb.vectors[emb.node_ids.indices(nodes)]
sub = EmbeddingMatrix(emb_rows, raw.node_ids)
feats = impute(raw, MedianOfObserved(), reference_rows=train)
print(f"embeddings only:              AUC {score(as_feature_matrix(sub)):.3f}")
print(f"embeddings + features:        AUC {score(concat(sub, feats)):.3f}")
