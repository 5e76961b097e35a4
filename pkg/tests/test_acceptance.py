"""One test per acceptance criterion, each at its stated tolerance.

A pass/fail line per criterion is printed and repeated in the terminal
summary. Criterion 8 needs the published dataset and is skipped without it.
"""
import json
import os
import time
from collections import Counter

import numpy as np
import pytest

from botgraph import cli
from botgraph import pipeline as P
from botgraph.classify import logreg_gradient, logreg_objective, roc_auc
from botgraph.embed import MAPPINGS, RELU, attri2vec_loss_and_grads, sgns_loss_and_grads
from botgraph.graph import from_edges
from botgraph.synth import SOPHISTICATED, TECHNICAL, sbm_edges
from botgraph.walker import WalkConfig, generate_corpus, transition_weights
from conftest import record

H = 1e-5


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def _fd(f, x):
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + H
        up = f()
        flat[i] = old - H
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * H)
    return g


# ------------------------------------------------------------------ 1

def test_criterion_1_walk_law():
    t0 = time.perf_counter()
    g = from_edges([0, 1, 0, 2], [1, 2, 2, 3], labels=list("abcd"))
    worst = {}
    for p, q in ((0.25, 2.0), (4.0, 0.25), (1.0, 1.0)):
        corpus = generate_corpus(g, WalkConfig(p=p, q=q, walk_length=3, walks_per_node=25_000, seed=1))
        assert len(corpus) == 100_000
        trans = {}
        for w in corpus.walks.tolist():
            trans.setdefault((w[0], w[1]), Counter())[w[2]] += 1
        err = 0.0
        for (a, b), ctr in trans.items():
            nb, wt = transition_weights(g, a, b, p, q)
            n = sum(ctr.values())
            err = max(err, max(abs(ctr[x] / n - pr) for x, pr in zip(nb.tolist(), wt / wt.sum())))
        worst[(p, q)] = err
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 0.01 and elapsed < 10
    record(1, ok, f"max |freq - law| = {max(worst.values()):.4f} (< 0.01), {elapsed:.1f} s (< 10 s)")
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_2_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    errs = {}
    e = 0.0
    for _ in range(100):
        d, k = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        u, v, n = rng.normal(size=d), rng.normal(size=d), rng.normal(size=(k, d))
        _, gu, gv, gn = sgns_loss_and_grads(u, v, n)
        f = lambda: sgns_loss_and_grads(u, v, n)[0]
        e = max(e, _rel(gu, _fd(f, u)), _rel(gv, _fd(f, v)), _rel(gn, _fd(f, n)))
    errs["sgns"] = e
    for mapping in MAPPINGS:
        e, done = 0.0, 0
        while done < 100:
            d, m, k = int(rng.integers(2, 7)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
            W, b = rng.normal(size=(d, m)), rng.uniform(0, 2 * np.pi, d)
            x, v, n = rng.normal(size=m), rng.normal(size=d), rng.normal(size=(k, d))
            if mapping == RELU and np.min(np.abs(W @ x)) < 1e-3:
                continue
            _, dW, db = attri2vec_loss_and_grads(W, b, mapping, x, v, n)
            f = lambda: attri2vec_loss_and_grads(W, b, mapping, x, v, n)[0]
            e = max(e, _rel(dW, _fd(f, W)), _rel(db, _fd(f, b)) if mapping == "fourier" else 0.0)
            done += 1
        errs[mapping] = e
    e = 0.0
    for _ in range(100):
        nrow, m = int(rng.integers(5, 40)), int(rng.integers(1, 6))
        X, y = rng.normal(size=(nrow, m)), rng.integers(0, 2, nrow)
        w, b, lam = rng.normal(size=m), np.array([rng.normal()]), float(rng.uniform(0, 1))
        gw, gb = logreg_gradient(w, b[0], X, y, lam)
        f = lambda: logreg_objective(w, b[0], X, y, lam)
        e = max(e, _rel(np.r_[gw, gb], np.r_[_fd(f, w), _fd(f, b)]))
    errs["logreg"] = e
    elapsed = time.perf_counter() - t0
    limits = {"sgns": 1e-5, "logreg": 1e-5, **{m: 1e-4 for m in MAPPINGS}}
    ok = all(errs[k] < limits[k] for k in limits) and elapsed < 30
    detail = ", ".join(f"{k} {errs[k]:.1e}" for k in limits)
    record(2, ok, f"max rel. error: {detail}; {elapsed:.1f} s (< 30 s)")
    assert ok


# ------------------------------------------------------------------ 3

def _pairs_auc(scores, labels):
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return (np.sum(pos > neg) + 0.5 * np.sum(pos == neg)) / (pos.size * neg.size)


def test_criterion_3_auc_oracle():
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, int(rng.integers(1, 30)), n).astype(float)
        mismatches += roc_auc(scores, labels) != _pairs_auc(scores, labels)
    fixture = roc_auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    ok = mismatches == 0 and fixture == 0.75
    record(3, ok, f"{mismatches} mismatches over 1000 tied instances; fixture AUC {fixture}")
    assert ok


# ------------------------------------------------------------------ 4

# desk-scale embedding settings shared by every seed
QUALITATIVE = """
[walk]
p = 1
q = 4
walk_length = 40
walks_per_node = 10

[embed]
dims = 32
context_size = 5
epochs = 1

[pipeline]
impute = median
"""


@pytest.fixture(scope="module")
def qualitative_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("qualitative")
    ini = root / "q.ini"
    ini.write_text(QUALITATIVE)
    rows = []
    t0 = time.perf_counter()
    for seed in range(10):
        out = root / f"seed{seed}"
        base = {"pipeline.seed": seed, "pipeline.out_dir": str(out)}
        P.cmd_synth(P.load_config(str(ini), base))
        row = {}
        for track in (TECHNICAL, SOPHISTICATED):
            cfg = P.load_config(str(ini), {**base, "pipeline.track": track})
            run = P.Run(cfg, P.RunManifest("acceptance", cfg.snapshot()))
            for mode in ("n2v-only", "features-only", "concat"):
                row[track, mode] = run.train_eval(mode).roc_auc
        rows.append(row)
    return rows, time.perf_counter() - t0


def test_criterion_4_qualitative_reproduction(qualitative_runs):
    rows, elapsed = qualitative_runs
    mean = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    t_emb, s_emb = mean[TECHNICAL, "n2v-only"], mean[SOPHISTICATED, "n2v-only"]
    s_cat = mean[SOPHISTICATED, "concat"]
    t_feat, s_feat = mean[TECHNICAL, "features-only"], mean[SOPHISTICATED, "features-only"]
    checks = {"a": t_emb >= 0.95, "b": t_emb >= s_emb, "c": s_cat >= s_emb, "d": s_feat < t_feat,
              "time": elapsed < 15 * 60}
    detail = (f"tech n2v {t_emb:.3f} (>= 0.95), soph n2v {s_emb:.3f}, soph concat {s_cat:.3f}, "
              f"features tech {t_feat:.3f} / soph {s_feat:.3f}; {elapsed:.0f} s; "
              + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    record(4, all(checks.values()), detail)
    assert all(checks.values())


# ------------------------------------------------------------------ 5, 6

SMALL = """
[synth]
n_humans = 1500
n_communities = 5
intra_p = 0.03
inter_p = 0.001
n_technical = 25
n_sophisticated = 20

[walk]
walk_length = 20
walks_per_node = 5

[embed]
dims = 16
context_size = 5
epochs = 2
"""


def test_criterion_5_imputation_harness(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(SMALL)
    cfg = P.load_config(str(ini), {"pipeline.out_dir": str(tmp_path)})
    P.cmd_synth(cfg)
    reports = P.compare_imputation(cfg)
    lines = (tmp_path / "reports" / "impute_compare.jsonl").read_text().splitlines()
    same_rows = len({(r.n_train, r.n_test, r.train_positives) for r in reports.values()}) == 1
    ok = (set(reports) == {"constant:0", "median"} and len(lines) == 2 and same_rows
          and all(0 <= r.roc_auc <= 1 for r in reports.values()))
    record(5, ok, "AUC " + ", ".join(f"{k} {r.roc_auc:.3f}" for k, r in reports.items()))
    assert ok


def test_criterion_6_run_all_determinism(tmp_path, capsys):
    ini = tmp_path / "s.ini"
    ini.write_text(SMALL)
    payloads = []
    for name in ("first", "second"):
        rc = cli.main(["run-all", "--config", str(ini), "--out-dir", str(tmp_path / name), "--mode", "concat",
                       "--seed", "13"])
        capsys.readouterr()
        assert rc == 0
        line = (tmp_path / name / "reports" / "eval.jsonl").read_text().splitlines()[-1]
        body = json.loads(line)
        body.pop("timestamp")
        payloads.append(json.dumps(body, sort_keys=True))
    ok = payloads[0] == payloads[1]
    record(6, ok, "EvalReport payloads byte-identical" if ok else "payloads differ")
    assert ok


# ------------------------------------------------------------------ 7

def test_criterion_7_walk_performance():
    rng = np.random.default_rng(0)
    sizes = np.full(50, 1000)
    src, dst = sbm_edges(sizes, 0.019, 0.00002, rng)
    g = from_edges(src, dst, n_nodes=50_000)
    cfg = WalkConfig(walk_length=80, walks_per_node=10, seed=1)
    generate_corpus(from_edges([0], [1]), cfg)  # compile outside the timing
    t0 = time.perf_counter()
    serial = generate_corpus(g, cfg)
    t_serial = time.perf_counter() - t0
    t0 = time.perf_counter()
    four = generate_corpus(g, WalkConfig(walk_length=80, walks_per_node=10, seed=1, workers=4))
    t_four = time.perf_counter() - t0
    ok = t_serial < 120 and t_four < 40 and serial == four
    record(7, ok, f"{g.node_count} nodes / {g.edge_count} edges: serial {t_serial:.1f} s (< 120), "
                  f"4 workers {t_four:.1f} s (< 40) on {os.cpu_count()} core(s), identical={serial == four}")
    assert ok


# ------------------------------------------------------------------ 8

REPLICATION_DIR = os.environ.get("BOTGRAPH_REPLICATION_DIR")


@pytest.mark.skipif(not REPLICATION_DIR, reason="published dataset not available (set BOTGRAPH_REPLICATION_DIR)")
def test_criterion_8_replication(tmp_path):
    here = os.path.dirname(__file__)
    ini = os.path.join(here, os.pardir, "demos", "replication.ini")
    over = {"data.edges": os.path.join(REPLICATION_DIR, "edges.txt"),
            "data.profiles": os.path.join(REPLICATION_DIR, "profiles.csv"),
            "data.labels": os.path.join(REPLICATION_DIR, "labels.csv"),
            "pipeline.out_dir": str(tmp_path)}
    result = P.cmd_grid(P.load_config(ini, over))
    record(8, True, "grid (informational):\n" + result.format_text())
