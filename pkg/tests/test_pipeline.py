import json
import os

import numpy as np
import pytest

from botgraph import cli
from botgraph import pipeline as P
from botgraph.embed import load_embeddings

SMALL = """
[synth]
n_humans = 1200
n_communities = 4
intra_p = 0.03
inter_p = 0.001
n_technical = 20
n_sophisticated = 15

[walk]
walk_length = 15
walks_per_node = 3

[embed]
dims = 8
context_size = 3
epochs = 1
total_samples = 30000
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return str(path)


def config(ini, out, **over):
    return P.load_config(ini, {"pipeline.out_dir": str(out), **over})


def test_config_sections_and_overrides(ini, tmp_path):
    cfg = config(ini, tmp_path, **{"pipeline.seed": 5, "walk.p": "0.5", "grid.p_grid": "1,2"})
    assert cfg.synth.n_humans == 1200 and cfg.synth.seed == 5
    assert cfg.walk.p == 0.5 and cfg.walk.walk_length == 15 and cfg.walk.seed == 5
    assert cfg.embed.seed == 5 and cfg.embed.dims == 8
    assert cfg.p_grid == (1.0, 2.0) and cfg.q_grid == P.DEFAULT_GRID


def test_section_seed_wins_over_global(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[pipeline]\nseed = 3\n[walk]\nseed = 11\n")
    cfg = P.load_config(str(path))
    assert cfg.walk.seed == 11 and cfg.embed.seed == 3


def test_dims_default_follows_track():
    assert P.load_config(None, {"pipeline.track": "technical"}).embed.dims == 50
    assert P.load_config(None, {"pipeline.track": "sophisticated"}).embed.dims == 100


@pytest.mark.parametrize("text, err", [
    ("[walk]\nbogus = 1\n", ValueError),
    ("[pipeline]\nmode = nope\n", ValueError),
    ("[data]\nedges = /does/not/exist\nprofiles = x\nlabels = y\n", FileNotFoundError),
    ("[data]\nedges = only-one\n", ValueError),
])
def test_config_errors(tmp_path, text, err):
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(err):
        P.load_config(str(path))


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out" / "a.txt"
    with pytest.raises(RuntimeError):
        with P.atomic_path(target) as tmp:
            with open(tmp, "w") as fh:
                fh.write("partial")
            raise RuntimeError("boom")
    assert os.listdir(tmp_path / "out") == []
    P.write_text(target, "done")
    assert target.read_text() == "done"


def test_stages_compose_through_files(ini, tmp_path):
    cfg = config(ini, tmp_path / "run")
    paths = P.cmd_synth(cfg)
    assert set(paths) == {"edges", "profiles", "labels"}
    walks = P.cmd_walk(cfg)
    emb_path = P.cmd_embed_n2v(cfg)
    assert load_embeddings(emb_path).dims == 8
    with open(walks) as fh:
        n_walks = sum(1 for _ in fh)
    assert n_walks % 3 == 0
    feat = P.cmd_features(cfg)
    assert os.path.exists(feat)
    report = P.cmd_train_eval(cfg)
    assert 0.0 <= report.roc_auc <= 1.0 and report.mode == "n2v-only"
    manifest = json.loads((tmp_path / "run" / "manifests" / "train-eval.json").read_text())
    assert set(manifest) == {"command", "config", "inputs", "artifacts", "timings"}
    assert all(len(h) == 64 for h in manifest["inputs"].values())
    # a second walk stage reuses the cached file
    mtime = os.path.getmtime(walks)
    assert P.cmd_walk(cfg) == walks and os.path.getmtime(walks) == mtime


def test_staged_command_without_inputs_fails(ini, tmp_path):
    with pytest.raises(FileNotFoundError):
        P.cmd_walk(config(ini, tmp_path / "empty"))


@pytest.mark.parametrize("mode", P.MODES)
def test_run_all_modes(ini, tmp_path, mode):
    report = P.cmd_run_all(config(ini, tmp_path / mode, **{"pipeline.mode": mode}))
    assert np.isfinite(report.roc_auc) and report.mode == mode
    assert report.train_positives + report.test_positives == 20


def test_track_excludes_other_bots(ini, tmp_path):
    report = P.cmd_run_all(config(ini, tmp_path, **{"pipeline.mode": "features-only",
                                                  "pipeline.track": "sophisticated"}))
    assert report.train_positives + report.test_positives == 15


def test_run_all_deterministic(ini, tmp_path):
    a = P.cmd_run_all(config(ini, tmp_path / "a", **{"pipeline.mode": "concat"}))
    b = P.cmd_run_all(config(ini, tmp_path / "b", **{"pipeline.mode": "concat"}))
    assert json.dumps(a.payload(), sort_keys=True) == json.dumps(b.payload(), sort_keys=True)


def test_test_nodes_do_not_inform_features(ini, tmp_path):
    cfg = config(ini, tmp_path)
    P.cmd_synth(cfg)
    run = P.Run(cfg, P.RunManifest("t", {}))
    nodes, y, tr, te = run.split()
    fit = set(run.fit_rows().tolist())
    test_rows = set(run.graph.node_ids.indices([nodes[i] for i in te]).tolist())
    assert fit.isdisjoint(test_rows) and len(fit) + len(test_rows) == run.graph.node_count


def test_grid_default_is_five_by_five(ini, tmp_path):
    cfg = config(ini, tmp_path)
    P.cmd_synth(cfg)
    result = P.cmd_grid(cfg)
    assert result.table.shape == (5, 5) and len(result.reports) == 25
    assert len({json.dumps({k: v for k, v in r.hyperparameters.items() if k not in ("p", "q")}, sort_keys=True)
                for r in result.reports}) == 1
    text = (tmp_path / "reports" / "grid_technical.txt").read_text()
    assert text.count("*") == 1
    assert len((tmp_path / "reports" / "grid_technical.jsonl").read_text().splitlines()) == 25


def test_grid_threads_match_serial(ini, tmp_path):
    over = {"grid.p_grid": "0.5,2", "grid.q_grid": "1,4"}
    serial_cfg = config(ini, tmp_path / "s", **over)
    threaded_cfg = config(ini, tmp_path / "t", **over, **{"pipeline.threads": 2})
    P.cmd_synth(serial_cfg)
    P.cmd_synth(threaded_cfg)
    serial = P.cmd_grid(serial_cfg)
    threaded = P.cmd_grid(threaded_cfg)
    assert np.array_equal(serial.table, threaded.table)


def test_imputation_and_mapping_comparisons(ini, tmp_path):
    cfg = config(ini, tmp_path)
    P.cmd_synth(cfg)
    imp = P.compare_imputation(cfg)
    assert set(imp) == {"constant:0", "median"}
    assert all(np.isfinite(r.roc_auc) for r in imp.values())
    maps = P.compare_mappings(cfg)
    assert set(maps) == {"relu", "sigmoid", "fourier"}


def test_cli_success_and_error(ini, tmp_path, capsys):
    rc = cli.main(["run-all", "--config", ini, "--out-dir", str(tmp_path), "--mode", "features-only",
                   "--seed", "2"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0 and out["seed"] == 2 and 0 <= out["roc_auc"] <= 1
    rc = cli.main(["train-eval", "--edges", str(tmp_path / "missing.txt"), "--profiles", "x", "--labels", "y"])
    err = json.loads(capsys.readouterr().err)
    assert rc == 1 and err["error"] == "FileNotFoundError" and err["command"] == "train-eval"


def test_cli_reports_line_numbers(tmp_path, capsys):
    (tmp_path / "e.txt").write_text("a b\nb\n")
    (tmp_path / "p.csv").write_text("node\na\nb\n")
    (tmp_path / "l.csv").write_text("a,human\nb,technical\n")
    rc = cli.main(["walk", "--edges", str(tmp_path / "e.txt"), "--profiles", str(tmp_path / "p.csv"),
                   "--labels", str(tmp_path / "l.csv"), "--out-dir", str(tmp_path / "o")])
    err = json.loads(capsys.readouterr().err)
    assert rc == 1 and err["line"] == 2


def test_cli_subcommands_registered():
    parser = cli.build_parser()
    for name in ("synth", "walk", "embed-n2v", "embed-a2v", "features", "train-eval", "grid", "run-all"):
        args = parser.parse_args([name, "--seed", "1", "--threads", "2", "--out-dir", "x", "--config", "c"])
        assert args.command == name and args.seed == 1 and args.threads == 2
