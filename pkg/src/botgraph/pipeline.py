"""File-staged experiment pipeline.

Every stage reads its inputs from files and writes its outputs atomically
into ``out_dir``. Walk and embedding artifacts are content-addressed by
the hyper-parameters and input hashes that produced them, so grid cells and
repeated runs reuse them.
"""
import configparser
import contextlib
import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import embed as E
from . import features as F
from .classify import EvalReport, GridResult, LabeledDataset, fit_and_evaluate, stratified_split_indices  # noqa: F401
from .graph import largest_connected_component, load_edge_list
from .synth import HUMAN, SOPHISTICATED, TECHNICAL, SynthConfig, export, generate
from .walker import WalkConfig, generate_corpus, load_corpus, save_corpus

logger = logging.getLogger(__name__)

MODES = ("features-only", "n2v-only", "a2v", "concat")
TRACKS = (TECHNICAL, SOPHISTICATED)
DEFAULT_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class PipelineConfig:
    edges: Optional[str] = None
    profiles: Optional[str] = None
    labels: Optional[str] = None
    synth: Optional[SynthConfig] = None
    track: str = TECHNICAL
    mode: str = "n2v-only"
    walk: WalkConfig = field(default_factory=WalkConfig)
    embed: E.EmbedConfig = field(default_factory=E.EmbedConfig)
    mapping: str = E.SIGMOID
    impute: str = "median"
    city_min_count: int = 10
    l2_lambda: float = 1e-4
    test_fraction: float = 0.3
    tol: float = 1e-6
    max_iter: int = 5000
    p_grid: tuple = DEFAULT_GRID
    q_grid: tuple = DEFAULT_GRID
    out_dir: str = "runs"
    seed: int = 0
    threads: int = 1

    def validate(self):
        if self.track not in TRACKS:
            raise ValueError(f"track must be one of {TRACKS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mapping not in E.MAPPINGS:
            raise ValueError(f"mapping must be one of {E.MAPPINGS}")
        F.parse_strategy(self.impute)
        given = [x is not None for x in (self.edges, self.profiles, self.labels)]
        if any(given) and not all(given):
            raise ValueError("edges, profiles and labels must be given together")
        for path in (self.edges, self.profiles, self.labels):
            if path is not None and not os.path.exists(path):
                raise FileNotFoundError(path)
        if not any(given) and self.synth is None:
            raise ValueError("provide input files or a [synth] section")
        return self

    def snapshot(self) -> dict:
        d = asdict(self)
        if self.synth is not None:
            d["synth"].pop("profiles", None)
        return d


# ------------------------------------------------------------------ config files

_SECTION_TYPES = {"walk": WalkConfig, "embed": E.EmbedConfig, "synth": SynthConfig}
_TOP_LEVEL = {f.name: f for f in dataclasses.fields(PipelineConfig)
              if f.name not in ("walk", "embed", "synth")}


def _coerce(text, default):
    if isinstance(default, bool):
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(float(text))
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    return None if str(text).strip() in ("", "none", "None") else str(text).strip()


def _field_default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read an INI file and apply ``{"section.key": value}`` overrides (flags win).

    Sections: ``[data]`` (edges, profiles, labels), ``[pipeline]``,
    ``[classify]``, ``[grid]`` for top-level keys; ``[walk]``, ``[embed]``,
    ``[synth]`` for the stage configs. The global ``seed`` is copied into
    stage configs that do not set their own.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        parser.read(path, encoding="utf-8")
    values = {s: dict(parser.items(s)) for s in parser.sections()}
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, name = key.rpartition(".")
        values.setdefault(section or "pipeline", {})[name] = val

    top = {}
    for section in ("data", "pipeline", "classify", "grid"):
        for name, raw in values.get(section, {}).items():
            if name not in _TOP_LEVEL:
                raise ValueError(f"unknown key [{section}] {name}")
            top[name] = raw if not isinstance(raw, str) else _coerce(raw, _field_default(_TOP_LEVEL[name]))
    seed = int(top.get("seed", 0))
    threads = int(top.get("threads", 1))
    stages = {}
    for section, cls in _SECTION_TYPES.items():
        if section == "synth" and section not in values:
            continue
        kw = {}
        known = {f.name: f for f in dataclasses.fields(cls)}
        for name, raw in values.get(section, {}).items():
            if name not in known:
                raise ValueError(f"unknown key [{section}] {name}")
            kw[name] = raw if not isinstance(raw, str) else _coerce(raw, _field_default(known[name]))
        kw.setdefault("seed", seed)
        if section == "walk":
            # walks are identical for any worker count; embedding stays single-worker
            # (deterministic) unless [embed] workers is set explicitly
            kw.setdefault("workers", threads)
        if section == "embed" and "dims" not in kw:
            # 50 dimensions for the technical track, 100 for the sophisticated one
            kw["dims"] = 100 if top.get("track") == SOPHISTICATED else 50
        stages[section] = cls(**kw)
    if "synth" not in stages and top.get("edges") is None:
        stages["synth"] = SynthConfig(seed=seed)
    return PipelineConfig(**top, **stages).validate()


# ------------------------------------------------------------------ file helpers

@contextlib.contextmanager
def atomic_path(path):
    """Yield a temp path next to ``path``; rename over it only on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_text(path, text):
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @contextlib.contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 4)

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifests", f"{self.command}.json")
        write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path


# ------------------------------------------------------------------ context

class Run:
    """Loaded inputs for one pipeline invocation, with lazily cached stages."""

    def __init__(self, cfg: PipelineConfig, manifest: RunManifest):
        self.cfg = cfg
        self.manifest = manifest
        self.out = cfg.out_dir
        self.paths = self._input_paths()
        for name, p in self.paths.items():
            manifest.inputs[p] = file_sha256(p)
        self.input_key = _key(*(manifest.inputs[p] for p in self.paths.values()))
        with manifest.stage("load"):
            g = load_edge_list(self.paths["edges"])
            self.graph, _ = largest_connected_component(g)
            self.labels = F.read_labels(self.paths["labels"])
            records = {r.node: r for r in F.read_profiles(self.paths["profiles"])}
        ids = self.graph.node_ids.labels
        missing = [n for n in ids if n not in records]
        self.records = [records.get(n) or F.ProfileRecord(node=n) for n in ids]
        if missing:
            logger.warning("%d graph node(s) have no profile row; treated as fully missing", len(missing))
        self._split = None
        self._raw = None

    def _input_paths(self):
        cfg = self.cfg
        if cfg.edges is not None:
            return {"edges": cfg.edges, "profiles": cfg.profiles, "labels": cfg.labels}
        data = os.path.join(self.out, "data")
        paths = {"edges": os.path.join(data, "edges.txt"),
                 "profiles": os.path.join(data, "profiles.csv"),
                 "labels": os.path.join(data, "labels.csv")}
        if not all(os.path.exists(p) for p in paths.values()):
            raise FileNotFoundError(f"no input files and no synthetic data in {data}; run 'synth' first")
        return paths

    # -------------------------------------------------------------- split

    def track_nodes(self):
        """Labelled nodes of the current track (humans + track bots) and their 0/1 labels."""
        nodes, y = [], []
        for n in self.graph.node_ids.labels:
            c = self.labels.get(n)
            if c == HUMAN or c == self.cfg.track:
                nodes.append(n)
                y.append(int(c == self.cfg.track))
        return nodes, np.array(y, dtype=np.int64)

    def split(self):
        if self._split is None:
            nodes, y = self.track_nodes()
            tr, te = stratified_split_indices(y, self.cfg.test_fraction, self.cfg.seed)
            self._split = (nodes, y, tr, te)
            path = os.path.join(self.out, "splits", f"split_{self.cfg.track}.json")
            write_text(path, json.dumps({"train": [nodes[i] for i in tr],
                                         "test": [nodes[i] for i in te]}) + "\n")
            self.manifest.artifacts["split"] = path
        return self._split

    def fit_rows(self):
        """Graph rows allowed to inform feature statistics: everything except test nodes."""
        nodes, _, _, te = self.split()
        test = {nodes[i] for i in te}
        return np.array([i for i, n in enumerate(self.graph.node_ids.labels) if n not in test])

    # -------------------------------------------------------------- stages

    def features_raw(self) -> F.FeatureMatrix:
        if self._raw is not None:
            return self._raw
        path = os.path.join(self.out, "features", f"features_raw_{self.cfg.track}.csv")
        with self.manifest.stage("features"):
            fit = self.fit_rows()
            schema = F.fit_schema([self.records[i] for i in fit], self.cfg.city_min_count)
            fm = F.encode(self.records, schema)
            with atomic_path(path) as tmp:
                F.save_feature_matrix(fm, tmp)
        self.manifest.artifacts["features_raw"] = path
        self._raw = F.load_feature_matrix(path)
        return self._raw

    def features_imputed(self, strategy=None) -> F.FeatureMatrix:
        raw = self.features_raw()
        return F.impute(raw, F.parse_strategy(strategy or self.cfg.impute), reference_rows=self.fit_rows())

    def attributes(self) -> F.FeatureMatrix:
        fm = self.features_imputed()
        fit = self.fit_rows()
        stats = F.StandardizeStats(fm.values[fit].mean(axis=0), fm.values[fit].std(axis=0))
        return F.standardize(fm, stats)[0]

    def walk_config(self, p=None, q=None) -> WalkConfig:
        w = self.cfg.walk
        return replace(w, p=w.p if p is None else p, q=w.q if q is None else q)

    def corpus(self, wcfg: WalkConfig):
        key = _key("walk", self.input_key, asdict(replace(wcfg, workers=1)))
        path = os.path.join(self.out, "walks", f"walks_p{wcfg.p:g}_q{wcfg.q:g}_{key}.txt")
        if not os.path.exists(path):
            with self.manifest.stage(f"walk_p{wcfg.p:g}_q{wcfg.q:g}"):
                corpus = generate_corpus(self.graph, wcfg)
                with atomic_path(path) as tmp:
                    save_corpus(corpus, tmp, self.graph.node_ids.labels)
        self.manifest.artifacts.setdefault("walks", []).append(path)
        return load_corpus(path, self.graph.node_ids, wcfg), key

    def n2v_embedding(self, wcfg: WalkConfig) -> E.EmbeddingMatrix:
        corpus, wkey = self.corpus(wcfg)
        key = _key("n2v", wkey, asdict(self.cfg.embed))
        path = os.path.join(self.out, "embeddings",
                            f"n2v_p{wcfg.p:g}_q{wcfg.q:g}_d{self.cfg.embed.dims}_{key}.txt")
        if not os.path.exists(path):
            with self.manifest.stage(f"embed_n2v_p{wcfg.p:g}_q{wcfg.q:g}"):
                with self._progress(f"n2v_{key}") as prog:
                    emb = E.train_node2vec(corpus, self.cfg.embed, self.graph.node_ids, progress=prog)
                with atomic_path(path) as tmp:
                    E.save_embeddings(emb, tmp)
        self.manifest.artifacts.setdefault("embeddings", []).append(path)
        return E.load_embeddings(path)

    def a2v_embedding(self) -> E.EmbeddingMatrix:
        wcfg = self.walk_config()
        corpus, wkey = self.corpus(wcfg)
        attrs = self.attributes()
        key = _key("a2v", wkey, asdict(self.cfg.embed), self.cfg.mapping, self.cfg.track,
                   self.cfg.impute, self.cfg.city_min_count, self.cfg.seed, self.cfg.test_fraction)
        path = os.path.join(self.out, "embeddings", f"a2v_{self.cfg.mapping}_d{self.cfg.embed.dims}_{key}.txt")
        if not os.path.exists(path):
            with self.manifest.stage(f"embed_a2v_{self.cfg.mapping}"):
                with self._progress(f"a2v_{key}") as prog:
                    model = E.train_attri2vec(corpus, attrs, self.cfg.embed, self.cfg.mapping, progress=prog)
                emb = E.attri2vec_embedding(model, attrs, self.graph.node_ids)
                with atomic_path(path) as tmp:
                    E.save_embeddings(emb, tmp)
        self.manifest.artifacts.setdefault("embeddings", []).append(path)
        return E.load_embeddings(path)

    @contextlib.contextmanager
    def _progress(self, name):
        path = os.path.join(self.out, "progress", f"{name}.jsonl")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            yield E.jsonl_progress(fh)

    # -------------------------------------------------------------- classification

    def design_matrix(self, mode, wcfg=None, impute=None) -> F.FeatureMatrix:
        if mode == "features-only":
            return self.features_imputed(impute)
        if mode == "n2v-only":
            return F.as_feature_matrix(self.n2v_embedding(wcfg or self.walk_config()))
        if mode == "a2v":
            return F.as_feature_matrix(self.a2v_embedding())
        if mode == "concat":
            return F.concat(self.n2v_embedding(wcfg or self.walk_config()), self.features_imputed(impute))
        raise ValueError(f"unknown mode {mode!r}")

    def evaluate(self, fm: F.FeatureMatrix, hyper: dict, mode: str) -> EvalReport:
        nodes, y, tr, te = self.split()
        X = fm.rows(nodes).values
        ds_train = LabeledDataset(X[tr], y[tr], tuple(nodes[i] for i in tr))
        stats = F.StandardizeStats(ds_train.X.mean(axis=0), ds_train.X.std(axis=0))
        safe = np.where(stats.std > 0, stats.std, 1.0)
        Z = np.where(stats.std > 0, (X - stats.mean) / safe, 0.0)
        train = LabeledDataset(Z[tr], y[tr], ds_train.nodes)
        test = LabeledDataset(Z[te], y[te], tuple(nodes[i] for i in te))
        report, _ = fit_and_evaluate(train, test, self.cfg.l2_lambda, self.cfg.tol, self.cfg.max_iter,
                                     self.cfg.seed, hyper, self.cfg.track, mode)
        return report

    def hyperparameters(self, mode, wcfg=None, impute=None) -> dict:
        hp = {"test_fraction": self.cfg.test_fraction, "width": None}
        if mode in ("features-only", "concat"):
            hp.update(impute=impute or self.cfg.impute, city_min_count=self.cfg.city_min_count)
        if mode in ("n2v-only", "concat", "a2v"):
            w = wcfg or self.walk_config()
            e = self.cfg.embed
            hp.update(p=w.p, q=w.q, walk_length=w.walk_length, walks_per_node=w.walks_per_node,
                      dims=e.dims, context_size=e.context_size, negatives=e.negatives,
                      lr_initial=e.lr_initial)
            if mode == "a2v":
                hp.update(mapping=self.cfg.mapping, total_samples=e.total_samples)
            else:
                hp.update(epochs=e.epochs)
        return hp

    def train_eval(self, mode=None, wcfg=None, impute=None) -> EvalReport:
        mode = mode or self.cfg.mode
        fm = self.design_matrix(mode, wcfg, impute)
        hp = self.hyperparameters(mode, wcfg, impute)
        hp["width"] = fm.width
        with self.manifest.stage(f"classify_{mode}"):
            return self.evaluate(fm, hp, mode)


# ------------------------------------------------------------------ commands

def _begin(command, cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return RunManifest(command, cfg.snapshot())


def _append_reports(cfg, reports, name="eval.jsonl"):
    path = os.path.join(cfg.out_dir, "reports", name)
    previous = ""
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            previous = fh.read()
    write_text(path, previous + "".join(r.to_json() + "\n" for r in reports))
    return path


def cmd_synth(cfg: PipelineConfig) -> dict:
    if cfg.synth is None:
        raise ValueError("no [synth] configuration given")
    m = _begin("synth", cfg)
    with m.stage("generate"):
        ds = generate(cfg.synth)
    directory = os.path.join(cfg.out_dir, "data")
    with m.stage("export"):
        tmpdir = tempfile.mkdtemp(prefix=".tmp-synth-", dir=cfg.out_dir)
        try:
            paths = export(ds, tmpdir)
            os.makedirs(directory, exist_ok=True)
            final = {}
            for k, p in paths.items():
                dest = os.path.join(directory, os.path.basename(p))
                os.replace(p, dest)
                final[k] = dest
        finally:
            for leftover in os.listdir(tmpdir):
                os.remove(os.path.join(tmpdir, leftover))
            os.rmdir(tmpdir)
    m.artifacts.update(final)
    m.write(cfg.out_dir)
    return final


def cmd_walk(cfg: PipelineConfig) -> str:
    m = _begin("walk", cfg)
    run = Run(cfg, m)
    run.corpus(run.walk_config())
    m.write(cfg.out_dir)
    return m.artifacts["walks"][-1]


def cmd_embed_n2v(cfg: PipelineConfig) -> str:
    m = _begin("embed-n2v", cfg)
    run = Run(cfg, m)
    run.n2v_embedding(run.walk_config())
    m.write(cfg.out_dir)
    return m.artifacts["embeddings"][-1]


def cmd_embed_a2v(cfg: PipelineConfig) -> str:
    m = _begin("embed-a2v", cfg)
    run = Run(cfg, m)
    run.a2v_embedding()
    m.write(cfg.out_dir)
    return m.artifacts["embeddings"][-1]


def cmd_features(cfg: PipelineConfig) -> str:
    m = _begin("features", cfg)
    run = Run(cfg, m)
    run.features_raw()
    m.write(cfg.out_dir)
    return m.artifacts["features_raw"]


def cmd_train_eval(cfg: PipelineConfig) -> EvalReport:
    m = _begin("train-eval", cfg)
    run = Run(cfg, m)
    report = run.train_eval()
    m.artifacts["report"] = _append_reports(cfg, [report])
    m.write(cfg.out_dir)
    return report


def grid_search(run: Run, p_grid, q_grid, mode="n2v-only", threads=1) -> GridResult:
    """One report per (p, q) cell, sharing the split, features and seeds."""
    if mode not in ("n2v-only", "concat"):
        raise ValueError("grid search needs a node2vec mode")
    cells = [(p, q) for q in q_grid for p in p_grid]
    run.split()
    if mode == "concat":
        run.features_raw()

    def one(cell):
        wcfg = run.walk_config(*cell)
        if threads > 1:
            # cells already run concurrently; keep the total under the thread cap
            wcfg = replace(wcfg, workers=1)
        return run.train_eval(mode, wcfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, cells))
    else:
        reports = [one(c) for c in cells]
    return GridResult(tuple(p_grid), tuple(q_grid), reports)


def cmd_grid(cfg: PipelineConfig) -> GridResult:
    m = _begin("grid", cfg)
    run = Run(cfg, m)
    mode = cfg.mode if cfg.mode in ("n2v-only", "concat") else "n2v-only"
    result = grid_search(run, cfg.p_grid, cfg.q_grid, mode, cfg.threads)
    base = os.path.join(cfg.out_dir, "reports", f"grid_{cfg.track}")
    write_text(base + ".txt", result.format_text())
    write_text(base + ".csv", result.format_csv())
    write_text(base + ".jsonl", "".join(r.to_json() + "\n" for r in result.reports))
    m.artifacts.update(grid_text=base + ".txt", grid_csv=base + ".csv", grid_jsonl=base + ".jsonl")
    m.write(cfg.out_dir)
    return result


def compare_imputation(cfg: PipelineConfig, strategies=("constant:0", "median")) -> dict:
    """Features-only AUC for each imputation strategy on identical encoded inputs."""
    m = _begin("impute-compare", cfg)
    run = Run(cfg, m)
    reports = {s: run.train_eval("features-only", impute=s) for s in strategies}
    m.artifacts["report"] = _append_reports(cfg, list(reports.values()), "impute_compare.jsonl")
    m.write(cfg.out_dir)
    return reports


def compare_mappings(cfg: PipelineConfig, mappings=E.MAPPINGS) -> dict:
    """attri2vec AUC for each mapping; walks, split and attributes are shared."""
    m = _begin("mapping-compare", cfg)
    reports = {}
    for mapping in mappings:
        run = Run(replace(cfg, mapping=mapping), m)
        reports[mapping] = run.train_eval("a2v")
    m.artifacts["report"] = _append_reports(cfg, list(reports.values()), "mapping_compare.jsonl")
    m.write(cfg.out_dir)
    return reports


def cmd_run_all(cfg: PipelineConfig) -> EvalReport:
    """synth (when no input files are configured) -> walk -> embed -> features -> train-eval."""
    if cfg.edges is None:
        cmd_synth(cfg)
    if cfg.mode in ("n2v-only", "concat"):
        cmd_walk(cfg)
        cmd_embed_n2v(cfg)
    elif cfg.mode == "a2v":
        cmd_walk(cfg)
        cmd_embed_a2v(cfg)
    cmd_features(cfg)
    return cmd_train_eval(cfg)
