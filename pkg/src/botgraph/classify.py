"""Binary logistic regression, stratified splits, ROC AUC and grid tables."""
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata


@dataclass(eq=False)
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    nodes: tuple = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be 2-d with one row per label")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if not self.nodes:
            self.nodes = tuple(str(i) for i in range(len(self.y)))
        elif len(self.nodes) != len(self.y):
            raise ValueError("nodes and labels differ in length")

    def __len__(self):
        return len(self.y)

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.X[idx], self.y[idx], tuple(self.nodes[i] for i in idx))


def stratified_split_indices(y, test_fraction: float, seed: int):
    """Per-class ``round(n_c * test_fraction)`` test rows, clamped to keep >= 1 on each side."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < 2:
            raise ValueError(f"class {c} has fewer than 2 members")
        k = int(round(len(members) * test_fraction))
        k = min(max(k, 1), len(members) - 1)
        test.append(rng.permutation(members)[:k])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(len(y)), test)
    return train, test


def stratified_split(ds: LabeledDataset, test_fraction: float = 0.3, seed: int = 0):
    train, test = stratified_split_indices(ds.y, test_fraction, seed)
    return ds.take(train), ds.take(test)


# ------------------------------------------------------------------ logistic regression

@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    iterations: int = 0
    final_loss: float = float("nan")
    converged: bool = False
    trace: List[float] = field(default_factory=list, repr=False)


def logreg_objective(w, b, X, y01, l2_lambda):
    """``mean(log(1 + exp(-s z))) + lambda * |w|^2`` with ``s = 2y - 1``, ``z = Xw + b``."""
    s = 2.0 * np.asarray(y01, dtype=np.float64) - 1.0
    margin = s * (X @ w + b)
    return float(np.mean(np.logaddexp(0.0, -margin)) + l2_lambda * np.dot(w, w))


def logreg_gradient(w, b, X, y01, l2_lambda):
    s = 2.0 * np.asarray(y01, dtype=np.float64) - 1.0
    margin = s * (X @ w + b)
    dz = -s * expit(-margin) / len(s)
    return X.T @ dz + 2.0 * l2_lambda * w, float(dz.sum())


def train_logreg(train: LabeledDataset, l2_lambda: float = 1e-4, tol: float = 1e-6,
                 max_iter: int = 5000, seed: int = 0) -> LogRegModel:
    """Full-batch gradient descent with Armijo backtracking.

    The trial step is the Barzilai-Borwein estimate from the previous
    iteration; backtracking keeps the objective monotone. ``seed`` is unused
    (the solver is deterministic) and accepted for interface symmetry.
    """
    X, y = train.X, train.y
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if len(np.unique(y)) < 2:
        raise ValueError("training set needs both classes")
    m = X.shape[1]
    w = np.zeros(m)
    pos = y.mean()
    b = float(np.log(pos / (1 - pos)))
    f = logreg_objective(w, b, X, y, l2_lambda)
    gw, gb = logreg_gradient(w, b, X, y, l2_lambda)
    trace = [f]
    step = 1.0
    converged = False
    for _ in range(max_iter):
        gmax = max(np.abs(gw).max(initial=0.0), abs(gb))
        if gmax < tol:
            converged = True
            break
        gnorm2 = float(gw @ gw + gb * gb)
        t = step
        while True:
            w_new = w - t * gw
            b_new = b - t * gb
            f_new = logreg_objective(w_new, b_new, X, y, l2_lambda)
            if f_new <= f - 1e-4 * t * gnorm2 or t < 1e-12:
                break
            t *= 0.5
        if f_new >= f:
            # no descent step at working precision
            break
        gw_new, gb_new = logreg_gradient(w_new, b_new, X, y, l2_lambda)
        sw, sb = w_new - w, b_new - b
        yw, yb = gw_new - gw, gb_new - gb
        sy = float(sw @ yw + sb * yb)
        step = float(sw @ sw + sb * sb) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-8), 1e8)
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
        trace.append(f)
    return LogRegModel(w, b, l2_lambda, len(trace) - 1, f, converged, trace)


def predict_scores(model: LogRegModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.weights):
        raise ValueError(f"expected {len(model.weights)} columns, got {X.shape[-1]}")
    return expit(X @ model.weights + model.bias)


# ------------------------------------------------------------------ AUC

def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via average-rank summation."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ------------------------------------------------------------------ reports

@dataclass
class EvalReport:
    roc_auc: float
    n_train: int
    n_test: int
    train_positives: int
    test_positives: int
    hyperparameters: dict
    seed: int
    track: str = ""
    mode: str = ""
    timestamp: float = field(default_factory=time.time)

    def payload(self) -> dict:
        """Report content without the timestamp."""
        d = asdict(self)
        d.pop("timestamp")
        return d

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def fit_and_evaluate(train: LabeledDataset, test: LabeledDataset, l2_lambda=1e-4, tol=1e-6,
                     max_iter=5000, seed=0, hyperparameters=None, track="", mode=""):
    model = train_logreg(train, l2_lambda, tol, max_iter, seed)
    auc = roc_auc(predict_scores(model, test.X), test.y)
    hp = dict(hyperparameters or {})
    hp.update(l2_lambda=l2_lambda, tol=tol, max_iter=max_iter)
    report = EvalReport(auc, len(train), len(test), int(train.y.sum()), int(test.y.sum()),
                        hp, seed, track, mode)
    return report, model


@dataclass
class GridResult:
    """AUCs indexed ``[q_index, p_index]``: rows are q, columns p."""
    p_grid: tuple
    q_grid: tuple
    reports: list

    @property
    def table(self) -> np.ndarray:
        t = np.full((len(self.q_grid), len(self.p_grid)), np.nan)
        for r in self.reports:
            hp = r.hyperparameters
            t[self.q_grid.index(hp["q"]), self.p_grid.index(hp["p"])] = r.roc_auc
        return t

    def best(self):
        t = self.table
        qi, pi = np.unravel_index(np.nanargmax(t), t.shape)
        return self.p_grid[pi], self.q_grid[qi], float(t[qi, pi])

    def format_text(self) -> str:
        """Aligned table with the best cell starred."""
        t = self.table
        qi, pi = np.unravel_index(np.nanargmax(t), t.shape)
        head = ["q \\ p"] + [f"p = {p:g}" for p in self.p_grid]
        rows = [head]
        for i, q in enumerate(self.q_grid):
            cells = []
            for j in range(len(self.p_grid)):
                mark = "*" if (i, j) == (qi, pi) else " "
                cells.append(f"{t[i, j]:.3f}{mark}")
            rows.append([f"q = {q:g}"] + cells)
        widths = [max(len(r[k]) for r in rows) for k in range(len(head))]
        return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in rows) + "\n"

    def format_csv(self) -> str:
        t = self.table
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q\\p", *(f"{p:g}" for p in self.p_grid)])
        for i, q in enumerate(self.q_grid):
            w.writerow([f"{q:g}", *(f"{v:.6f}" for v in t[i])])
        return buf.getvalue()
