"""Profile records -> numeric feature matrices.

Missing values are carried as an explicit mask until :func:`impute` resolves
them, so different imputation strategies run on identical encoded inputs.
"""
import csv
import logging
import os
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence

import numpy as np

from .graph import NodeIdMap

logger = logging.getLogger(__name__)

FLAG_FIELDS = ("phone_verified", "has_nickname", "has_website", "has_facebook",
               "has_instagram", "has_twitter", "has_photo")
COUNT_FIELDS = ("subscriptions", "videos", "audios", "days_since_last_login", "friends")
NUMERIC_COLUMNS = ("age",) + FLAG_FIELDS + ("subscriptions", "videos", "audios",
                                            "days_since_last_login", "status_filled", "friends")
GENDER_COLUMNS = ("gender_male", "gender_female")
GENDERS = ("male", "female", "unknown")
BOOL_FIELDS = FLAG_FIELDS + ("status_filled",)

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


class InvalidRecordError(ValueError):
    def __init__(self, rows, reason):
        super().__init__(f"{reason}: rows {list(rows)}")
        self.rows = list(rows)


@dataclass
class ProfileRecord:
    node: str
    age: Optional[float] = None
    phone_verified: Optional[bool] = None
    has_nickname: Optional[bool] = None
    has_website: Optional[bool] = None
    has_facebook: Optional[bool] = None
    has_instagram: Optional[bool] = None
    has_twitter: Optional[bool] = None
    has_photo: Optional[bool] = None
    subscriptions: Optional[int] = None
    videos: Optional[int] = None
    audios: Optional[int] = None
    days_since_last_login: Optional[int] = None
    status_filled: Optional[bool] = None
    friends: Optional[int] = None
    city: Optional[str] = None
    gender: str = "unknown"

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")


PROFILE_FIELDS = tuple(f.name for f in fields(ProfileRecord))


@dataclass(frozen=True)
class EncodingSchema:
    numeric_columns: tuple
    cities: tuple

    @property
    def city_columns(self):
        return tuple(f"city_{c}" for c in self.cities)

    @property
    def columns(self):
        return self.numeric_columns + self.city_columns + GENDER_COLUMNS

    @property
    def width(self) -> int:
        return len(self.numeric_columns) + len(self.cities) + len(GENDER_COLUMNS)


@dataclass(eq=False)
class FeatureMatrix:
    values: np.ndarray
    mask: np.ndarray
    columns: tuple
    node_ids: NodeIdMap

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")
        if self.values.shape[1] != len(self.columns) or self.values.shape[0] != len(self.node_ids):
            raise ValueError("matrix shape does not match columns / node ids")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def is_imputed(self) -> bool:
        return not self.mask.any()

    def rows(self, labels: Sequence[str]) -> "FeatureMatrix":
        idx = self.node_ids.indices(labels)
        return FeatureMatrix(self.values[idx], self.mask[idx], self.columns, NodeIdMap(labels))


def fit_schema(records: Sequence[ProfileRecord], city_min_count: int = 10) -> EncodingSchema:
    """Columns: declared numeric fields, cities seen >= ``city_min_count`` times (sorted), gender."""
    if not records:
        raise ValueError("cannot fit a schema on zero records")
    counts = {}
    for r in records:
        if r.city:
            counts[r.city] = counts.get(r.city, 0) + 1
    cities = tuple(sorted(c for c, k in counts.items() if k >= city_min_count))
    return EncodingSchema(NUMERIC_COLUMNS, cities)


def encode(records: Sequence[ProfileRecord], schema: EncodingSchema) -> FeatureMatrix:
    n = len(records)
    n_num = len(schema.numeric_columns)
    values = np.zeros((n, schema.width))
    mask = np.zeros((n, schema.width), dtype=bool)
    city_pos = {c: n_num + k for k, c in enumerate(schema.cities)}
    g0 = n_num + len(schema.cities)
    bad = []
    for i, r in enumerate(records):
        for j, name in enumerate(schema.numeric_columns):
            v = getattr(r, name)
            if v is None:
                mask[i, j] = True
            else:
                v = float(v)
                if v < 0 or not np.isfinite(v):
                    bad.append(i)
                values[i, j] = v
        k = city_pos.get(r.city)
        if k is not None:
            values[i, k] = 1.0
        if r.gender == "male":
            values[i, g0] = 1.0
        elif r.gender == "female":
            values[i, g0 + 1] = 1.0
    if bad:
        raise InvalidRecordError(sorted(set(bad)), "negative or non-finite numeric field")
    return FeatureMatrix(values, mask, schema.columns, NodeIdMap([r.node for r in records]))


@dataclass(frozen=True)
class Constant:
    value: float = 0.0


@dataclass(frozen=True)
class MedianOfObserved:
    pass


@dataclass(frozen=True)
class MeanOfObserved:
    pass


def parse_strategy(text: str):
    """``"median"``, ``"mean"``, ``"constant"`` or ``"constant:<c>"``."""
    text = text.strip().lower()
    if text == "median":
        return MedianOfObserved()
    if text in ("mean", "average"):
        return MeanOfObserved()
    if text.startswith("constant"):
        _, _, c = text.partition(":")
        return Constant(float(c) if c else 0.0)
    raise ValueError(f"unknown imputation strategy {text!r}")


def impute(fm: FeatureMatrix, strategy=MedianOfObserved(), reference_rows=None) -> FeatureMatrix:
    """Fill masked cells; observed cells are left untouched.

    Parameters
    ----------
    fm : FeatureMatrix
    strategy : Constant, MedianOfObserved or MeanOfObserved
    reference_rows : array of int, optional
        Rows whose observed values define the median/mean. Defaults to all
        rows; pass the non-test rows to keep test data out of the statistic.

    Columns with no observed value fall back to 0 under median/mean.
    """
    values = fm.values.copy()
    ref = np.zeros(len(values), dtype=bool)
    ref[np.arange(len(values)) if reference_rows is None else np.asarray(reference_rows, dtype=np.int64)] = True
    for j in np.flatnonzero(fm.mask.any(axis=0)):
        miss = fm.mask[:, j]
        if isinstance(strategy, Constant):
            fill = strategy.value
        else:
            observed = fm.values[~miss & ref, j]
            if observed.size == 0:
                logger.warning("column %s has no observed values; filling with 0", fm.columns[j])
                fill = 0.0
            elif isinstance(strategy, MedianOfObserved):
                fill = float(np.median(observed))
            elif isinstance(strategy, MeanOfObserved):
                fill = float(observed.mean())
            else:
                raise TypeError(f"unsupported strategy {strategy!r}")
        values[miss, j] = fill
    return FeatureMatrix(values, np.zeros_like(fm.mask), fm.columns, fm.node_ids)


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray


def standardize(fm: FeatureMatrix, stats: Optional[StandardizeStats] = None):
    """Z-score columns with population std; zero-variance columns become 0.

    Pass ``stats`` from the training split to transform a test split.
    """
    if stats is None:
        stats = StandardizeStats(fm.values.mean(axis=0), fm.values.std(axis=0))
    safe = np.where(stats.std > 0, stats.std, 1.0)
    out = (fm.values - stats.mean) / safe
    out[:, stats.std == 0] = 0.0
    return FeatureMatrix(out, fm.mask.copy(), fm.columns, fm.node_ids), stats


def concat(embedding, fm: FeatureMatrix) -> FeatureMatrix:
    """``[embedding(v) | features(v)]`` per node, in ``fm``'s row order."""
    e_ids = embedding.node_ids
    missing_e = [x for x in fm.node_ids.labels if x not in e_ids]
    missing_f = [x for x in e_ids.labels if x not in fm.node_ids]
    if missing_e or missing_f:
        raise ValueError(f"node sets differ: missing from embedding {missing_e[:10]}, "
                         f"missing from features {missing_f[:10]}")
    emb = embedding.vectors[e_ids.indices(fm.node_ids.labels)]
    cols = tuple(f"emb_{k}" for k in range(emb.shape[1])) + fm.columns
    mask = np.hstack([np.zeros(emb.shape, dtype=bool), fm.mask])
    return FeatureMatrix(np.hstack([emb, fm.values]), mask, cols, fm.node_ids)


def as_feature_matrix(embedding) -> FeatureMatrix:
    v = embedding.vectors
    return FeatureMatrix(v.copy(), np.zeros(v.shape, dtype=bool),
                         tuple(f"emb_{k}" for k in range(v.shape[1])), embedding.node_ids)


# ------------------------------------------------------------------ I/O

def _parse_bool(text, name, lineno):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"line {lineno}: bad boolean {text!r} for {name}")


def _parse_number(text, name, lineno, integer):
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"line {lineno}: bad number {text!r} for {name}") from None
    return int(v) if integer and v.is_integer() else v


def _sniff_delimiter(first_line):
    return "\t" if "\t" in first_line else ","


def read_profiles(path) -> List[ProfileRecord]:
    """CSV/TSV with a header naming profile fields; empty cells are missing."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=_sniff_delimiter(first))
        if not reader.fieldnames or "node" not in reader.fieldnames:
            raise ValueError("profile file needs a 'node' column")
        unknown = set(reader.fieldnames) - set(PROFILE_FIELDS)
        if unknown:
            logger.warning("ignoring unknown profile columns %s", sorted(unknown))
        out = []
        for lineno, row in enumerate(reader, start=2):
            kw = {"node": row["node"]}
            for name in PROFILE_FIELDS[1:]:
                raw = row.get(name)
                if raw is None or raw.strip() == "":
                    continue
                if name in BOOL_FIELDS:
                    kw[name] = _parse_bool(raw, name, lineno)
                elif name in ("city", "gender"):
                    kw[name] = raw.strip()
                else:
                    kw[name] = _parse_number(raw, name, lineno, name != "age")
            out.append(ProfileRecord(**kw))
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def write_profiles(records: Sequence[ProfileRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in PROFILE_FIELDS])


LABEL_CLASSES = ("human", "technical", "sophisticated")


def read_labels(path) -> dict:
    """``node_label,class`` rows (header optional) -> ``{node: class}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "node_label":
                continue
            if len(row) != 2:
                raise ValueError(f"line {lineno}: expected 'node_label,class'")
            node, cls = row[0].strip(), row[1].strip()
            if cls not in LABEL_CLASSES:
                raise ValueError(f"line {lineno}: unknown class {cls!r}")
            out[node] = cls
    return out


def write_labels(labels: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_label", "class"])
        for node, cls in labels.items():
            w.writerow([node, cls])


def save_feature_matrix(fm: FeatureMatrix, path) -> None:
    """CSV with a ``node`` column; ``<col>_missing`` columns are added while cells are masked."""
    with_mask = not fm.is_imputed
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["node", *fm.columns]
        if with_mask:
            header += [f"{c}_missing" for c in fm.columns]
        w.writerow(header)
        for i, node in enumerate(fm.node_ids.labels):
            row = [node, *(repr(float(v)) for v in fm.values[i])]
            if with_mask:
                row += ["1" if m else "0" for m in fm.mask[i]]
            w.writerow(row)


def load_feature_matrix(path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = header[1:]
        miss = [c for c in cols if c.endswith("_missing")]
        value_cols = [c for c in cols if not c.endswith("_missing")]
        if miss and len(miss) != len(value_cols):
            raise ValueError("mask columns do not match value columns")
        nodes, vals, masks = [], [], []
        m = len(value_cols)
        for row in reader:
            nodes.append(row[0])
            vals.append([float(x) for x in row[1:1 + m]])
            masks.append([x == "1" for x in row[1 + m:]] if miss else [False] * m)
    values = np.array(vals, dtype=np.float64).reshape(len(nodes), m)
    mask = np.array(masks, dtype=bool).reshape(len(nodes), m)
    return FeatureMatrix(values, mask, tuple(value_cols), NodeIdMap(nodes))
