"""Tabular attribute encoding and intra-batch similarity.

Records are plain mappings from attribute name to value. Continuous values
are z-scored with statistics fitted on training data; categorical values are
bipolar encoded. Similarities are always computed within a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import (
    ConstantAttribute,
    InsufficientData,
    LambdaOutOfRange,
    NonFiniteValue,
    ShapeMismatch,
    UnknownCategory,
    UnknownShape,
)

EPS = 1e-12

Record = Mapping[str, object]


@dataclass(frozen=True)
class AttributeSchema:
    continuous_names: list[str]
    categorical_specs: list[tuple[str, tuple[str, ...]]]
    continuous_stats: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.continuous_stats) != len(self.continuous_names):
            raise ShapeMismatch("one (mean, std) pair is needed per continuous attribute")
        for name, (_, std) in zip(self.continuous_names, self.continuous_stats):
            if not std > 0:
                raise ConstantAttribute(f"attribute {name!r} has stddev {std}")
        for name, cats in self.categorical_specs:
            if len(cats) == 0:
                raise UnknownCategory(f"attribute {name!r} has an empty vocabulary")
            if len(set(cats)) != len(cats):
                raise UnknownCategory(f"attribute {name!r} has duplicate categories")

    @property
    def categorical_names(self) -> list[str]:
        return [name for name, _ in self.categorical_specs]

    @property
    def n_continuous(self) -> int:
        return len(self.continuous_names)

    @property
    def n_encoded_categorical(self) -> int:
        return sum(_encoded_width(cats) for _, cats in self.categorical_specs)

    def without(self, names: Iterable[str]) -> "AttributeSchema":
        """Copy of the schema with the given attributes dropped."""
        drop = set(names)
        unknown = drop - set(self.continuous_names) - set(self.categorical_names)
        if unknown:
            raise UnknownShape(f"unknown attributes: {sorted(unknown)}")
        keep = [i for i, n in enumerate(self.continuous_names) if n not in drop]
        return AttributeSchema(
            continuous_names=[self.continuous_names[i] for i in keep],
            categorical_specs=[s for s in self.categorical_specs if s[0] not in drop],
            continuous_stats=[self.continuous_stats[i] for i in keep],
        )

    def to_dict(self) -> dict:
        return {
            "continuous": [
                {"name": n, "mean": m, "std": s}
                for n, (m, s) in zip(self.continuous_names, self.continuous_stats)
            ],
            "categorical": [{"name": n, "categories": list(c)} for n, c in self.categorical_specs],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributeSchema":
        con = d.get("continuous", [])
        return cls(
            continuous_names=[c["name"] for c in con],
            categorical_specs=[(c["name"], tuple(c["categories"])) for c in d.get("categorical", [])],
            continuous_stats=[(float(c["mean"]), float(c["std"])) for c in con],
        )


@dataclass(frozen=True)
class TabularBatch:
    a_cat: np.ndarray  # (N, B), entries in {-1, +1}
    a_con: np.ndarray  # (N, M), z-scored

    @property
    def N(self) -> int:
        return self.a_cat.shape[0]

    @property
    def M(self) -> int:
        return self.a_con.shape[1]

    @property
    def B(self) -> int:
        return self.a_cat.shape[1]

    def __len__(self):
        return self.N

    def take(self, idx) -> "TabularBatch":
        return TabularBatch(self.a_cat[idx], self.a_con[idx])


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    kind: str  # "categorical" | "continuous" | "combined"

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def N(self) -> int:
        return self.values.shape[0]


def _encoded_width(categories: Sequence[str]) -> int:
    return 1 if len(categories) <= 2 else len(categories)


def _as_float(name, value) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise NonFiniteValue(f"attribute {name!r}: {value!r} is not numeric") from None
    if not math.isfinite(x):
        raise NonFiniteValue(f"attribute {name!r}: non-finite value {value!r}")
    return x


def _is_number(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def fit_schema(
    records: Sequence[Record],
    continuous: Sequence[str] | None = None,
    categorical: Sequence[str] | Mapping[str, Sequence[str]] | None = None,
) -> AttributeSchema:
    """Fit normalization statistics and category vocabularies.

    Parameters
    ----------
    records : sequence of mappings
        Training records. All records must carry the same attribute names.
    continuous, categorical : optional
        Attribute roles. When both are omitted, numeric values are treated as
        continuous and everything else as categorical. ``categorical`` may map
        names to a declared ordered vocabulary; otherwise categories are
        collected in order of first appearance.

    Stddevs use the population convention (``ddof=0``).
    """
    if len(records) < 2:
        raise InsufficientData(f"need at least 2 records to fit a schema, got {len(records)}")
    keys = set(records[0])
    for r in records[1:]:
        if set(r) != keys:
            raise UnknownShape(f"records disagree on attributes: {sorted(keys ^ set(r))}")

    if continuous is None and categorical is None:
        first = records[0]
        continuous = [k for k in first if _is_number(first[k])]
        categorical = [k for k in first if k not in continuous]
    continuous = list(continuous or [])
    declared: Mapping[str, Sequence[str]] = {}
    if isinstance(categorical, Mapping):
        declared = categorical
        categorical = list(categorical)
    categorical = list(categorical or [])
    missing = (set(continuous) | set(categorical)) - keys
    if missing:
        raise UnknownShape(f"attributes absent from records: {sorted(missing)}")

    stats = []
    for name in continuous:
        col = np.array([_as_float(name, r[name]) for r in records])
        mean, std = float(col.mean()), float(col.std())
        if std == 0:
            raise ConstantAttribute(f"attribute {name!r} is constant")
        stats.append((mean, std))

    specs = []
    for name in categorical:
        if name in declared:
            cats = tuple(str(c) for c in declared[name])
            for r in records:
                if str(r[name]) not in cats:
                    raise UnknownCategory(f"{name}={r[name]!r} not in declared vocabulary")
        else:
            cats = tuple(dict.fromkeys(str(r[name]) for r in records))
        specs.append((name, cats))
    return AttributeSchema(continuous, specs, stats)


def encode_batch(records: Sequence[Record], schema: AttributeSchema) -> TabularBatch:
    """Bipolar-encode categoricals and z-score continuous attributes.

    A binary attribute takes a single column, +1 for the first category of its
    vocabulary and -1 for the second. An attribute with k >= 3 categories
    takes k columns, +1 at the active category and -1 elsewhere.
    """
    n = len(records)
    a_con = np.empty((n, schema.n_continuous))
    for j, (name, (mean, std)) in enumerate(zip(schema.continuous_names, schema.continuous_stats)):
        for i, r in enumerate(records):
            if name not in r:
                raise UnknownShape(f"record {i} lacks attribute {name!r}")
            a_con[i, j] = (_as_float(name, r[name]) - mean) / std

    a_cat = -np.ones((n, schema.n_encoded_categorical))
    col = 0
    for name, cats in schema.categorical_specs:
        index = {c: k for k, c in enumerate(cats)}
        width = _encoded_width(cats)
        for i, r in enumerate(records):
            if name not in r:
                raise UnknownShape(f"record {i} lacks attribute {name!r}")
            value = r[name]
            if value is None or (isinstance(value, float) and math.isnan(value)):
                raise NonFiniteValue(f"record {i}: missing value for {name!r}")
            k = index.get(str(value))
            if k is None:
                raise UnknownCategory(f"record {i}: {name}={value!r} not in {list(cats)}")
            if width == 1:
                a_cat[i, col] = 1.0 if k == 0 else -1.0
            else:
                a_cat[i, col + k] = 1.0
        col += width
    return TabularBatch(a_cat=a_cat, a_con=a_con)


def categorical_similarity(a_cat) -> SimilarityMatrix:
    """Cosine similarity between bipolar rows.

    Every row of a ±1 matrix has squared norm B, so the cosine is the dot
    product over B. Integer-valued dot products keep the result exactly
    symmetric with a unit diagonal.
    """
    a = np.asarray(a_cat, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 1:
        raise ShapeMismatch(f"expected an (N>=2, B>=1) matrix, got shape {a.shape}")
    if not np.all(np.abs(a) == 1.0):
        raise NonFiniteValue("categorical matrix must contain only -1 and +1")
    return SimilarityMatrix((a @ a.T) / a.shape[1], "categorical")


def continuous_similarity(a_con) -> SimilarityMatrix:
    """Map pairwise Euclidean distances onto [-1, 1].

    ``S = 1 - 2 D / (max D + eps)``: identical rows score 1 and the farthest
    pair in the batch scores -1.
    """
    a = np.asarray(a_con, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 1:
        raise ShapeMismatch(f"expected an (N>=2, M>=1) matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue("continuous matrix has non-finite entries")
    d = squareform(pdist(a, metric="euclidean"))
    return SimilarityMatrix(1.0 - 2.0 * d / (d.max() + EPS), "continuous")


def combine_similarity(s_con, s_cat, lam: float) -> SimilarityMatrix:
    """``lam * S_con + (1 - lam) * S_cat``."""
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    con = np.asarray(s_con, dtype=float)
    cat = np.asarray(s_cat, dtype=float)
    if con.shape != cat.shape or con.ndim != 2 or con.shape[0] != con.shape[1]:
        raise ShapeMismatch(f"similarity shapes differ: {con.shape} vs {cat.shape}")
    return SimilarityMatrix(lam * con + (1.0 - lam) * cat, "combined")


def batch_similarity(batch: TabularBatch, lam: float) -> SimilarityMatrix:
    """Combined similarity for a batch, tolerating a missing attribute family.

    With no continuous columns the categorical similarity is used alone
    (``lam`` forced to 0); with no categorical columns, the continuous one
    (``lam`` forced to 1).
    """
    if batch.N < 2:
        raise InsufficientData("similarity needs at least 2 records")
    if batch.M == 0 and batch.B == 0:
        raise UnknownShape("batch has no attributes")
    if batch.M == 0:
        return combine_similarity(categorical_similarity(batch.a_cat), categorical_similarity(batch.a_cat), 0.0)
    if batch.B == 0:
        s = continuous_similarity(batch.a_con)
        return combine_similarity(s, s, 1.0)
    return combine_similarity(
        continuous_similarity(batch.a_con), categorical_similarity(batch.a_cat), lam
    )
