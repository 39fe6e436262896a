"""Dataset files: CSV tables plus a JSON schema sidecar.

The sidecar declares the role of every column::

    {"format": "tgv-schema", "version": 1,
     "columns": [{"name": "id", "role": "id"},
                 {"name": "x0", "role": "feature"},
                 {"name": "con_0", "role": "continuous"},
                 {"name": "cat_0", "role": "categorical", "categories": ["yes", "no"]},
                 {"name": "phenotype", "role": "target"}]}

Features form the image vector, continuous and categorical columns are the
tabular attributes used for pairing, targets are downstream labels that never
enter pretraining. All numerics are parsed as 64-bit floats.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, NonFiniteValue, UnknownAttribute, UnknownShape
from .synthdata import BINARY_VOCAB, SynthDataset
from .tabular import AttributeSchema, TabularBatch, encode_batch, fit_schema

ROLES = ("id", "feature", "continuous", "categorical", "target")


@dataclass
class DatasetSchema:
    id_column: str = "id"
    features: list[str] = field(default_factory=list)
    continuous: list[str] = field(default_factory=list)
    categorical: dict[str, list[str]] = field(default_factory=dict)
    targets: list[str] = field(default_factory=list)

    def columns(self) -> list[str]:
        return [self.id_column, *self.features, *self.continuous, *self.categorical, *self.targets]

    def to_dict(self) -> dict:
        cols = [{"name": self.id_column, "role": "id"}]
        cols += [{"name": n, "role": "feature"} for n in self.features]
        cols += [{"name": n, "role": "continuous"} for n in self.continuous]
        cols += [{"name": n, "role": "categorical", "categories": list(c)} for n, c in self.categorical.items()]
        cols += [{"name": n, "role": "target"} for n in self.targets]
        return {"format": "tgv-schema", "version": 1, "columns": cols}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        if d.get("format") != "tgv-schema":
            raise FormatError("not a tgv-schema document")
        s = cls(id_column="")
        for col in d["columns"]:
            role, name = col.get("role"), col["name"]
            if role == "id":
                s.id_column = name
            elif role == "feature":
                s.features.append(name)
            elif role == "continuous":
                s.continuous.append(name)
            elif role == "categorical":
                s.categorical[name] = [str(c) for c in col["categories"]]
            elif role == "target":
                s.targets.append(name)
            else:
                raise FormatError(f"column {name!r}: unknown role {role!r}")
        if not s.id_column:
            raise FormatError("schema declares no id column")
        if not s.features:
            raise FormatError("schema declares no feature columns")
        return s

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fit_attributes(self, records, exclude: Sequence[str] = ()) -> AttributeSchema:
        """Fit normalization stats on ``records``, dropping ``exclude`` attributes."""
        drop = set(exclude)
        unknown = drop - set(self.continuous) - set(self.categorical)
        if unknown:
            raise UnknownAttribute(f"cannot exclude unknown attributes {sorted(unknown)}")
        return fit_schema(
            records,
            continuous=[n for n in self.continuous if n not in drop],
            categorical={n: v for n, v in self.categorical.items() if n not in drop},
        )


@dataclass
class Table:
    ids: np.ndarray
    images: np.ndarray
    records: list[dict]
    targets: dict[str, np.ndarray]

    def __len__(self):
        return len(self.ids)

    def subset(self, idx) -> "Table":
        idx = np.asarray(idx)
        return Table(self.ids[idx], self.images[idx], [self.records[i] for i in idx],
                     {k: v[idx] for k, v in self.targets.items()})

    def tabular(self, schema: AttributeSchema) -> TabularBatch:
        return encode_batch(self.records, schema)

    def column(self, name: str) -> np.ndarray:
        """A target or continuous attribute as a float array."""
        if name in self.targets:
            return self.targets[name]
        if self.records and name in self.records[0]:
            try:
                return np.array([float(r[name]) for r in self.records])
            except ValueError:
                raise UnknownAttribute(f"{name!r} is not numeric") from None
        raise UnknownAttribute(f"no column named {name!r}")


def _num(text: str, column: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise NonFiniteValue(f"column {column!r}: cannot parse {text!r}") from None
    if not np.isfinite(x):
        raise NonFiniteValue(f"column {column!r}: non-finite value {text!r}")
    return x


def read_table(path, schema: DatasetSchema) -> Table:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [schema.id_column, *schema.features, *schema.continuous, *schema.categorical]
        missing = [c for c in required if c not in header]
        if missing:
            raise UnknownShape(f"{path}: missing columns {missing}")
        rows = list(reader)
    ids = np.array([r[schema.id_column] for r in rows])
    images = np.array([[_num(r[c], c) for c in schema.features] for r in rows]).reshape(len(rows), -1)
    records = []
    for r in rows:
        rec = {c: _num(r[c], c) for c in schema.continuous}
        for c in schema.categorical:
            if r[c] == "":
                raise NonFiniteValue(f"column {c!r}: missing value")
            rec[c] = r[c]
        records.append(rec)
    targets = {t: np.array([_num(r[t], t) for r in rows]) for t in schema.targets if t in header}
    return Table(ids, images, records, targets)


def _fmt(x) -> str:
    return repr(float(x))


def write_table(path, table: Table, schema: DatasetSchema) -> None:
    targets = [t for t in schema.targets if t in table.targets]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.id_column, *schema.features, *schema.continuous, *schema.categorical, *targets])
        for i in range(len(table)):
            rec = table.records[i]
            w.writerow(
                [table.ids[i]]
                + [_fmt(v) for v in table.images[i]]
                + [_fmt(rec[c]) for c in schema.continuous]
                + [rec[c] for c in schema.categorical]
                + [_fmt(table.targets[t][i]) for t in targets]
            )


def write_matrix_csv(path, ids, matrix, names: Sequence[str], id_column: str = "id") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, *names])
        for i, row in zip(ids, np.atleast_2d(matrix)):
            w.writerow([i, *(_fmt(v) for v in row)])


def from_synth(ds: SynthDataset) -> tuple[Table, DatasetSchema]:
    """Wrap a synthetic dataset; latents are deliberately not carried over."""
    schema = DatasetSchema(
        id_column="id",
        features=[f"x{k}" for k in range(ds.images.shape[1])],
        continuous=ds.continuous_names,
        categorical={n: list(BINARY_VOCAB) for n in ds.categorical_names},
        targets=sorted(ds.targets),
    )
    table = Table(ds.ids.astype(str), ds.images, ds.records(), {k: v.copy() for k, v in ds.targets.items()})
    return table, schema


EMBEDDING_MAGIC = b"TGVE"
EMBEDDING_VERSION = 1


def save_embeddings(path, ids, embeddings) -> None:
    """``TGVE`` | u32 version | u64 R | u64 d | f8 block | u64 n | newline-joined ids."""
    e = np.atleast_2d(np.asarray(embeddings, dtype=float))
    id_blob = "\n".join(str(i) for i in ids).encode()
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IQQ", EMBEDDING_VERSION, *e.shape))
        fh.write(np.ascontiguousarray(e, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(id_blob)))
        fh.write(id_blob)


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: not a TGVE embedding file")
    version, r, d = struct.unpack_from("<IQQ", data, 4)
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IQQ")
    e = np.frombuffer(data, dtype="<f8", count=r * d, offset=offset).reshape(r, d).astype(float)
    offset += 8 * r * d
    (n,) = struct.unpack_from("<Q", data, offset)
    blob = data[offset + 8 : offset + 8 + n].decode()
    ids = np.array(blob.split("\n") if r else [])
    return ids, e
