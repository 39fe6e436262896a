"""Unimodal zero-shot prediction by cosine k-NN against a labeled reference set."""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import encoder as enc
from .errors import (
    EmptyReference,
    FormatError,
    InvalidConfig,
    KOutOfRange,
    ShapeMismatch,
    UnknownAttribute,
    ZeroNormQuery,
    ZeroNormRow,
)

REFERENCE_MAGIC = b"TGVR"
REFERENCE_VERSION = 1

CLASSIFICATION_K_FRACTION = 0.20
REGRESSION_K_FRACTION = 0.025


@dataclass(frozen=True)
class ZeroShotConfig:
    k_fraction: float = CLASSIFICATION_K_FRACTION

    def __post_init__(self):
        if not 0.0 < self.k_fraction <= 1.0:
            raise InvalidConfig(f"k_fraction must lie in (0, 1], got {self.k_fraction}")

    def k(self, r: int) -> int:
        # round half up, floored at 1
        return min(r, max(1, math.floor(self.k_fraction * r + 0.5)))


@dataclass(frozen=True)
class ReferenceSet:
    embeddings: np.ndarray  # (R, d), unnormalized encoder outputs
    labels: dict[str, np.ndarray]
    ids: np.ndarray

    def __post_init__(self):
        e = self.embeddings
        if e.ndim != 2 or e.shape[0] < 1:
            raise EmptyReference("reference set needs at least one embedding")
        if np.any(np.linalg.norm(e, axis=1) == 0):
            raise ZeroNormRow("reference set contains a zero-norm embedding")
        for name, col in self.labels.items():
            if len(col) != e.shape[0]:
                raise ShapeMismatch(f"label {name!r} has {len(col)} rows, expected {e.shape[0]}")
        if len(self.ids) != e.shape[0]:
            raise ShapeMismatch(f"{len(self.ids)} ids for {e.shape[0]} embeddings")

    @property
    def R(self) -> int:
        return self.embeddings.shape[0]

    def subset(self, idx) -> "ReferenceSet":
        idx = np.asarray(idx)
        return ReferenceSet(self.embeddings[idx], {k: v[idx] for k, v in self.labels.items()}, self.ids[idx])

    def normalized(self) -> np.ndarray:
        return self.embeddings / np.linalg.norm(self.embeddings, axis=1, keepdims=True)


def build_reference(state: enc.EncoderState, samples, labels: Mapping[str, Sequence[float]],
                    ids=None) -> ReferenceSet:
    """Embed ``samples`` with the encoder (projection head not used)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyReference("no reference samples")
    v = enc.embed(state, x)
    ids = np.arange(x.shape[0]) if ids is None else np.asarray(ids)
    return ReferenceSet(v, {k: np.asarray(col, dtype=float) for k, col in labels.items()}, ids)


def _query_matrix(v_query) -> np.ndarray:
    q = np.atleast_2d(np.asarray(v_query, dtype=float))
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroNormQuery("query embedding has zero norm")
    return q / norms


def similarities(ref: ReferenceSet, v_query) -> np.ndarray:
    """Cosine similarities, shape (Q, R)."""
    q = _query_matrix(v_query)
    if q.shape[1] != ref.embeddings.shape[1]:
        raise ShapeMismatch(f"query dim {q.shape[1]} != reference dim {ref.embeddings.shape[1]}")
    return q @ ref.normalized().T


def neighbors(ref: ReferenceSet, v_query, k: int) -> np.ndarray:
    """Indices of the ``k`` most similar references, most similar first.

    Ties keep ascending reference index. A 1-d query returns a 1-d array; a
    batch of queries returns one row per query.
    """
    if not 1 <= k <= ref.R:
        raise KOutOfRange(f"K={k} outside [1, {ref.R}]")
    s = similarities(ref, v_query)
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    return order[0] if np.ndim(v_query) == 1 else order


def predict_mean(ref: ReferenceSet, v_query, attribute: str,
                 config: ZeroShotConfig = ZeroShotConfig()):
    """Mean of ``attribute`` over the K nearest references.

    For a 0/1 attribute the result is the positive-class score.
    """
    if attribute not in ref.labels:
        raise UnknownAttribute(f"{attribute!r} not in reference labels {sorted(ref.labels)}")
    idx = neighbors(ref, v_query, config.k(ref.R))
    # aggregate in reference order so K = R reproduces the plain label mean bit for bit
    return ref.labels[attribute][np.sort(idx, axis=-1)].mean(axis=-1)


def reference_sets(n_pool: int, size: int, n_sets: int, seed: int = 0, labels=None) -> list[np.ndarray]:
    """Disjoint seeded draws without replacement from ``range(n_pool)``.

    With binary ``labels`` each set is label-balanced (``size // 2`` of each
    class).
    """
    rng = np.random.default_rng(seed)
    if labels is None:
        if size * n_sets > n_pool:
            raise InvalidConfig(f"cannot draw {n_sets} disjoint sets of {size} from {n_pool}")
        perm = rng.permutation(n_pool)
        return [np.sort(perm[k * size : (k + 1) * size]) for k in range(n_sets)]
    labels = np.asarray(labels)
    half = size // 2
    pos = rng.permutation(np.flatnonzero(labels == 1))
    neg = rng.permutation(np.flatnonzero(labels == 0))
    if half * n_sets > min(len(pos), len(neg)):
        raise InvalidConfig(f"not enough samples per class for {n_sets} balanced sets of {size}")
    return [
        np.sort(np.concatenate([pos[k * half : (k + 1) * half], neg[k * half : (k + 1) * half]]))
        for k in range(n_sets)
    ]


@dataclass
class SweepResult:
    per_set: list[float]
    mean: float
    std: float


def robustness_sweep(refsets: Sequence[ReferenceSet], queries, targets, attribute: str,
                     config: ZeroShotConfig, metric: Callable) -> SweepResult:
    """Evaluate ``metric(predictions, targets)`` once per reference set.

    Reports the per-set values with their mean and population stddev.
    """
    if len(refsets) < 2:
        raise InvalidConfig("a robustness sweep needs at least 2 reference sets")
    values = [float(metric(predict_mean(r, queries, attribute, config), targets)) for r in refsets]
    return SweepResult(values, float(np.mean(values)), float(np.std(values)))


def size_sweep(refsets: Sequence[ReferenceSet], queries, targets, attribute: str,
               config: ZeroShotConfig, metric: Callable, fractions=(1.0, 0.5, 0.25, 0.05),
               seeds=(0, 1, 2)) -> dict[float, SweepResult]:
    """Shrink every reference set to each fraction of its size and re-evaluate.

    For each fraction the metric is averaged over ``seeds`` (subsampling
    draws); the reported spread is across reference sets.
    """
    out = {}
    for frac in fractions:
        per_set = []
        for ref in refsets:
            size = max(1, int(round(frac * ref.R)))
            vals = []
            for seed in seeds:
                idx = np.sort(np.random.default_rng(seed).permutation(ref.R)[:size])
                vals.append(float(metric(predict_mean(ref.subset(idx), queries, attribute, config), targets)))
            per_set.append(float(np.mean(vals)))
        out[frac] = SweepResult(per_set, float(np.mean(per_set)), float(np.std(per_set)))
    return out


def save_reference(ref: ReferenceSet, path) -> None:
    """``TGVR`` | u32 version | u64 R | u64 d | f8 embeddings | u64 n | label CSV."""
    buf = io.StringIO()
    names = list(ref.labels)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *names])
    for i in range(ref.R):
        w.writerow([str(ref.ids[i])] + [repr(float(ref.labels[k][i])) for k in names])
    table = buf.getvalue().encode()
    with open(path, "wb") as fh:
        fh.write(REFERENCE_MAGIC)
        fh.write(struct.pack("<IQQ", REFERENCE_VERSION, *ref.embeddings.shape))
        fh.write(np.ascontiguousarray(ref.embeddings, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(table)))
        fh.write(table)


def load_reference(path) -> ReferenceSet:
    data = Path(path).read_bytes()
    if data[:4] != REFERENCE_MAGIC:
        raise FormatError(f"{path}: not a TGVR reference file")
    version, r, d = struct.unpack_from("<IQQ", data, 4)
    if version != REFERENCE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IQQ")
    emb = np.frombuffer(data, dtype="<f8", count=r * d, offset=offset).reshape(r, d).astype(float)
    offset += 8 * r * d
    (n,) = struct.unpack_from("<Q", data, offset)
    if offset + 8 + n != len(data):
        raise FormatError(f"{path}: label table length does not match file size")
    header, *rows = list(csv.reader(io.StringIO(data[offset + 8 :].decode(), newline="")))
    ids = np.array([row[0] for row in rows])
    labels = {name: np.array([float(row[k + 1]) for row in rows]) for k, name in enumerate(header[1:])}
    return ReferenceSet(emb, labels, ids)
