"""Threshold-based multi-positive pair assignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InsufficientData, NegativeThreshold, ShapeMismatch

DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class PairAssignment:
    positives: list[np.ndarray]  # sorted index arrays, one per anchor
    maxima: np.ndarray
    threshold: float

    @property
    def N(self) -> int:
        return len(self.positives)

    def mask(self) -> np.ndarray:
        """Boolean (N, N) membership matrix, ``mask[i, j] = j in P_i``."""
        m = np.zeros((self.N, self.N), dtype=bool)
        for i, p in enumerate(self.positives):
            m[i, p] = True
        return m

    def sizes(self) -> np.ndarray:
        return np.array([len(p) for p in self.positives])

    def triples(self, s) -> list[tuple[int, int, float]]:
        """(anchor, positive, similarity) rows for debugging dumps."""
        s = np.asarray(s)
        return [(i, int(j), float(s[i, j])) for i, p in enumerate(self.positives) for j in p]


def _check(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeMismatch(f"similarity must be square, got {s.shape}")
    if s.shape[0] < 2:
        raise InsufficientData("pairing needs N >= 2")
    return s


def _off_diagonal(s: np.ndarray) -> np.ndarray:
    off = s.copy()
    np.fill_diagonal(off, -np.inf)
    return off


def anchor_max(s, i: int) -> float:
    s = _check(s)
    if not 0 <= i < s.shape[0]:
        raise IndexOutOfRange(f"anchor {i} outside [0, {s.shape[0]})")
    row = np.delete(s[i], i)
    return float(row.max())


def best_match(s, i: int) -> int:
    """Most similar other index; the lowest index wins ties."""
    s = _check(s)
    if not 0 <= i < s.shape[0]:
        raise IndexOutOfRange(f"anchor {i} outside [0, {s.shape[0]})")
    return int(np.argmax(_off_diagonal(s)[i]))


def assign_pairs(s, h: float = DEFAULT_THRESHOLD) -> PairAssignment:
    """Positives of anchor i are all j != i with ``S[i, j] >= M_i - h``.

    ``M_i`` is the largest off-diagonal similarity of row i. The comparison is
    inclusive and exact, so ties at the boundary are positives and every
    anchor keeps at least its best match.
    """
    if h < 0:
        raise NegativeThreshold(f"threshold must be >= 0, got {h}")
    s = _check(s)
    off = _off_diagonal(s)
    maxima = off.max(axis=1)
    member = off >= (maxima - h)[:, None]
    positives = [np.flatnonzero(row) for row in member]
    return PairAssignment(positives=positives, maxima=maxima, threshold=float(h))


def twin_pairs(n: int) -> PairAssignment:
    """One-to-one pairing for a stacked batch of two views of n samples.

    Row i and row i + n are each other's only positive.
    """
    if n < 1:
        raise InsufficientData("need at least one sample")
    idx = np.arange(2 * n)
    partner = np.where(idx < n, idx + n, idx - n)
    return PairAssignment(
        positives=[np.array([j]) for j in partner],
        maxima=np.ones(2 * n),
        threshold=0.0,
    )
