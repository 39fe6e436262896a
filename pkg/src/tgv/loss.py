"""Multi-positive contrastive loss over cosine similarities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPositiveSet, InvalidConfig, ShapeMismatch, ZeroNormRow
from .pairing import PairAssignment


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    include_self_in_denominator: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidConfig(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad_z: np.ndarray
    per_anchor: np.ndarray


def _normalize(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise ZeroNormRow(f"rows {np.flatnonzero(norms == 0).tolist()} have zero norm")
    return z / norms[:, None], norms


def cosine_matrix(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    zn, _ = _normalize(z)
    c = zn @ zn.T
    np.fill_diagonal(c, 1.0)
    return c


def _positive_mask(pairs, n: int) -> np.ndarray:
    if isinstance(pairs, PairAssignment):
        if pairs.N != n:
            raise ShapeMismatch(f"pairs cover {pairs.N} anchors, batch has {n}")
        mask = pairs.mask()
    else:
        mask = np.asarray(pairs, dtype=bool)
        if mask.shape != (n, n):
            raise ShapeMismatch(f"positive mask shape {mask.shape} != {(n, n)}")
        mask = mask.copy()
        np.fill_diagonal(mask, False)
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        raise EmptyPositiveSet(f"anchors {empty.tolist()} have no positives")
    return mask


def tgv_loss(z, pairs, config: LossConfig = LossConfig()) -> LossOutput:
    """Mean over anchors of ``-log(sum_pos exp(c/tau) / sum_denom exp(c/tau))``.

    ``pairs`` is a :class:`PairAssignment` or a boolean (N, N) mask. The
    denominator runs over j != i unless ``config.include_self_in_denominator``.
    Rows of ``z`` are L2-normalized here and the returned gradient flows back
    through that normalization.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ShapeMismatch(f"need an (N>=2, p) matrix, got {z.shape}")
    n = z.shape[0]
    pos = _positive_mask(pairs, n)
    zn, norms = _normalize(z)
    c = zn @ zn.T
    np.fill_diagonal(c, 1.0)
    logits = c / config.tau

    denom = np.ones((n, n), dtype=bool)
    if not config.include_self_in_denominator:
        np.fill_diagonal(denom, False)

    masked = np.where(denom, logits, -np.inf)
    shift = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - shift)  # exp(-inf) = 0 outside the denominator
    sum_all = e.sum(axis=1)
    masked_pos = np.where(pos, logits, -np.inf)
    shift_pos = masked_pos.max(axis=1, keepdims=True)
    e_pos = np.exp(masked_pos - shift_pos)
    sum_pos = e_pos.sum(axis=1)
    per_anchor = (np.log(sum_all) + shift[:, 0]) - (np.log(sum_pos) + shift_pos[:, 0])
    if not config.include_self_in_denominator:
        # positives are a subset of the denominator; clip rounding below zero
        per_anchor = np.maximum(per_anchor, 0.0)
    value = float(per_anchor.mean())

    # d(per_anchor_i)/d(logit_ij) = softmax over denominator - softmax over positives
    g_logits = (e / sum_all[:, None] - e_pos / sum_pos[:, None]) / n
    g_c = g_logits / config.tau
    g_zn = (g_c + g_c.T) @ zn
    radial = np.sum(g_zn * zn, axis=1, keepdims=True)
    grad_z = (g_zn - radial * zn) / norms[:, None]
    return LossOutput(value=value, grad_z=grad_z, per_anchor=per_anchor)
