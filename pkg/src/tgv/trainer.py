"""Contrastive pretraining loop.

Per batch: tabular similarity -> positive sets -> forward -> loss ->
backward -> optimizer step. The augmentation baseline reuses the same loss
with one-to-one pairs between two augmented views of each image.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder as enc
from .errors import InsufficientData, InvalidConfig, NonFiniteLoss, ShapeMismatch
from .loss import LossConfig, tgv_loss
from .pairing import assign_pairs, twin_pairs
from .synthdata import augment
from .tabular import TabularBatch, batch_similarity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 10
    lam: float = 0.5
    threshold: float = 0.05
    tau: float = 0.1
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    pairing_mode: str = "tabular"
    include_self_in_denominator: bool = False
    aug_sigma: float = 0.5
    aug_mask_rate: float = 0.2

    def __post_init__(self):
        if self.batch_size < 2:
            raise InvalidConfig("batch_size must be >= 2")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        if self.pairing_mode not in ("tabular", "augmentation"):
            raise InvalidConfig(f"unknown pairing_mode {self.pairing_mode!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidConfig("lam must lie in [0, 1]")
        if self.threshold < 0:
            raise InvalidConfig("threshold must be >= 0")

    def loss_config(self) -> LossConfig:
        return LossConfig(self.tau, self.include_self_in_denominator)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    loss_history: list[float]
    state: enc.EncoderState
    seconds: float
    config: TrainConfig
    steps: int = 0

    def to_dict(self) -> dict:
        """JSON-ready summary. Wall-clock time is left out so reports are reproducible."""
        return {
            "loss_history": self.loss_history,
            "steps": self.steps,
            "config": self.config.to_dict(),
            "encoder": self.state.config.to_dict(),
        }


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, moments: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, new_moments)``."""
    if len(params) != len(grads) or len(params) != len(moments.m):
        raise ShapeMismatch("params, grads and moments must align")
    t = moments.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, moments.m, moments.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def sgd_step(params, grads, lr: float):
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads must align")
    return [p - lr * g for p, g in zip(params, grads)]


class Optimizer:
    """Small stateful wrapper so training loops can swap Adam and SGD."""

    def __init__(self, params, kind: str = "adam", lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.moments = AdamState.zeros_like(params) if kind == "adam" else None

    def step(self, params, grads):
        if self.kind == "sgd":
            return sgd_step(params, grads, self.lr)
        new, self.moments = adam_step(params, grads, self.moments, self.lr,
                                      self.beta1, self.beta2, self.eps)
        return new


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; a trailing batch smaller than 2 is dropped."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        if len(idx) >= 2:
            yield idx


def batch_pairs(tabular: TabularBatch, idx, config: TrainConfig):
    sub = tabular.take(idx)
    s = batch_similarity(sub, config.lam)
    return s, assign_pairs(s, config.threshold)


def train_step(state, x, pairs, config: TrainConfig, optimizer: Optimizer):
    """Forward, loss, backward and update on one prepared batch."""
    _, z, cache = enc.forward(state, x)
    out = tgv_loss(z, pairs, config.loss_config())
    if not np.isfinite(out.value):
        raise NonFiniteLoss(f"loss became {out.value}")
    grads, _ = enc.backward(state, cache, grad_z=out.grad_z)
    return state.with_params(optimizer.step(state.params(), grads)), out.value


def train(images, config: TrainConfig, tabular: TabularBatch | None = None,
          encoder_config: enc.EncoderConfig | None = None,
          state: enc.EncoderState | None = None) -> TrainReport:
    """Pretrain an encoder contrastively.

    Parameters
    ----------
    images : (n, F) array
    config : TrainConfig
    tabular : TabularBatch, required in tabular pairing mode
        Encoded attributes aligned with ``images`` rows.
    encoder_config, state : optional
        Architecture for a fresh encoder (seeded from ``config.seed`` when not
        given) or an existing state to continue from.
    """
    images = np.asarray(images, dtype=float)
    n = images.shape[0]
    if n < config.batch_size:
        raise InsufficientData(f"{n} samples < batch size {config.batch_size}")
    if config.pairing_mode == "tabular":
        if tabular is None:
            raise InsufficientData("tabular pairing needs tabular attributes")
        if tabular.N != n:
            raise ShapeMismatch(f"{tabular.N} tabular rows for {n} images")
    if state is None:
        encoder_config = encoder_config or enc.EncoderConfig(input_dim=images.shape[1], seed=config.seed)
        state = enc.init(encoder_config)

    rng = np.random.default_rng(config.seed)
    optimizer = Optimizer(state.params(), config.optimizer, config.learning_rate,
                          config.beta1, config.beta2, config.adam_eps)
    history = []
    steps = 0
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        losses = []
        for idx in batches(n, config.batch_size, rng):
            if config.pairing_mode == "tabular":
                x = images[idx]
                _, pairs = batch_pairs(tabular, idx, config)
            else:
                x = np.vstack([
                    augment(images[idx], config.aug_sigma, config.aug_mask_rate, rng),
                    augment(images[idx], config.aug_sigma, config.aug_mask_rate, rng),
                ])
                pairs = twin_pairs(len(idx))
            state, value = train_step(state, x, pairs, config, optimizer)
            losses.append(value)
            steps += 1
        history.append(float(np.mean(losses)))
        log.info("epoch %d/%d loss %.5f", epoch + 1, config.epochs, history[-1])
    return TrainReport(history, state, time.perf_counter() - t0, config, steps)
