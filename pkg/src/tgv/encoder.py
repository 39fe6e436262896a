"""MLP image encoder and projection head with exact backpropagation.

Layers compute ``y = x @ W + b`` with ``W`` of shape (fan_in, fan_out). The
encoder applies ReLU after every hidden layer and ends linear, producing the
embedding ``v``. The projection head is linear -> ReLU -> linear and maps
``v`` to ``z``, the input of the contrastive loss.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidDim, NonFiniteInput, ShapeMismatch, StaleCache

CHECKPOINT_MAGIC = b"TGVW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    encoder_hidden_dims: tuple[int, ...] = (128,)
    embedding_dim: int = 64
    projection_hidden_dim: int | None = None  # defaults to embedding_dim
    projection_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden_dims", tuple(int(h) for h in self.encoder_hidden_dims))
        if self.projection_hidden_dim is None:
            object.__setattr__(self, "projection_hidden_dim", self.embedding_dim)
        dims = (self.input_dim, self.embedding_dim, self.projection_hidden_dim, self.projection_dim)
        if any(int(x) < 1 for x in dims + self.encoder_hidden_dims):
            raise InvalidDim(f"all dimensions must be >= 1: {self}")

    @property
    def encoder_dims(self) -> list[int]:
        return [self.input_dim, *self.encoder_hidden_dims, self.embedding_dim]

    @property
    def projection_dims(self) -> list[int]:
        return [self.embedding_dim, self.projection_hidden_dim, self.projection_dim]

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = self.encoder_dims
        shapes = list(zip(dims[:-1], dims[1:]))
        p = self.projection_dims
        return shapes + list(zip(p[:-1], p[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_hidden_dims"] = list(self.encoder_hidden_dims)
        return d


@dataclass(frozen=True, eq=False)
class EncoderState:
    config: EncoderConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_encoder_layers(self) -> int:
        return len(self.config.encoder_dims) - 1

    def params(self) -> list[np.ndarray]:
        """Flat parameter list in declared order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: list[np.ndarray]) -> "EncoderState":
        if len(params) != 2 * len(self.weights):
            raise ShapeMismatch(f"expected {2 * len(self.weights)} arrays, got {len(params)}")
        for new, old in zip(params, self.params()):
            if new.shape != old.shape:
                raise ShapeMismatch(f"parameter shape {new.shape} != {old.shape}")
        return EncoderState(self.config, list(params[0::2]), list(params[1::2]))

    def copy(self) -> "EncoderState":
        return self.with_params([p.copy() for p in self.params()])


@dataclass(eq=False)
class ForwardCache:
    owner: EncoderState
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)


def init(config: EncoderConfig) -> EncoderState:
    """Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in)) weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes():
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderState(config, weights, biases)


def _relu_after(state: EncoderState, layer: int) -> bool:
    n_enc = state.n_encoder_layers
    last_enc = n_enc - 1
    last_proj = len(state.weights) - 1
    return layer not in (last_enc, last_proj)


def _check_input(state: EncoderState, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != state.config.input_dim:
        raise ShapeMismatch(f"expected (N, {state.config.input_dim}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("input contains NaN or inf")
    return x


def embed(state: EncoderState, x) -> np.ndarray:
    """Encoder output ``v`` only; the projection head is skipped."""
    h = _check_input(state, x)
    for k in range(state.n_encoder_layers):
        h = h @ state.weights[k] + state.biases[k]
        if _relu_after(state, k):
            h = np.maximum(h, 0.0)
    return h


def forward(state: EncoderState, x):
    """Run encoder and projection head.

    Returns ``(v, z, cache)``. ``z`` is not normalized.
    """
    h = _check_input(state, x)
    cache = ForwardCache(owner=state)
    v = None
    for k, (w, b) in enumerate(zip(state.weights, state.biases)):
        cache.inputs.append(h)
        pre = h @ w + b
        cache.pre.append(pre)
        h = np.maximum(pre, 0.0) if _relu_after(state, k) else pre
        if k == state.n_encoder_layers - 1:
            v = h
    return v, h, cache


def backward(state: EncoderState, cache: ForwardCache, grad_z=None, grad_v=None):
    """Backpropagate a loss co-vector through the network.

    ``grad_z`` is the gradient with respect to the projection output and
    ``grad_v`` an optional extra gradient entering at the embedding (used by
    fine-tuning heads that bypass the projection). Returns
    ``(param_grads, grad_x)`` with ``param_grads`` aligned to
    ``state.params()``.
    """
    if cache.owner is not state:
        raise StaleCache("cache was produced by a different encoder state")
    n = cache.inputs[0].shape[0]
    n_layers = len(state.weights)
    n_enc = state.n_encoder_layers
    grads_w = [np.zeros_like(w) for w in state.weights]
    grads_b = [np.zeros_like(b) for b in state.biases]

    if grad_z is not None:
        g = np.asarray(grad_z, dtype=float)
        if g.shape != (n, state.config.projection_dim):
            raise ShapeMismatch(f"grad_z shape {g.shape} != {(n, state.config.projection_dim)}")
    else:
        g = None

    for k in range(n_layers - 1, -1, -1):
        if k == n_enc - 1 and grad_v is not None:
            gv = np.asarray(grad_v, dtype=float)
            if gv.shape != (n, state.config.embedding_dim):
                raise ShapeMismatch(f"grad_v shape {gv.shape} != {(n, state.config.embedding_dim)}")
            g = gv if g is None else g + gv
        if g is None:
            continue
        if _relu_after(state, k):
            g = g * (cache.pre[k] > 0)
        grads_w[k] = cache.inputs[k].T @ g
        grads_b[k] = g.sum(axis=0)
        g = g @ state.weights[k].T

    grad_x = g if g is not None else np.zeros_like(cache.inputs[0])
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out += [gw, gb]
    return out, grad_x


def save_checkpoint(state: EncoderState, path) -> None:
    """Write ``TGVW`` | u32 version | u32 config length | config JSON | f8 params."""
    cfg = json.dumps(state.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
        fh.write(cfg)
        for p in state.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> EncoderState:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a TGVW checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg = json.loads(data[12 : 12 + n])
    cfg["encoder_hidden_dims"] = tuple(cfg["encoder_hidden_dims"])
    config = EncoderConfig(**cfg)
    offset = 12 + n
    params = []
    for fan_in, fan_out in config.layer_shapes():
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            if offset + 8 * count > len(data):
                raise FormatError(f"{path}: truncated parameter block")
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            params.append(arr.astype(float))
            offset += 8 * count
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return EncoderState(config, params[0::2], params[1::2])
