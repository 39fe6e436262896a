"""Synthetic paired image/tabular data with a shared latent cause.

Each sample has a latent ``u ~ N(0, I_L)`` shared by its image and its
tabular attributes, plus a nuisance latent ``w`` that only reaches the image
(think pose or scanner intensity). Tabular similarity therefore points at the
part of the image that matters, which is the situation tabular guidance is
meant to exploit.

Two downstream targets are derived from ``u`` and never written into the
tabular attributes: a continuous ``phenotype`` and a rare binary ``disease``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidRate

BINARY_VOCAB = ("yes", "no")


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 4000
    latent_dim: int = 6
    feature_dim: int = 64
    n_continuous: int = 14
    n_categorical: int = 6
    nuisance_dim: int = 6
    tabular_only_dim: int = 2
    tabular_only_share: float = 0.0
    nuisance_scale: float = 1.5
    noise_sigma_image: float = 0.1
    noise_sigma_tabular: float = 0.7
    noise_sigma_target: float = 0.1
    nonlinearity_depth: int = 1
    disease_prevalence: float = 0.08
    shared_signal_floor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise InvalidConfig("n_samples must be >= 2")
        if self.latent_dim < 1 or self.feature_dim < 1:
            raise InvalidConfig("latent_dim and feature_dim must be >= 1")
        if self.n_continuous < 0 or self.n_categorical < 0 or self.n_continuous + self.n_categorical < 1:
            raise InvalidConfig("need at least one tabular attribute")
        if min(self.nuisance_dim, self.tabular_only_dim, self.nonlinearity_depth) < 0:
            raise InvalidConfig("nuisance_dim, tabular_only_dim and nonlinearity_depth must be >= 0")
        if min(self.noise_sigma_image, self.noise_sigma_tabular, self.noise_sigma_target,
               self.nuisance_scale) < 0:
            raise InvalidConfig("noise scales must be >= 0")
        if not 0.0 <= self.tabular_only_share < 1.0:
            raise InvalidConfig("tabular_only_share must lie in [0, 1)")
        if not 0 < self.disease_prevalence < 1:
            raise InvalidConfig("disease_prevalence must lie in (0, 1)")
        if not self.shared_signal_floor < 1:
            raise InvalidConfig("shared_signal_floor must be < 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthDataset:
    images: np.ndarray
    continuous: np.ndarray  # (n, M) raw continuous attributes
    categorical: np.ndarray  # (n, B0) strings from BINARY_VOCAB
    latents: np.ndarray  # ground truth, test-only
    targets: dict[str, np.ndarray]
    ids: np.ndarray
    config: SynthConfig = field(default_factory=SynthConfig)

    def __len__(self):
        return self.images.shape[0]

    @property
    def continuous_names(self) -> list[str]:
        return [f"con_{k}" for k in range(self.continuous.shape[1])]

    @property
    def categorical_names(self) -> list[str]:
        return [f"cat_{k}" for k in range(self.categorical.shape[1])]

    def records(self, idx=None) -> list[dict]:
        """Tabular attributes as one mapping per sample (targets excluded)."""
        rows = range(len(self)) if idx is None else np.asarray(idx)
        con_names, cat_names = self.continuous_names, self.categorical_names
        out = []
        for i in rows:
            r = {n: float(v) for n, v in zip(con_names, self.continuous[i])}
            r.update({n: str(v) for n, v in zip(cat_names, self.categorical[i])})
            out.append(r)
        return out

    def subset(self, idx) -> "SynthDataset":
        idx = np.asarray(idx)
        return SynthDataset(
            images=self.images[idx],
            continuous=self.continuous[idx],
            categorical=self.categorical[idx],
            latents=self.latents[idx],
            targets={k: v[idx] for k, v in self.targets.items()},
            ids=self.ids[idx],
            config=self.config,
        )

    def split(self, test_fraction: float, seed: int = 0):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


def _random_relu_net(rng, n_in: int, width: int, depth: int):
    layers = []
    fan_in = n_in
    for _ in range(depth):
        layers.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)))
        fan_in = width
    out = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, width))
    return layers, out


def _unit_columns(rng, rows: int, cols: int) -> np.ndarray:
    if rows == 0:
        return np.zeros((0, cols))
    m = rng.normal(size=(rows, cols))
    return m / np.linalg.norm(m, axis=0, keepdims=True)


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    rng = np.random.default_rng(config.seed)
    # model parameters are drawn first so they do not depend on n_samples
    L, M, B0, Q, F = (config.latent_dim, config.n_continuous, config.n_categorical,
                      config.nuisance_dim, config.feature_dim)
    T = config.tabular_only_dim
    share = config.tabular_only_share if T > 0 else 0.0
    con_visible, con_hidden = _unit_columns(rng, L, M), _unit_columns(rng, T, M)
    cat_visible, cat_hidden = _unit_columns(rng, L, B0), _unit_columns(rng, T, B0)
    hidden, out = _random_relu_net(rng, L + Q, F, config.nonlinearity_depth)
    phen_dir = rng.normal(size=L)
    phen_dir /= np.linalg.norm(phen_dir)
    dis_dir = rng.normal(size=L)
    dis_dir /= np.linalg.norm(dis_dir)

    n = config.n_samples
    u = rng.normal(size=(n, L))
    w = rng.normal(size=(n, Q))
    t = rng.normal(size=(n, T))

    h = np.hstack([u, config.nuisance_scale * w])
    for layer in hidden:
        h = np.maximum(h @ layer, 0.0)
    images = h @ out
    images = images + config.noise_sigma_image * rng.normal(size=images.shape)
    mu, sd = images.mean(axis=0), images.std(axis=0)
    images = (images - mu) / np.where(sd > 0, sd, 1.0)

    # each attribute: unit-variance signal, a fixed share of it invisible to the image
    a, b = np.sqrt(1.0 - share), np.sqrt(share)
    continuous = a * (u @ con_visible) + b * (t @ con_hidden)
    continuous += config.noise_sigma_tabular * rng.normal(size=(n, M))
    cat_score = a * (u @ cat_visible) + b * (t @ cat_hidden)
    cat_score += config.noise_sigma_tabular * rng.normal(size=(n, B0))
    categorical = np.where(cat_score > 0, BINARY_VOCAB[0], BINARY_VOCAB[1])

    phenotype = 55.0 + 8.0 * (u @ phen_dir) + 8.0 * config.noise_sigma_target * rng.normal(size=n)
    dis_score = u @ dis_dir
    cut = np.quantile(dis_score, 1.0 - config.disease_prevalence)
    disease = (dis_score > cut).astype(float)

    return SynthDataset(
        images=images,
        continuous=continuous,
        categorical=categorical,
        latents=np.hstack([u, w, t]),
        targets={"phenotype": phenotype, "disease": disease},
        ids=np.arange(n),
        config=config,
    )


def shared_signal(ds: SynthDataset, test_fraction: float = 0.25, seed: int = 0,
                  ridge: float = 1e-3) -> np.ndarray:
    """Held-out R^2 of ridge regression from images to each continuous attribute.

    This is the mutual-predictability check that tabular guidance relies on:
    a generated dataset is usable when every entry clears
    ``ds.config.shared_signal_floor``.
    """
    train, test = ds.split(test_fraction, seed)
    x = np.hstack([train.images, np.ones((len(train), 1))])
    xt = np.hstack([test.images, np.ones((len(test), 1))])
    w = np.linalg.solve(x.T @ x + ridge * np.eye(x.shape[1]), x.T @ train.continuous)
    resid = test.continuous - xt @ w
    return 1.0 - resid.var(axis=0) / test.continuous.var(axis=0)


def augment(x, sigma: float, mask_rate: float, seed) -> np.ndarray:
    """Additive Gaussian noise followed by independent coordinate zero-masking.

    ``seed`` may be an int or a ``numpy.random.Generator``. Works on a single
    vector or a batch of rows.
    """
    if sigma < 0:
        raise InvalidRate(f"sigma must be >= 0, got {sigma}")
    if not 0.0 <= mask_rate < 1.0:
        raise InvalidRate(f"mask_rate must lie in [0, 1), got {mask_rate}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    out = x + sigma * rng.normal(size=x.shape) if sigma > 0 else x.copy()
    if mask_rate > 0:
        out[rng.random(size=x.shape) < mask_rate] = 0.0
    return out


def balanced_subset(labels, seed: int = 0) -> np.ndarray:
    """All positives plus an equal-sized seeded draw of negatives, sorted."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    k = min(len(pos), len(neg))
    rng = np.random.default_rng(seed)
    picked = np.concatenate([rng.choice(pos, k, replace=False), rng.choice(neg, k, replace=False)])
    return np.sort(picked)
