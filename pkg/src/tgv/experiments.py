"""End-to-end experiment helpers: pretrain, zero-shot, fine-tune, ablation grids."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import encoder as enc
from .data import DatasetSchema, Table, from_synth
from .errors import InvalidConfig
from .evaluation import FinetuneConfig, auc, finetune, mae, mean_guess
from .synthdata import SynthConfig, balanced_subset, generate
from .trainer import TrainConfig, TrainReport, train
from .zeroshot import (
    CLASSIFICATION_K_FRACTION,
    REGRESSION_K_FRACTION,
    ReferenceSet,
    SweepResult,
    ZeroShotConfig,
    reference_sets,
    robustness_sweep,
    size_sweep,
)

THRESHOLD_GRID = (0.0, 0.05, 0.1, 0.2)
LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
REFSET_LADDER = (2000, 1000, 500, 100)
REFSET_FRACTIONS = (1.0, 0.5, 0.25, 0.05)


@dataclass
class Split:
    train: Table
    test: Table
    schema: DatasetSchema


def synthetic_split(config: SynthConfig = SynthConfig(), test_fraction: float = 0.25,
                    split_seed: int = 0) -> Split:
    ds = generate(config)
    tr, te = ds.split(test_fraction, seed=split_seed)
    (train_t, schema), (test_t, _) = from_synth(tr), from_synth(te)
    return Split(train_t, test_t, schema)


def pretrain(table: Table, schema: DatasetSchema, config: TrainConfig, exclude: Sequence[str] = (),
             encoder_config: enc.EncoderConfig | None = None) -> TrainReport:
    tabular = None
    if config.pairing_mode == "tabular":
        tabular = table.tabular(schema.fit_attributes(table.records, exclude))
    return train(table.images, config, tabular=tabular, encoder_config=encoder_config)


def metric_for(task: str):
    return auc if task == "binary" else mae


def default_k_fraction(task: str) -> float:
    return CLASSIFICATION_K_FRACTION if task == "binary" else REGRESSION_K_FRACTION


def default_ref_size(labels, task: str, n_sets: int, cap: int = 800) -> int:
    if task == "binary":
        per_class = int(min((labels == 1).sum(), (labels == 0).sum()))
        return 2 * (per_class // n_sets)
    return min(cap, len(labels) // n_sets)


def build_refsets(state: enc.EncoderState, table: Table, target: str, task: str,
                  size: int | None = None, n_sets: int = 3, seed: int = 0) -> list[ReferenceSet]:
    """Disjoint representative sets drawn from ``table``; label-balanced for binary targets."""
    labels = table.column(target)
    size = size or default_ref_size(labels, task, n_sets)
    if size < 1:
        raise InvalidConfig("reference sets would be empty")
    groups = reference_sets(len(table), size, n_sets, seed, labels if task == "binary" else None)
    v = enc.embed(state, table.images)
    return [ReferenceSet(v[g], {target: labels[g]}, table.ids[g]) for g in groups]


def zero_shot(state: enc.EncoderState, train_t: Table, test_t: Table, target: str, task: str,
              k_fraction: float | None = None, size: int | None = None, n_sets: int = 3,
              seed: int = 0) -> SweepResult:
    """Zero-shot metric on ``test_t`` for each of ``n_sets`` disjoint reference sets."""
    refs = build_refsets(state, train_t, target, task, size, n_sets, seed)
    cfg = ZeroShotConfig(k_fraction or default_k_fraction(task))
    return robustness_sweep(refs, enc.embed(state, test_t.images), test_t.column(target),
                            target, cfg, metric_for(task))


def refset_ladder(state: enc.EncoderState, train_t: Table, test_t: Table, target: str, task: str,
                  fractions=REFSET_FRACTIONS, seeds=(0, 1, 2), k_fraction: float | None = None,
                  size: int | None = None, n_sets: int = 3) -> dict[float, SweepResult]:
    refs = build_refsets(state, train_t, target, task, size, n_sets)
    cfg = ZeroShotConfig(k_fraction or default_k_fraction(task))
    return size_sweep(refs, enc.embed(state, test_t.images), test_t.column(target), target,
                      cfg, metric_for(task), fractions, seeds)


def mean_guess_mae(train_t: Table, test_t: Table, target: str) -> float:
    guess = mean_guess(train_t.column(target))
    return mae(guess.predict(len(test_t)), test_t.column(target))


def finetune_metric(state: enc.EncoderState, train_t: Table, test_t: Table, target: str, task: str,
                    config: FinetuneConfig | None = None) -> float:
    """Fine-tune on ``train_t`` (disease-balanced for binary tasks) and score ``test_t``."""
    config = config or FinetuneConfig(task=task)
    if config.task != task:
        config = replace(config, task=task)
    y = train_t.column(target)
    idx = balanced_subset(y, seed=config.seed) if task == "binary" else np.arange(len(train_t))
    result = finetune(state, None, train_t.images[idx], y[idx], config,
                      eval_images=test_t.images, eval_targets=test_t.column(target))
    return result.report.value


@dataclass
class AblationRow:
    axis: str
    value: float
    zs_metric: float
    zs_std: float
    ft_metric: float | None


def ablation(split: Split, axis: str, values: Sequence[float], config: TrainConfig, target: str,
             task: str, ft_config: FinetuneConfig | None = None, k_fraction: float | None = None,
             exclude: Sequence[str] = (), run_finetune: bool = True) -> list[AblationRow]:
    """One pretraining + evaluation per grid value.

    ``axis`` is ``"h"``, ``"lambda"`` or ``"refset_size"``. Reference-set
    sizes share a single pretraining run and carry no fine-tuning metric.
    """
    rows = []
    if axis == "refset_size":
        state = pretrain(split.train, split.schema, config, exclude).state
        for size in values:
            zs = zero_shot(state, split.train, split.test, target, task, k_fraction, int(size))
            rows.append(AblationRow(axis, float(size), zs.mean, zs.std, None))
        return rows
    if axis not in ("h", "lambda"):
        raise InvalidConfig(f"unknown sweep axis {axis!r}")
    for value in values:
        cfg = replace(config, threshold=value) if axis == "h" else replace(config, lam=value)
        state = pretrain(split.train, split.schema, cfg, exclude).state
        zs = zero_shot(state, split.train, split.test, target, task, k_fraction)
        ft = finetune_metric(state, split.train, split.test, target, task, ft_config) if run_finetune else None
        rows.append(AblationRow(axis, float(value), zs.mean, zs.std, ft))
    return rows
