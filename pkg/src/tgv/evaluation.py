"""Downstream metrics and task heads: zero-shot scoring, linear probing, fine-tuning."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from . import encoder as enc
from .errors import (
    DegenerateDesign,
    EmptyTrain,
    InsufficientData,
    InvalidConfig,
    LengthMismatch,
    NonFiniteLoss,
    ShapeMismatch,
    SingleClass,
)
from .trainer import Optimizer, batches


@dataclass
class MetricReport:
    metric: str
    value: float
    n: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)}")
    if len(a) == 0:
        raise LengthMismatch("empty input")
    return a, b


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney statistic; ties count one half."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc(scores, labels) -> float:
    """Unweighted mean of per-column AUCs for multilabel targets."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape or s.ndim != 2:
        raise ShapeMismatch(f"scores {s.shape} vs labels {y.shape}")
    return float(np.mean([auc(s[:, k], y[:, k]) for k in range(s.shape[1])]))


def mae(predictions, targets) -> float:
    p, t = _pair(predictions, targets)
    return float(np.mean(np.abs(p - t)))


def accuracy(predictions, labels) -> float:
    p, t = _pair(predictions, labels)
    return float(np.mean(p == t))


class MeanGuess:
    def __init__(self, train_targets):
        t = np.asarray(train_targets, dtype=float).ravel()
        if t.size == 0:
            raise EmptyTrain("mean-guess needs at least one training target")
        self.value = float(t.mean())

    def predict(self, n_or_x) -> np.ndarray:
        n = n_or_x if isinstance(n_or_x, int) else len(n_or_x)
        return np.full(n, self.value)


def mean_guess(train_targets) -> MeanGuess:
    return MeanGuess(train_targets)


@dataclass
class LinearHead:
    weight: np.ndarray  # (d,)
    bias: float
    task: str = "regression"

    def logits(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weight + self.bias

    def predict(self, x) -> np.ndarray:
        """Regression values, or positive-class probabilities for binary tasks."""
        out = self.logits(x)
        return expit(out) if self.task == "binary" else out

    @classmethod
    def zeros(cls, d: int, task: str = "regression") -> "LinearHead":
        return cls(np.zeros(d), 0.0, task)


def score(head_or_preds, targets, task: str) -> tuple[str, float]:
    if task == "binary":
        return "auc", auc(head_or_preds, targets)
    return "mae", mae(head_or_preds, targets)


def _ridge(x, y, ridge: float) -> LinearHead:
    x_mean, y_mean = x.mean(axis=0), y.mean()
    xc, yc = x - x_mean, y - y_mean
    gram = xc.T @ xc
    alpha = ridge * np.trace(gram) / gram.shape[0]
    a = gram + alpha * np.eye(gram.shape[0])
    try:
        w = np.linalg.solve(a, xc.T @ yc)
    except np.linalg.LinAlgError:
        raise DegenerateDesign("design matrix is singular after regularization") from None
    if not np.all(np.isfinite(w)):
        raise DegenerateDesign("ridge solution is not finite")
    return LinearHead(w, float(y_mean - x_mean @ w), "regression")


def _logistic_gd(x, y, tol: float = 1e-6, max_iter: int = 10_000) -> LinearHead:
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    # step 1/L with L the Lipschitz constant of the mean logistic loss gradient
    lipschitz = 0.25 * np.linalg.eigvalsh(xa.T @ xa / n)[-1]
    lr = 1.0 / lipschitz
    theta = np.zeros(d + 1)
    for _ in range(max_iter):
        grad = xa.T @ (expit(xa @ theta) - y) / n
        if np.max(np.abs(grad)) < tol:
            break
        theta -= lr * grad
    return LinearHead(theta[:d], float(theta[d]), "binary")


def linear_probe(embeddings, targets, task: str = "regression", ridge: float = 1e-4,
                 eval_embeddings=None, eval_targets=None):
    """Fit a linear head on frozen embeddings.

    Regression uses closed-form ridge with penalty ``ridge * trace(X^T X) / d``
    on centered data (intercept unpenalized); binary tasks use full-batch
    logistic-regression gradient descent. The report scores the eval split
    when given, the training data otherwise.
    """
    x = np.asarray(embeddings, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ShapeMismatch(f"embeddings {x.shape} vs {len(y)} targets")
    if x.shape[0] < 2:
        raise InsufficientData("linear probe needs N >= 2")
    if task == "regression":
        head = _ridge(x, y, ridge)
    elif task == "binary":
        head = _logistic_gd(x, y)
    else:
        raise InvalidConfig(f"unknown task {task!r}")
    ex, ey = (x, y) if eval_embeddings is None else (np.asarray(eval_embeddings, float), eval_targets)
    name, value = score(head.predict(ex), ey, task)
    return head, MetricReport(name, value, len(ey), {"task": task, "regime": "LP"})


@dataclass(frozen=True)
class FinetuneConfig:
    task: str = "regression"
    epochs: int = 35
    learning_rate: float = 1e-3
    batch_size: int = 128
    optimizer: str = "adam"
    freeze_encoder: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("regression", "binary"):
            raise InvalidConfig(f"unknown task {self.task!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be >= 1")


@dataclass
class FinetuneResult:
    state: enc.EncoderState
    head: LinearHead
    loss_history: list[float]
    report: MetricReport


def _head_loss(out, y, task):
    """Mean loss and its gradient with respect to the head output."""
    if task == "regression":
        r = out - y
        return float(np.mean(np.abs(r))), np.sign(r) / len(y)
    p = expit(out)
    # log(1 + e^x) - y x, stable form
    loss = np.mean(np.logaddexp(0.0, out) - y * out)
    return float(loss), (p - y) / len(y)


def _constant_bias(y, task: str) -> float:
    if task == "binary":
        p = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
        return float(np.log(p / (1 - p)))
    return float(np.median(y))


def finetune(state: enc.EncoderState, head: LinearHead | None, images, targets,
             config: FinetuneConfig = FinetuneConfig(), eval_images=None, eval_targets=None) -> FinetuneResult:
    """Train a linear head on the encoder output, jointly with the encoder.

    Regression minimizes L1 loss, binary tasks the logistic loss. With
    ``freeze_encoder`` only the head moves. A default head has zero weights
    and starts at the best constant predictor (median, or prevalence
    log-odds), so early steps are spent on the embedding direction rather
    than on walking the intercept to the target's scale.
    """
    x = np.asarray(images, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != len(y):
        raise ShapeMismatch(f"{x.shape[0]} images vs {len(y)} targets")
    if len(y) < 1:
        raise EmptyTrain("no fine-tuning samples")
    d = state.config.embedding_dim
    if head is None:
        head = LinearHead(np.zeros(d), _constant_bias(y, config.task), config.task)
    else:
        head = LinearHead(head.weight.copy(), head.bias, config.task)
    n_enc = 2 * state.n_encoder_layers
    enc_params = state.params()[:n_enc]

    def params():
        return ([] if config.freeze_encoder else enc_params) + [head.weight, np.array([head.bias])]

    opt = Optimizer(params(), config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    for _ in range(config.epochs):
        losses = []
        for idx in batches(len(y), config.batch_size, rng) if config.batch_size < len(y) else [np.arange(len(y))]:
            if config.freeze_encoder:
                v = enc.embed(state, x[idx])
            else:
                v, _, cache = enc.forward(state, x[idx])
            loss, g_out = _head_loss(v @ head.weight + head.bias, y[idx], config.task)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"fine-tuning loss became {loss}")
            g_w = v.T @ g_out
            g_b = np.array([g_out.sum()])
            grads = [g_w, g_b]
            if not config.freeze_encoder:
                enc_grads, _ = enc.backward(state, cache, grad_v=np.outer(g_out, head.weight))
                grads = enc_grads[:n_enc] + grads
            new = opt.step(params(), grads)
            head = LinearHead(new[-2], float(new[-1][0]), config.task)
            if not config.freeze_encoder:
                enc_params = new[:-2]
                state = state.with_params(enc_params + state.params()[n_enc:])
            losses.append(loss)
        history.append(float(np.mean(losses)))

    ex = x if eval_images is None else np.asarray(eval_images, dtype=float)
    ey = y if eval_targets is None else np.asarray(eval_targets, dtype=float)
    name, value = score(head.predict(enc.embed(state, ex)), ey, config.task)
    report = MetricReport(name, value, len(ey), {"task": config.task, "regime": "FT"})
    return FinetuneResult(state, head, history, report)
