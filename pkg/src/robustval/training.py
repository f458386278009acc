"""Desk-scale trainers and the model-backed utility oracle.

Models are implemented directly on numpy so that training is fast,
dependency-free and bit-reproducible: binary logistic regression (stable
sigmoid cross-entropy) and a least-squares linear scorer thresholded at 0.5.
Optimizers: full-batch gradient descent, minibatch SGD with per-epoch
shuffling, and smoothed gradient descent, which averages gradients at
Gaussian-jittered parameter points:

    theta <- theta - lr * (1/L) * sum_j grad(theta + radius * N(0, I)).

A trainer is deterministic exactly when nothing consumes randomness:
full-batch GD from a zeros init.  Every other combination is a stochastic
utility whose randomness is replayable from (config seed, eval seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache import EvalCache, cache_key
from .datasets import TabularDataset
from .errors import InvalidParam, NumericalDivergence
from .oracles import UtilityOracle
from .seeding import stable_hash
from .subsets import SubsetKey

MODELS = ("logistic_regression", "linear")
OPTIMIZERS = ("full_batch_gd", "minibatch_sgd", "smoothed_gd")
INITS = ("zeros", "gaussian")


@dataclass(frozen=True)
class TrainerConfig:
    model: str = "logistic_regression"
    optimizer: str = "full_batch_gd"
    learning_rate: float = 0.5
    epochs: int = 150
    batch_size: int = 8
    init: str = "zeros"
    init_scale: float = 0.1
    smoothing_radius: float = 0.0
    smoothing_samples: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise InvalidParam(f"model must be one of {MODELS}, got {self.model!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParam(
                f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )
        if self.init not in INITS:
            raise InvalidParam(f"init must be one of {INITS}, got {self.init!r}")
        if self.learning_rate <= 0:
            raise InvalidParam(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise InvalidParam(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidParam(f"batch_size must be >= 1, got {self.batch_size}")
        if self.init_scale < 0:
            raise InvalidParam(f"init_scale must be >= 0, got {self.init_scale}")
        if self.smoothing_samples < 1:
            raise InvalidParam(
                f"smoothing_samples must be >= 1, got {self.smoothing_samples}"
            )
        if self.optimizer == "smoothed_gd" and self.smoothing_radius <= 0:
            raise InvalidParam("smoothed_gd needs smoothing_radius > 0")

    @property
    def is_deterministic(self) -> bool:
        return self.optimizer == "full_batch_gd" and self.init == "zeros"


def loss_and_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, model: str
) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient w.r.t. [weights..., bias]."""
    w, b = params[:-1], params[-1]
    z = X @ w + b
    m = X.shape[0]
    if model == "logistic_regression":
        # mean of log(1 + e^z) - y z, the numerically stable cross-entropy
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        p = _sigmoid(z)
        resid = p - y
    else:  # linear least squares on 0/1 targets
        resid = z - y
        loss = float(np.mean(resid**2))
        resid = 2.0 * resid
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid / m
    grad[-1] = float(np.mean(resid))
    return loss, grad


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(config: TrainerConfig, d: int, rng: np.random.Generator) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros(d + 1, dtype=float)
    return config.init_scale * rng.standard_normal(d + 1)


def train(
    config: TrainerConfig,
    dataset: TabularDataset,
    rows: SubsetKey | Sequence[int] | None = None,
    *,
    rng: np.random.Generator | None = None,
    inclusion_probs: np.ndarray | None = None,
) -> np.ndarray:
    """Fit on the selected rows; returns parameters [weights..., bias].

    An empty selection returns the initial parameters untouched.  With
    ``inclusion_probs`` each selected row enters each epoch's loss with its
    own Bernoulli probability (independent draws per epoch); an epoch whose
    draw excludes every row performs no update.
    """
    if dataset.num_classes > 2:
        raise InvalidParam(
            f"built-in trainers are binary; dataset has {dataset.num_classes} classes"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if rows is None:
        idx = np.arange(dataset.n_points)
    elif isinstance(rows, SubsetKey):
        idx = np.array(rows.members, dtype=int)
    else:
        idx = np.asarray(list(rows), dtype=int)
    params = init_params(config, dataset.n_features, rng)
    if idx.size == 0:
        return params
    X_all, y_all = dataset.features[idx], dataset.labels[idx].astype(float)
    probs = None
    if inclusion_probs is not None:
        probs = np.asarray(inclusion_probs, dtype=float)[idx]
        if probs.shape != (idx.size,) or np.any((probs < 0) | (probs > 1)):
            raise InvalidParam("inclusion_probs must be per-row values in [0, 1]")

    for _ in range(config.epochs):
        if probs is not None:
            active = rng.random(idx.size) < probs
            if not active.any():
                continue
            X, y = X_all[active], y_all[active]
        else:
            X, y = X_all, y_all
        params = _epoch_step(config, params, X, y, rng)
        if not np.all(np.isfinite(params)):
            raise NumericalDivergence(
                f"non-finite parameters after an epoch ({config.optimizer})"
            )
    return params


def _epoch_step(
    config: TrainerConfig,
    params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    lr = config.learning_rate
    if config.optimizer == "full_batch_gd":
        _, grad = loss_and_grad(params, X, y, config.model)
        return params - lr * grad
    if config.optimizer == "minibatch_sgd":
        order = rng.permutation(X.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grad = loss_and_grad(params, X[batch], y[batch], config.model)
            params = params - lr * grad
        return params
    # smoothed_gd: average gradients at jittered parameter points
    acc = np.zeros_like(params)
    for _ in range(config.smoothing_samples):
        jitter = config.smoothing_radius * rng.standard_normal(params.shape)
        _, grad = loss_and_grad(params + jitter, X, y, config.model)
        acc += grad
    return params - lr * acc / config.smoothing_samples


def predict(params: np.ndarray, X: np.ndarray, model: str) -> np.ndarray:
    z = X @ params[:-1] + params[-1]
    threshold = 0.0 if model == "logistic_regression" else 0.5
    return (z > threshold).astype(int)


def accuracy(params: np.ndarray, X: np.ndarray, y: np.ndarray, model: str) -> float:
    return float(np.mean(predict(params, X, model) == y))


def majority_class_accuracy(validation: TabularDataset) -> float:
    counts = np.bincount(validation.labels)
    return float(counts.max() / validation.n_points)


class TrainerOracle(UtilityOracle):
    """U(S) = validation accuracy of a model trained on the rows in S.

    The empty subset scores as the majority-class validation accuracy (the
    untrained predictor).  ``trainings`` counts actual model fits, so cache
    effectiveness is auditable.
    """

    def __init__(
        self,
        train_data: TabularDataset,
        validation: TabularDataset,
        config: TrainerConfig,
        *,
        cache: EvalCache | None = None,
    ):
        self.train_data = train_data
        self.validation = validation
        self.config = config
        self.cache = cache
        self.n = train_data.n_points
        self.deterministic = config.is_deterministic
        self.description = (
            f"trainer[{config.model}/{config.optimizer}/lr={config.learning_rate:g}/"
            f"ep={config.epochs}/init={config.init}/seed={config.seed}]"
            f"@{train_data.content_hash()}+{validation.content_hash()}"
        )
        self.trainings = 0
        self._empty_score = majority_class_accuracy(validation)

    def evaluate(self, subset: SubsetKey, eval_seed: int | None = None) -> float:
        if subset.size == 0:
            return self._empty_score
        key = None
        if self.cache is not None:
            key_seed = 0 if self.deterministic else (eval_seed or 0)
            key = cache_key(self.description, subset.text, key_seed)
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        score = self._fit_and_score(subset, eval_seed)
        if self.cache is not None and key is not None:
            key_seed = 0 if self.deterministic else (eval_seed or 0)
            self.cache.put(key, subset.text, key_seed, score)
        return score

    def _fit_and_score(self, subset: SubsetKey, eval_seed: int | None) -> float:
        self.trainings += 1
        rng = np.random.default_rng(
            stable_hash("fit", self.config.seed, subset.text, eval_seed)
        )
        params = train(self.config, self.train_data, subset, rng=rng)
        return accuracy(
            params, self.validation.features, self.validation.labels, self.config.model
        )


def make_oracle(
    dataset: TabularDataset,
    validation: TabularDataset,
    config: TrainerConfig,
    metric: str = "accuracy",
    *,
    cache: EvalCache | None = None,
) -> TrainerOracle:
    """The held-out-metric utility oracle over subsets of ``dataset``."""
    if metric != "accuracy":
        raise InvalidParam(f"unsupported metric {metric!r}; only 'accuracy'")
    if validation.n_points < 1:
        raise InvalidParam("validation split must be non-empty")
    return TrainerOracle(dataset, validation, config, cache=cache)
