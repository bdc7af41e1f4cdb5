"""Adam optimizer, training loop, and evaluation.

Determinism contract: given the same network initialization, data and
config seed, two runs produce bitwise-identical parameter trajectories
in double precision. The loop draws shuffling and dropout from two
separate streams spawned off the config seed, so toggling dropout never
reorders the data.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError
from .network import Network
from .objectives import error_rate, r_squared, rmse_loss

__all__ = ["TrainConfig", "AdamState", "adam_step", "train", "evaluate", "seed_streams"]


def seed_streams(seed: int):
    """Spawn the three independent RNG streams a run derives from its
    seed: (init, shuffle, dropout). Initialization happens outside the
    training loop, so the split lives here where both sides can use it."""
    init, shuffle, dropout = np.random.SeedSequence(seed).spawn(3)
    return init, shuffle, dropout


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    Only the learning rate and epoch count come from the experimental
    protocol this library reproduces; the Adam moment constants are the
    optimizer's standard defaults, and batch size is a free choice
    recorded here so runs are reproducible.
    """

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    dropout_rate: float = 0.0
    task: str = "classification"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("Adam betas must be in [0, 1)")
        if self.task not in ("classification", "regression"):
            raise ConfigurationError(f"unknown task {self.task!r}")


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step count."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], t=0)


def adam_step(params, grads, state: AdamState, config: TrainConfig,
              param_names=None, batch_index=None):
    """One bias-corrected Adam update, in place on the parameter arrays.

    Non-finite gradients abort the step with a diagnostic naming the
    offending parameter and the batch it came from.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigurationError("params, grads and optimizer state lengths differ")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            name = param_names[i] if param_names else f"parameter {i}"
            where = "" if batch_index is None else f" at batch index {batch_index}"
            raise NumericError(f"non-finite gradient in {name}{where}")
    b1, b2 = config.beta1, config.beta2
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, state


def _node_tensor(features: np.ndarray) -> np.ndarray:
    """(M, N) feature matrix viewed as a (M, N, 1) node tensor."""
    return features[:, :, None] if features.ndim == 2 else features


def evaluate(net: Network, data, chunk_size: int = 1024) -> dict:
    """Eval-mode metrics: error rate for classifiers, R^2 and RMSE for
    regressors. Runs in chunks so large sets never materialize a full
    gathered tensor."""
    x = _node_tensor(data.features)
    if x.shape[0] == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    preds = np.concatenate(
        [net.predict(x[i : i + chunk_size]) for i in range(0, x.shape[0], chunk_size)]
    )
    if net.task == "classification":
        return {"error_rate": error_rate(preds, data.targets), "n": int(x.shape[0])}
    loss, _ = rmse_loss(preds, np.asarray(data.targets, dtype=np.float64))
    return {"r_squared": r_squared(preds, data.targets), "rmse": loss, "n": int(x.shape[0])}


def train(net: Network, data, config: TrainConfig, eval_data=None,
          log_path=None) -> list:
    """Seeded mini-batch training; returns the per-epoch history.

    Each history record is {epoch, train_loss, eval_metric, wall_ms,
    seed}; eval_metric is measured on ``eval_data`` (or the training
    set when none is held out). When ``log_path`` is given, records are
    appended there as JSON lines while training runs.
    """
    x = _node_tensor(data.features)
    y = np.asarray(data.targets)
    m_total = x.shape[0]
    if m_total == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    batch = config.batch_size
    if batch > m_total:
        warnings.warn(f"batch_size {batch} exceeds dataset size {m_total}; clamping")
        batch = m_total

    _, shuffle_seq, dropout_seq = seed_streams(config.seed)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    held_out = eval_data if eval_data is not None else data
    metric_key = "error_rate" if net.task == "classification" else "r_squared"
    params = net.params()
    names = net.param_names()
    state = AdamState.for_params(params)
    history = []
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(m_total)
            loss_sum = 0.0
            for batch_index, lo in enumerate(range(0, m_total, batch)):
                take = order[lo : lo + batch]
                scores = net.forward(x[take], mode="train", rng=dropout_rng)
                loss, grad = net.head_loss(scores, y[take])
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, batch index {batch_index}"
                    )
                net.backward(grad)
                adam_step(params, net.grads(), state, config,
                          param_names=names, batch_index=batch_index)
                loss_sum += loss * take.size
            record = {
                "epoch": epoch,
                "train_loss": loss_sum / m_total,
                "eval_metric": evaluate(net, held_out)[metric_key],
                "wall_ms": (time.perf_counter() - started) * 1000.0,
                "seed": config.seed,
            }
            history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
    finally:
        if log_fh is not None:
            log_fh.close()
    return history
