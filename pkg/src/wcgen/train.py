"""SGD-with-momentum training with the weight-correlation penalty.

The regularised objective is J(theta) + alpha * sum_l g(rho(w_l)); the
penalty gradient is added to every multi-neuron weight array each
mini-batch and never touches biases. alpha = 0 reduces bit-exactly to
plain SGD with momentum.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn, wc


class NumericAbortError(RuntimeError):
    """NaN/Inf appeared in the loss or parameters during training."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    alpha: float = 0.0
    seed: int = 0
    g_cap: float = wc.G_CAP
    shuffle: bool = True
    early_stop_window: float = 0.25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_error: float
    test_loss: float
    test_error: float
    mean_wc: float
    train_objective: float         # regularised J-tilde on the train set


@dataclass
class TrainReport:
    config: TrainConfig
    history: list = field(default_factory=list)
    best_epoch: int = -1

    def rows(self):
        return [asdict(r) for r in self.history]

    COLUMNS = (
        "epoch", "train_loss", "train_error", "test_loss", "test_error",
        "mean_wc", "train_objective",
    )


def mean_wc(params):
    """Average rho over trainable layers with at least two neurons/filters."""
    rhos = []
    for i in params.trainable_indices():
        w = params.weights[i]
        if (w.ndim == 2 and w.shape[1] >= 2) or (w.ndim == 4 and w.shape[3] >= 2):
            rhos.append(wc.layer_correlation(w).rho)
    if not rhos:
        raise wc.CorrelationUndefinedError("network has no multi-neuron layers")
    return float(np.mean(rhos))


def network_g(params, cap=wc.G_CAP):
    """Sum of the correlation penalty g over all multi-neuron layers."""
    total = 0.0
    for i in params.trainable_indices():
        w = params.weights[i]
        if (w.ndim == 2 and w.shape[1] >= 2) or (w.ndim == 4 and w.shape[3] >= 2):
            total += wc.g_term(wc.layer_correlation(w), cap)
    return total


def early_stop_select(test_losses, window_frac=0.25):
    """Index of the minimum loss within the final window; ties earliest."""
    n = len(test_losses)
    if n == 0:
        raise ValueError("empty history")
    k = max(1, math.ceil(n * window_frac))
    start = n - k
    window = test_losses[start:]
    return start + int(np.argmin(window))


def train(params, train_data, test_data, cfg):
    """Train in place; returns a TrainReport with per-epoch metrics.

    train_data / test_data are (inputs, labels) pairs; test_data may be
    None, in which case test metrics are NaN and early stopping uses the
    train loss.
    """
    x_train, y_train = train_data
    y_train = np.asarray(y_train)
    n = len(x_train)
    report = TrainReport(config=cfg)
    velocities_w = [None if w is None else np.zeros_like(w) for w in params.weights]
    velocities_b = [None if b is None else np.zeros_like(b) for b in params.biases]
    penalised = [
        i for i in params.trainable_indices()
        if (params.weights[i].ndim == 2 and params.weights[i].shape[1] >= 2)
        or (params.weights[i].ndim == 4 and params.weights[i].shape[3] >= 2)
    ]
    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            rng = np.random.default_rng(
                np.random.SeedSequence([0x5408FF, int(cfg.seed), epoch])
            )
            order = rng.permutation(n)
        else:
            order = np.arange(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, (dw, db) = nn.loss_and_grad(params, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise NumericAbortError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            if cfg.alpha > 0.0:
                for i in penalised:
                    dw[i] = dw[i] + cfg.alpha * wc.wcd_gradient(
                        params.weights[i], cfg.g_cap
                    )
            for i in params.trainable_indices():
                velocities_w[i] = cfg.momentum * velocities_w[i] - cfg.learning_rate * dw[i]
                velocities_b[i] = cfg.momentum * velocities_b[i] - cfg.learning_rate * db[i]
                params.weights[i] = params.weights[i] + velocities_w[i]
                params.biases[i] = params.biases[i] + velocities_b[i]
                if not np.all(np.isfinite(params.weights[i])):
                    raise NumericAbortError(
                        f"non-finite weights at epoch {epoch}, batch {batch_no}"
                    )
        train_loss, train_error = nn.evaluate(params, x_train, y_train)
        if test_data is not None:
            test_loss, test_error = nn.evaluate(params, test_data[0], test_data[1])
        else:
            test_loss, test_error = math.nan, math.nan
        rho_bar = mean_wc(params)
        objective = train_loss + cfg.alpha * network_g(params, cfg.g_cap)
        report.history.append(
            EpochRecord(epoch, train_loss, train_error, test_loss, test_error,
                        rho_bar, objective)
        )
    stop_on = [
        r.test_loss if test_data is not None else r.train_loss
        for r in report.history
    ]
    report.best_epoch = early_stop_select(stop_on, cfg.early_stop_window)
    return report
