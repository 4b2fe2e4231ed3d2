"""Mini-batch trainer with decoupled weight decay, plus a closed-form oracle.

The optimizer is the standard first-order adaptive-moment method with the
weight-decay term applied directly to the parameters (decoupled from the
adaptive gradient step). Early stopping watches validation MSE; the returned
model carries the best-validation parameters. Everything is deterministic
given the config seed: the shuffle order of epoch e is drawn from a generator
seeded by (seed, e).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .models import Forecaster, LinearModel


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    max_epochs: int = 200
    patience: int = 30
    batch_size: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


# Per-family training defaults; overridable through config.
LINEAR_FAMILY_TRAIN = TrainConfig(learning_rate=1e-3, weight_decay=0.01, max_epochs=200)
MLP_TRAIN = TrainConfig(learning_rate=1e-4, weight_decay=1e-4, max_epochs=300)


def default_train_config(model_name: str) -> TrainConfig:
    return MLP_TRAIN if model_name == "mlp" else LINEAR_FAMILY_TRAIN


@dataclass
class TrainResult:
    model: Forecaster
    train_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")
    epochs_run: int = 0


class AdamW:
    """Adaptive-moment steps with decoupled weight decay on named arrays."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for key, p in params.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * ((m / bc1) / (np.sqrt(v / bc2) + c.eps) + c.weight_decay * p)


def _val_mse(model: Forecaster, X: np.ndarray, Y: np.ndarray) -> float:
    resid = model.forward(X) - Y
    return float(np.mean(resid * resid))


def train(
    model: Forecaster,
    train_windows: tuple[np.ndarray, np.ndarray],
    val_windows: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch training with early stopping on validation MSE.

    Stops once validation MSE has failed to improve for ``patience``
    consecutive epochs (patience 0 stops at the first non-improving epoch)
    or after ``max_epochs``. The model is left holding, and the result
    returns, the parameters of the best validation epoch.
    """
    X_tr, Y_tr = train_windows
    X_va, Y_va = val_windows
    if len(X_tr) == 0 or len(X_va) == 0:
        raise ValueError("train and validation window sets must be non-empty")

    opt = AdamW(model.params, cfg)
    result = TrainResult(model=model)
    best_params = model.copy_params()
    stall = 0
    n = X_tr.shape[0]
    for epoch in range(cfg.max_epochs):
        order = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), epoch))).permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(X_tr[idx], Y_tr[idx])
            if not np.isfinite(loss):
                scale = max(float(np.max(np.abs(v))) for v in model.params.values())
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (lr={cfg.learning_rate}, "
                    f"weight_decay={cfg.weight_decay}, max |param|={scale:.3g}); "
                    "reduce the learning rate or rescale the inputs"
                )
            opt.step(model.params, grads)
            epoch_losses.append(loss)
        result.train_history.append(float(np.mean(epoch_losses)))
        val = _val_mse(model, X_va, Y_va)
        result.val_history.append(val)
        result.epochs_run = epoch + 1
        if val < result.best_val_mse:
            result.best_val_mse = val
            result.best_epoch = epoch
            best_params = model.copy_params()
            stall = 0
        else:
            stall += 1
            if stall >= max(1, cfg.patience):
                break
    model.set_params(best_params)
    return result


def least_squares_oracle(train_windows: tuple[np.ndarray, np.ndarray], ridge: float = 1e-8) -> LinearModel:
    """Closed-form ridge solution of the affine history-to-horizon map.

    Solves the (H+1)-column normal equations with a small ridge floor, giving
    the optimal LinearModel against which the iterative trainer is checked.
    """
    X, Y = train_windows
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, H = X.shape
    if n < H + 1:
        raise ValueError(f"need at least H+1={H + 1} windows for the oracle, got {n}")
    A = np.concatenate([X, np.ones((n, 1))], axis=1)
    gram = A.T @ A + ridge * np.eye(H + 1)
    theta = np.linalg.solve(gram, A.T @ Y)  # (H+1, F)
    model = LinearModel(H, Y.shape[1], seed=0)
    model.params["W"][...] = theta[:H].T
    model.params["b"][...] = theta[H]
    return model


def train_or_oracle_mse(model: Forecaster, X: np.ndarray, Y: np.ndarray) -> float:
    """Convenience: forecast MSE of a frozen model over a window set."""
    return _val_mse(model, X, Y)


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=int(seed))
