"""From-scratch feed-forward regressor with evolving sparse connectivity.

A stack of fully-described numpy layers: S-shaped rectified linear units with
four trainable parameters per hidden unit, inverted dropout, RMSProp, and a
one-unit sigmoid head for rate-valued targets. In sparse mode each layer
carries a boolean connectivity mask initialized as an Erdos-Renyi random
graph; after each training epoch the smallest-magnitude live weights are
pruned and the same number of fresh random connections grown, keeping the
nonzero parameter count constant.

Everything is double precision and driven by one seeded generator per network,
so identical (config, data, seed) reproduce identical weights bit for bit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .gambles import ValidationError

log = logging.getLogger(__name__)

SPARSE_PARAM_LIMIT = 10_000
TR_INIT = 1e3  # right-threshold start: far out, so units begin ReLU-like
Z_CLAMP = 36.0  # keeps sigmoid strictly inside (0, 1) in float64


class TrainingError(RuntimeError):
    """Raised when optimization produces a non-finite loss."""


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden: tuple[int, ...] = (200, 275, 100)
    dropout: float = 0.15
    sparse: bool = True
    epsilon: float = 5.0
    zeta: float = 0.3
    learning_rate: float = 0.001
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim < 1 or any(w < 1 for w in self.hidden):
            raise ValidationError("layer widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValidationError("zeta must lie in [0, 1]")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def dims(self) -> list[int]:
        return [self.input_dim, *self.hidden, 1]


def srelu(x: np.ndarray, params: np.ndarray) -> np.ndarray:
    """S-shaped rectifier. ``params`` rows are (t_l, a_l, t_r, a_r) per unit."""
    t_l, a_l, t_r, a_r = params
    return np.where(
        x >= t_r, t_r + a_r * (x - t_r), np.where(x <= t_l, t_l + a_l * (x - t_l), x)
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -Z_CLAMP, Z_CLAMP)))


class SparseNetwork:
    """Layered MLP with per-layer connectivity masks and optimizer state."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        dims = config.dims()
        self.weights: list[np.ndarray] = []
        self.masks: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self.srelu_params: list[np.ndarray] = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = self.rng.uniform(-limit, limit, size=(n_in, n_out))
            if config.sparse:
                p_keep = min(1.0, config.epsilon * (n_in + n_out) / (n_in * n_out))
                mask = self.rng.random((n_in, n_out)) < p_keep
            else:
                mask = np.ones((n_in, n_out), dtype=bool)
            self.weights.append(np.where(mask, w, 0.0))
            self.masks.append(mask)
            self.biases.append(np.zeros(n_out))
        for width in config.hidden:
            p = np.zeros((4, width))
            p[2] = TR_INIT
            p[3] = 1.0
            self.srelu_params.append(p)
        self.cache_w = [np.zeros_like(w) for w in self.weights]
        self.cache_b = [np.zeros_like(b) for b in self.biases]
        self.cache_s = [np.zeros_like(s) for s in self.srelu_params]
        self.feature_mean = np.zeros(config.input_dim)
        self.feature_std = np.ones(config.input_dim)
        self.epoch = 0
        if config.sparse and self.parameter_count() >= SPARSE_PARAM_LIMIT:
            raise ValidationError(
                f"epsilon={config.epsilon} gives {self.parameter_count()} parameters; "
                f"sparse networks must stay under {SPARSE_PARAM_LIMIT}"
            )

    # -- bookkeeping ----------------------------------------------------------

    def parameter_count(self) -> int:
        """Nonzero weights plus biases plus per-unit activation parameters."""
        n = sum(int(m.sum()) for m in self.masks)
        n += sum(b.size for b in self.biases)
        n += sum(s.size for s in self.srelu_params)
        return n

    def fit_normalizer(self, X: np.ndarray) -> None:
        """Freeze per-feature z-score constants (zero-variance columns pass through)."""
        self.feature_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.feature_std = np.where(std < 1e-12, 1.0, std)

    def _normalize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise ValidationError(
                f"expected features of width {self.config.input_dim}, got shape {X.shape}"
            )
        return (X - self.feature_mean) / self.feature_std

    # -- forward / backward ---------------------------------------------------

    def _forward_full(self, X: np.ndarray, train_mode: bool):
        a = self._normalize(X)
        zs, acts, drops = [], [a], []
        keep = 1.0 - self.config.dropout
        n_hidden = len(self.config.hidden)
        for i in range(n_hidden):
            z = a @ self.weights[i] + self.biases[i]
            h = srelu(z, self.srelu_params[i])
            if train_mode and self.config.dropout > 0.0:
                dmask = (self.rng.random(h.shape) < keep) / keep
                h = h * dmask
            else:
                dmask = None
            zs.append(z)
            drops.append(dmask)
            acts.append(h)
            a = h
        z_out = a @ self.weights[-1] + self.biases[-1]
        pred = _sigmoid(z_out)
        return pred, (zs, acts, drops, pred)

    def forward(self, X: np.ndarray, train_mode: bool = False) -> np.ndarray:
        """Predictions in (0, 1); eval mode is deterministic."""
        pred, _ = self._forward_full(X, train_mode)
        return pred.ravel()

    predict = forward

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean((self.forward(X) - np.asarray(y)) ** 2))

    def _backward(self, cache, y: np.ndarray):
        zs, acts, drops, pred = cache
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        batch = y.shape[0]
        delta = (2.0 / batch) * (pred - y) * pred * (1.0 - pred)
        g_w = [None] * len(self.weights)
        g_b = [None] * len(self.biases)
        g_s = [None] * len(self.srelu_params)
        g_w[-1] = acts[-1].T @ delta
        g_b[-1] = delta.sum(axis=0)
        back = delta @ self.weights[-1].T
        for i in reversed(range(len(self.config.hidden))):
            if drops[i] is not None:
                back = back * drops[i]
            z = zs[i]
            t_l, a_l, t_r, a_r = self.srelu_params[i]
            right = z >= t_r
            left = z <= t_l
            gs = np.empty_like(self.srelu_params[i])
            gs[0] = (back * left).sum(axis=0) * (1.0 - a_l)
            gs[1] = (back * np.where(left, z - t_l, 0.0)).sum(axis=0)
            gs[2] = (back * right).sum(axis=0) * (1.0 - a_r)
            gs[3] = (back * np.where(right, z - t_r, 0.0)).sum(axis=0)
            g_s[i] = gs
            delta = back * np.where(right, a_r, np.where(left, a_l, 1.0))
            g_w[i] = acts[i].T @ delta
            g_b[i] = delta.sum(axis=0)
            back = delta @ self.weights[i].T
        for i, m in enumerate(self.masks):
            g_w[i] = np.where(m, g_w[i], 0.0)
        return g_w, g_b, g_s

    def gradients(self, X: np.ndarray, y: np.ndarray):
        """Analytic MSE gradients in eval mode (no dropout); for verification."""
        _, cache = self._forward_full(X, train_mode=False)
        return self._backward(cache, y)

    # -- optimization ---------------------------------------------------------

    def _rms_step(self, param, grad, cache, lr):
        d, eps = self.config.rms_decay, self.config.rms_epsilon
        cache *= d
        cache += (1.0 - d) * grad * grad
        param -= lr * grad / (np.sqrt(cache) + eps)

    def train_epoch(
        self, X: np.ndarray, y: np.ndarray, batch_size: int | None = None, lr: float | None = None
    ) -> float:
        """One shuffled pass of RMSProp; returns the epoch's mean squared error."""
        y = np.asarray(y, dtype=np.float64)
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValidationError("targets must lie in [0, 1]")
        batch_size = batch_size or self.config.batch_size
        lr = self.config.learning_rate if lr is None else lr
        order = self.rng.permutation(len(y))
        total_sq = 0.0
        for start in range(0, len(y), batch_size):
            idx = order[start : start + batch_size]
            pred, cache = self._forward_full(X[idx], train_mode=True)
            total_sq += float(np.sum((pred.ravel() - y[idx]) ** 2))
            g_w, g_b, g_s = self._backward(cache, y[idx])
            for i in range(len(self.weights)):
                self._rms_step(self.weights[i], g_w[i], self.cache_w[i], lr)
                self.weights[i] *= self.masks[i]
                self._rms_step(self.biases[i], g_b[i], self.cache_b[i], lr)
            for i in range(len(self.srelu_params)):
                self._rms_step(self.srelu_params[i], g_s[i], self.cache_s[i], lr)
        mean_loss = total_sq / len(y)
        if not np.isfinite(mean_loss):
            raise TrainingError(f"non-finite loss at epoch {self.epoch}: {mean_loss}")
        self.epoch += 1
        return mean_loss

    def evolve_topology(self, rng: np.random.Generator | None = None) -> None:
        """Prune the zeta fraction of smallest live weights per layer and grow
        the same number of new random connections; total count is preserved."""
        if not self.config.sparse:
            raise ValidationError("evolve_topology requires sparse mode")
        rng = rng or self.rng
        dims = self.config.dims()
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            mask = self.masks[i]
            rows, cols = np.nonzero(mask)
            nnz = len(rows)
            k = int(np.floor(self.config.zeta * nnz))
            if k == 0:
                continue
            vals = np.abs(self.weights[i][rows, cols])
            order = np.lexsort((cols, rows, vals))  # |w| asc, ties by (row, col)
            drop = order[:k]
            mask[rows[drop], cols[drop]] = False
            self.weights[i][rows[drop], cols[drop]] = 0.0
            self.cache_w[i][rows[drop], cols[drop]] = 0.0
            vacant = np.flatnonzero(~mask)
            grow = min(k, len(vacant))
            if grow < k:
                log.warning("layer %d: only %d vacant positions, growing %d of %d", i, len(vacant), grow, k)
            if grow == 0:
                continue
            chosen = vacant[rng.choice(len(vacant), size=grow, replace=False)]
            r, c = np.unravel_index(chosen, mask.shape)
            limit = np.sqrt(6.0 / (n_in + n_out))
            mask[r, c] = True
            self.weights[i][r, c] = rng.uniform(-limit, limit, size=grow)
            self.cache_w[i][r, c] = 0.0

    def train(
        self,
        X: np.ndarray,
        y: np.ndarray,
        epochs: int,
        batch_size: int | None = None,
        lr: float | None = None,
        evolve: bool | None = None,
        val: tuple[np.ndarray, np.ndarray] | None = None,
        patience: int | None = None,
        evolve_until: int | None = None,
    ) -> dict:
        """Multi-epoch driver with optional topology evolution and early stopping.

        With a validation set, the best-scoring state is restored at the end;
        ``patience`` epochs without improvement stop training early.
        ``evolve_until`` freezes the topology after that many epochs so late
        training converges without the prune/regrow churn.
        """
        if evolve is None:
            evolve = self.config.sparse
        history: dict = {"train_loss": [], "val_mse": []}
        best = (np.inf, -1, None)
        for e in range(epochs):
            train_loss = self.train_epoch(X, y, batch_size=batch_size, lr=lr)
            history["train_loss"].append(train_loss)
            if val is not None:
                val_mse = self.loss(val[0], val[1])
                history["val_mse"].append(val_mse)
                if val_mse < best[0]:
                    best = (val_mse, e, self._snapshot())
                elif patience is not None and e - best[1] >= patience:
                    break
            if (evolve and self.config.sparse and e < epochs - 1
                    and (evolve_until is None or e < evolve_until)):
                self.evolve_topology()
        if val is not None and best[2] is not None:
            self._restore(best[2])
            history["best_epoch"] = best[1]
            history["best_val_mse"] = best[0]
        history["epochs_run"] = len(history["train_loss"])
        return history

    def finetune(
        self,
        X: np.ndarray,
        y: np.ndarray,
        learning_rate: float = 1e-6,
        epochs: int = 100,
        val: tuple[np.ndarray, np.ndarray] | None = None,
        patience: int | None = None,
        reset_optimizer: bool = True,
    ) -> dict:
        """Adapt a trained network gently: small learning rate, fixed topology."""
        if epochs == 0:
            return {"train_loss": [], "val_mse": [], "epochs_run": 0}
        if reset_optimizer:
            self.cache_w = [np.zeros_like(w) for w in self.weights]
            self.cache_b = [np.zeros_like(b) for b in self.biases]
            self.cache_s = [np.zeros_like(s) for s in self.srelu_params]
        return self.train(
            X, y, epochs, lr=learning_rate, evolve=False, val=val, patience=patience
        )

    # -- state ------------------------------------------------------------------

    def _snapshot(self):
        return (
            [w.copy() for w in self.weights],
            [m.copy() for m in self.masks],
            [b.copy() for b in self.biases],
            [s.copy() for s in self.srelu_params],
            [c.copy() for c in self.cache_w],
            [c.copy() for c in self.cache_b],
            [c.copy() for c in self.cache_s],
            self.epoch,
        )

    def _restore(self, snap) -> None:
        (self.weights, self.masks, self.biases, self.srelu_params,
         self.cache_w, self.cache_b, self.cache_s, self.epoch) = (
            [a.copy() for a in snap[0]],
            [a.copy() for a in snap[1]],
            [a.copy() for a in snap[2]],
            [a.copy() for a in snap[3]],
            [a.copy() for a in snap[4]],
            [a.copy() for a in snap[5]],
            [a.copy() for a in snap[6]],
            snap[7],
        )

    def save(self, path: str | Path) -> None:
        """Checkpoint everything needed to reload an identical predictor."""
        arrays = {
            "feature_mean": self.feature_mean,
            "feature_std": self.feature_std,
            "epoch": np.array(self.epoch),
        }
        for i in range(len(self.weights)):
            arrays[f"w{i}"] = self.weights[i]
            arrays[f"m{i}"] = self.masks[i]
            arrays[f"b{i}"] = self.biases[i]
            arrays[f"cw{i}"] = self.cache_w[i]
            arrays[f"cb{i}"] = self.cache_b[i]
        for i in range(len(self.srelu_params)):
            arrays[f"s{i}"] = self.srelu_params[i]
            arrays[f"cs{i}"] = self.cache_s[i]
        meta = {
            "version": 1,
            "config": asdict(self.config),
            "rng_state": self.rng.bit_generator.state,
        }
        np.savez_compressed(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "SparseNetwork":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != 1:
                raise ValidationError(f"unsupported checkpoint version {meta.get('version')!r}")
            cfg_dict = meta["config"]
            cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
            config = NetworkConfig(**cfg_dict)
            net = cls.__new__(cls)
            net.config = config
            net.rng = np.random.default_rng()
            net.rng.bit_generator.state = meta["rng_state"]
            n_layers = len(config.hidden) + 1
            net.weights = [data[f"w{i}"] for i in range(n_layers)]
            net.masks = [data[f"m{i}"] for i in range(n_layers)]
            net.biases = [data[f"b{i}"] for i in range(n_layers)]
            net.cache_w = [data[f"cw{i}"] for i in range(n_layers)]
            net.cache_b = [data[f"cb{i}"] for i in range(n_layers)]
            net.srelu_params = [data[f"s{i}"] for i in range(len(config.hidden))]
            net.cache_s = [data[f"cs{i}"] for i in range(len(config.hidden))]
            net.feature_mean = data["feature_mean"]
            net.feature_std = data["feature_std"]
            net.epoch = int(data["epoch"])
        return net


# Operation-style aliases for the module surface.

def init(config: NetworkConfig) -> SparseNetwork:
    return SparseNetwork(config)


def forward(net: SparseNetwork, X: np.ndarray, train_mode: bool = False) -> np.ndarray:
    return net.forward(X, train_mode)


def train_epoch(net: SparseNetwork, X, y, batch_size: int | None = None) -> float:
    return net.train_epoch(X, y, batch_size=batch_size)


def evolve_topology(net: SparseNetwork, rng: np.random.Generator | None = None) -> SparseNetwork:
    net.evolve_topology(rng)
    return net


def finetune(net: SparseNetwork, X, y, learning_rate: float = 1e-6, epochs: int = 100, **kw) -> SparseNetwork:
    net.finetune(X, y, learning_rate=learning_rate, epochs=epochs, **kw)
    return net
