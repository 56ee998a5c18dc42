"""Deterministic tiny-MLP training harness on synthetic 2-D data.

Full-batch training with analytic logit gradients from the loss module,
backpropagated through the network by hand. All randomness (initialization
and data splits) flows from explicit seeds through numpy's PCG64 generator,
so runs are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._common import softmax
from .calibrate import temperature_scan
from .data import LabeledPoint, PredictionSet, points_to_arrays
from .losses import LossSpec, batch_logit_grads
from .metrics import BinningConfig, adaece, classwise_ece, ece, score_metrics


@dataclass(frozen=True)
class MLPConfig:
    layers: tuple = (2, 10, 10, 2)
    activation: str = "relu"
    seed: int = 1
    epochs: int = 500
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ValueError("need at least input and output layers")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.lr <= 0.0 or self.weight_decay < 0.0:
            raise ValueError("invalid epochs/lr/weight_decay")


@dataclass
class ModelState:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list   # per layer, shape (fan_out,)
    config: MLPConfig

    def to_json(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": {
                "layers": list(self.config.layers),
                "activation": self.config.activation,
                "seed": self.config.seed,
                "epochs": self.config.epochs,
                "optimizer": self.config.optimizer,
                "lr": self.config.lr,
                "weight_decay": self.config.weight_decay,
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelState":
        cfg = obj["config"]
        return cls(
            weights=[np.asarray(w, dtype=float) for w in obj["weights"]],
            biases=[np.asarray(b, dtype=float) for b in obj["biases"]],
            config=MLPConfig(layers=tuple(cfg["layers"]), activation=cfg["activation"],
                             seed=cfg["seed"], epochs=cfg["epochs"],
                             optimizer=cfg["optimizer"], lr=cfg["lr"],
                             weight_decay=cfg["weight_decay"]),
        )

    @classmethod
    def load(cls, path) -> "ModelState":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # dict rows

    def to_rows(self):
        return self.epochs


def init_model(cfg: MLPConfig) -> ModelState:
    """Uniform fan-in-scaled weights, zero biases, seeded."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layers[:-1], cfg.layers[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelState(weights=weights, biases=biases, config=cfg)


def _activate(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def forward(model: ModelState, xs: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs."""
    h = np.asarray(xs, dtype=float)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < last:
            h = _activate(h, model.config.activation)
    return h


def predictions(model: ModelState, xs: np.ndarray, ys: np.ndarray) -> PredictionSet:
    logits = forward(model, xs)
    return PredictionSet(probs=softmax(logits, axis=1), labels=ys, logits=logits)


def _forward_cached(model, xs):
    acts = [np.asarray(xs, dtype=float)]
    pre = []
    last = len(model.weights) - 1
    h = acts[0]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = _activate(z, model.config.activation) if i < last else z
        acts.append(h)
    return pre, acts


def loss_and_grads(model: ModelState, spec: LossSpec, xs: np.ndarray, targets: np.ndarray):
    """Mean loss and parameter gradients by backprop through the MLP."""
    pre, acts = _forward_cached(model, xs)
    n = xs.shape[0]
    values, dlogits = batch_logit_grads(spec, acts[-1], targets)
    delta = dlogits / n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if model.config.weight_decay > 0.0:
            grads_w[i] = grads_w[i] + model.config.weight_decay * model.weights[i]
        if i > 0:
            delta = delta @ model.weights[i].T
            if model.config.activation == "relu":
                delta = delta * (pre[i - 1] > 0.0)
            else:
                delta = delta * (1.0 - np.tanh(pre[i - 1]) ** 2)
    return float(values.mean()), grads_w, grads_b


def train(cfg: MLPConfig, spec: LossSpec, train_points: list[LabeledPoint],
          test_points: list[LabeledPoint], bins: int = 15):
    """Full-batch training; returns (ModelState, TrainHistory).

    History records per-epoch train/test loss and test ECE/NLL/error. Raises
    on divergence (non-finite loss) with the offending epoch index.
    """
    if not train_points or not test_points:
        raise ValueError("train and test sets must be nonempty")
    xs, ys, _ = points_to_arrays(train_points)
    xt, yt, _ = points_to_arrays(test_points)
    k = cfg.layers[-1]
    targets = np.eye(k)[ys]
    test_targets = np.eye(k)[yt]

    model = init_model(cfg)
    # Adam state
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    history = TrainHistory()
    cfg_bins = BinningConfig(bins=bins)
    for epoch in range(1, cfg.epochs + 1):
        train_loss, gw, gb = loss_and_grads(model, spec, xs, targets)
        if not np.isfinite(train_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        if cfg.optimizer == "adam":
            for i in range(len(model.weights)):
                m_w[i] = beta1 * m_w[i] + (1 - beta1) * gw[i]
                v_w[i] = beta2 * v_w[i] + (1 - beta2) * gw[i] ** 2
                m_b[i] = beta1 * m_b[i] + (1 - beta1) * gb[i]
                v_b[i] = beta2 * v_b[i] + (1 - beta2) * gb[i] ** 2
                mhat_w = m_w[i] / (1 - beta1 ** epoch)
                vhat_w = v_w[i] / (1 - beta2 ** epoch)
                mhat_b = m_b[i] / (1 - beta1 ** epoch)
                vhat_b = v_b[i] / (1 - beta2 ** epoch)
                model.weights[i] -= cfg.lr * mhat_w / (np.sqrt(vhat_w) + eps)
                model.biases[i] -= cfg.lr * mhat_b / (np.sqrt(vhat_b) + eps)
        else:
            for i in range(len(model.weights)):
                model.weights[i] -= cfg.lr * gw[i]
                model.biases[i] -= cfg.lr * gb[i]

        test_logits = forward(model, xt)
        test_values, _ = batch_logit_grads(spec, test_logits, test_targets)
        test_set = PredictionSet(probs=softmax(test_logits, axis=1), labels=yt,
                                 logits=test_logits)
        scores = score_metrics(test_set)
        history.epochs.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "test_loss": float(test_values.mean()),
            "test_ece": ece(test_set, cfg_bins),
            "test_nll": scores["nll"],
            "test_error": scores["error"],
        })
    return model, history


def split_points(points: list[LabeledPoint], seed: int,
                 fractions=(0.6, 0.2, 0.2)) -> tuple[list, list, list]:
    """Seeded shuffle into train/val/test."""
    idx = np.random.default_rng(seed).permutation(len(points))
    n_train = int(round(fractions[0] * len(points)))
    n_val = int(round(fractions[1] * len(points)))
    tr = [points[i] for i in idx[:n_train]]
    va = [points[i] for i in idx[n_train:n_train + n_val]]
    te = [points[i] for i in idx[n_train + n_val:]]
    return tr, va, te


def decision_grid(model: ModelState, bounds, resolution: int) -> list[dict]:
    """Row-major grid of predicted probabilities over a rectangle.

    ``bounds`` is (x0_min, x0_max, x1_min, x1_max).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    x0_min, x0_max, x1_min, x1_max = bounds
    if x0_max <= x0_min or x1_max <= x1_min:
        raise ValueError("degenerate bounds")
    g0 = np.linspace(x0_min, x0_max, resolution)
    g1 = np.linspace(x1_min, x1_max, resolution)
    rows = []
    for a in g0:
        xs = np.column_stack([np.full(resolution, a), g1])
        probs = softmax(forward(model, xs), axis=1)
        for j in range(resolution):
            rows.append({"x0": float(a), "x1": float(g1[j]),
                         "probs": probs[j].tolist()})
    return rows


def lambda_sweep(cfg: MLPConfig, gammas, lambdas, points: list[LabeledPoint],
                 bins: int = 15) -> list[dict]:
    """Train one FCL model per (gamma, lambda); report pre/post-T metrics.

    The point list is split 60/20/20 into train/val/test with the config
    seed; the temperature is scanned on the validation third.
    """
    if not gammas or not lambdas:
        raise ValueError("gamma and lambda lists must be nonempty")
    tr, va, te = split_points(points, cfg.seed)
    xv, yv, _ = points_to_arrays(va)
    xt, yt, _ = points_to_arrays(te)
    cfg_bins = BinningConfig(bins=bins)
    rows = []
    for gamma in gammas:
        for lam in lambdas:
            spec = LossSpec(family="fcl", gamma=float(gamma), lam=float(lam))
            model, _ = train(cfg, spec, tr, te, bins=bins)
            val_set = predictions(model, xv, yv)
            scan = temperature_scan(val_set, cfg_bins)
            test_set = predictions(model, xt, yt)
            post_logits = test_set.logits / scan.best_t
            post_set = PredictionSet(probs=softmax(post_logits, axis=1),
                                     labels=yt, logits=post_logits)
            scores = score_metrics(test_set)
            rows.append({
                "gamma": float(gamma), "lambda": float(lam),
                "best_t": scan.best_t,
                "pre_ece": ece(test_set, cfg_bins),
                "post_ece": ece(post_set, cfg_bins),
                "adaece": adaece(test_set),
                "cwece": classwise_ece(test_set, cfg_bins),
                "nll": scores["nll"],
                "error": scores["error"],
            })
    return rows
