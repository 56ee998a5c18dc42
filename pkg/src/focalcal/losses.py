"""Surrogate losses with analytic gradients.

Families: cross-entropy (``ce``), label smoothing (``label_smoothing``),
Brier score (``brier``), focal loss (``focal``), the sample-dependent focal
schedule (``flsd53``: gamma 5 below true-class probability 0.2, else 3), and
the focal loss with an added squared-distance calibration term (``fcl``).

All evaluators accept soft targets; the focal term generalizes to
``sum_k t_k (1 - p_k)^gamma (-log p_k)``. Probabilities are floored at 1e-12
inside logarithms only; the quadratic calibration term is exact. With
``lam == 0`` the fcl path skips the calibration term entirely so it matches
the plain focal loss bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._common import LOG_EPS, entropy, kl_divergence, softmax

FAMILIES = ("ce", "label_smoothing", "brier", "focal", "flsd53", "fcl")


@dataclass(frozen=True)
class LossSpec:
    family: str
    gamma: float = 0.0
    lam: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.lam < 0.0:
            raise ValueError("lambda must be >= 0")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must be in [0, 1)")

    def to_json(self) -> dict:
        out = {"family": self.family}
        if self.family in ("focal", "fcl", "flsd53"):
            out["gamma"] = self.gamma
        if self.family == "fcl":
            out["lambda"] = self.lam
        if self.family == "label_smoothing":
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LossSpec":
        return cls(family=obj["family"], gamma=obj.get("gamma", 0.0),
                   lam=obj.get("lambda", 0.0), alpha=obj.get("alpha", 0.0))


@dataclass(frozen=True)
class LossEval:
    value: float
    grad_logits: np.ndarray


def _check_pair(probs, target):
    p = np.asarray(probs, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"dimension mismatch: probs {p.shape} vs target {t.shape}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("non-finite input")
    return p, t


def _flsd_gamma(probs, targets):
    # gamma = 5 when the true-class probability is below 0.2, else 3
    p_true = np.sum(probs * targets, axis=-1, keepdims=True)
    return np.where(p_true < 0.2, 5.0, 3.0)


def _focal_values(probs, targets, gamma):
    logp = np.log(np.maximum(probs, LOG_EPS))
    return np.sum(targets * (1.0 - probs) ** gamma * (-logp), axis=-1)


def _brier_values(probs, targets):
    return np.sum((probs - targets) ** 2, axis=-1)


def batch_values(spec: LossSpec, probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample loss values; ``probs``/``targets`` broadcast as (..., K)."""
    fam = spec.family
    if fam == "ce":
        return _focal_values(probs, targets, 0.0)
    if fam == "label_smoothing":
        k = probs.shape[-1]
        smoothed = (1.0 - spec.alpha) * targets + spec.alpha / k
        return _focal_values(probs, smoothed, 0.0)
    if fam == "brier":
        return _brier_values(probs, targets)
    if fam == "focal":
        return _focal_values(probs, targets, spec.gamma)
    if fam == "flsd53":
        return _focal_values(probs, targets, _flsd_gamma(probs, targets))
    # fcl
    focal = _focal_values(probs, targets, spec.gamma)
    if spec.lam == 0.0:
        return focal
    return focal + spec.lam * _brier_values(probs, targets)


def _focal_prob_grads(probs, targets, gamma):
    logp = np.log(np.maximum(probs, LOG_EPS))
    q = 1.0 - probs
    # (1-p)^(gamma-1) diverges at p=1 for gamma < 1; floor the base there
    gm1 = np.asarray(gamma) - 1.0
    base = np.where(gm1 < 0.0, np.maximum(q, LOG_EPS), q)
    return targets * (gamma * base ** gm1 * logp - q ** np.asarray(gamma) / np.maximum(probs, LOG_EPS))


def batch_prob_grads(spec: LossSpec, probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample gradients with respect to the probabilities."""
    fam = spec.family
    if fam == "ce":
        return -targets / np.maximum(probs, LOG_EPS)
    if fam == "label_smoothing":
        k = probs.shape[-1]
        smoothed = (1.0 - spec.alpha) * targets + spec.alpha / k
        return -smoothed / np.maximum(probs, LOG_EPS)
    if fam == "brier":
        return 2.0 * (probs - targets)
    if fam == "focal":
        if spec.gamma == 0.0:
            return -targets / np.maximum(probs, LOG_EPS)
        return _focal_prob_grads(probs, targets, spec.gamma)
    if fam == "flsd53":
        return _focal_prob_grads(probs, targets, _flsd_gamma(probs, targets))
    grad = (-targets / np.maximum(probs, LOG_EPS) if spec.gamma == 0.0
            else _focal_prob_grads(probs, targets, spec.gamma))
    if spec.lam == 0.0:
        return grad
    return grad + spec.lam * 2.0 * (probs - targets)


def batch_logit_grads(spec: LossSpec, logits: np.ndarray, targets: np.ndarray):
    """Per-sample (values, d value / d logits) through the softmax."""
    probs = softmax(logits, axis=-1)
    values = batch_values(spec, probs, targets)
    if spec.family == "ce":
        grads = probs - targets  # exact softmax+CE form
    elif spec.family == "label_smoothing":
        k = probs.shape[-1]
        grads = probs - ((1.0 - spec.alpha) * targets + spec.alpha / k)
    else:
        g = batch_prob_grads(spec, probs, targets)
        inner = np.sum(g * probs, axis=-1, keepdims=True)
        grads = probs * (g - inner)
    return values, grads


def eval_loss(spec: LossSpec, probs, target) -> float:
    """Single-sample loss value for a prediction/target pair on the simplex."""
    p, t = _check_pair(probs, target)
    return float(batch_values(spec, p, t))


def eval_loss_grad(spec: LossSpec, logits, target) -> LossEval:
    """Loss value and exact analytic logit-gradient at ``softmax(logits)``."""
    z = np.asarray(logits, dtype=float)
    t = np.asarray(target, dtype=float)
    if z.shape != t.shape:
        raise ValueError(f"dimension mismatch: logits {z.shape} vs target {t.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    values, grads = batch_logit_grads(spec, z, t)
    return LossEval(value=float(values), grad_logits=grads)


def entropy_bound_check(probs, target, gamma: float) -> dict:
    """Check the focal-loss lower bound KL(t||p) + H[t] - gamma*H[p].

    The derivation uses Bernoulli's inequality and therefore requires
    gamma >= 1. Returns the two sides and whether the bound holds with
    1e-12 slack.
    """
    if gamma < 1.0:
        raise ValueError("the bound's derivation requires gamma >= 1")
    p, t = _check_pair(probs, target)
    if np.any(p <= 0.0):
        raise ValueError("probs must be strictly positive")
    lhs = float(_focal_values(p, t, gamma))
    rhs = kl_divergence(t, p) + entropy(t) - gamma * entropy(p)
    return {"holds": lhs >= rhs - 1e-12, "lhs": lhs, "rhs": rhs}
