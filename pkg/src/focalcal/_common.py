"""Shared numerical helpers used across the package."""

from __future__ import annotations

import numpy as np

# Probabilities are floored at this value inside logarithms only; quadratic
# terms always see the raw values.
LOG_EPS = 1e-12


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def as_simplex(values, mass_tol: float = 1e-8) -> np.ndarray:
    """Validate and renormalize a probability vector.

    Accepts any 1-D array-like with K >= 2 entries in [0, 1] whose mass is
    within ``mass_tol`` of 1, and returns a fresh float64 array rescaled to
    sum to exactly 1 (up to rounding).
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError(f"probability vector needs K >= 2 entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("probability vector has non-finite entries")
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError(f"probability entries outside [0, 1]: {v}")
    mass = float(v.sum())
    if abs(mass - 1.0) > mass_tol:
        raise ValueError(f"probability mass {mass} deviates from 1 by more than {mass_tol}")
    return v / mass


def one_hot(label: int, k: int) -> np.ndarray:
    e = np.zeros(k, dtype=float)
    e[label] = 1.0
    return e


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=float)
    nz = p > 0.0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats; q is floored at LOG_EPS inside the log."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0.0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(np.maximum(q[nz], LOG_EPS)))))
