"""Post-hoc temperature scaling and the post-processing-gap estimator.

The post-processing gap searches over remaps ``kappa: [0,1] -> [0,1]`` whose
offset ``delta(v) = kappa(v) - v`` is 1-Lipschitz. An optimal ``kappa`` for a
finite sample can be taken piecewise linear between the observed predicted
values, so the search reduces to a finite convex program over the kappa
values at the sorted distinct predictions, with the chain constraint
``0 <= kappa_{j+1} - kappa_j <= 2 (v_{j+1} - v_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import LinearConstraint, minimize

from ._common import LOG_EPS, softmax
from .data import PredictionSet
from .losses import LossSpec
from .metrics import BinningConfig, ece

CONVEX_FAMILIES = ("ce", "brier", "focal", "fcl")


class ConvergenceError(RuntimeError):
    """Raised when a numerical solver fails to reach its tolerance."""


@dataclass
class TemperatureScanResult:
    best_t: float
    grid: list  # (t, ece) pairs in grid order
    pre_ece: float
    post_ece: float

    def to_json(self) -> dict:
        return {"best_t": self.best_t, "pre_ece": self.pre_ece,
                "post_ece": self.post_ece,
                "grid": [{"t": t, "ece": e} for t, e in self.grid]}


@dataclass(frozen=True)
class PostProcessMap:
    knots: np.ndarray   # sorted distinct predicted values in [0, 1]
    kappa: np.ndarray   # remapped values at the knots

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        kappa = np.asarray(self.kappa, dtype=float)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "kappa", kappa)
        if knots.shape != kappa.shape or knots.ndim != 1 or knots.size == 0:
            raise ValueError("knots and kappa must be matching nonempty 1-D arrays")
        if np.any(np.diff(knots) <= 0.0):
            raise ValueError("knots must be strictly increasing")
        if np.any(kappa < -1e-12) or np.any(kappa > 1.0 + 1e-12):
            raise ValueError("kappa values must lie in [0, 1]")
        delta = kappa - knots
        if np.any(np.abs(np.diff(delta)) > np.diff(knots) + 1e-12):
            raise ValueError("kappa - id violates the 1-Lipschitz chain constraint")


@dataclass
class PGapResult:
    raw_risk: float
    optimized_risk: float
    pgap: float
    map: PostProcessMap

    def to_json(self) -> dict:
        return {"raw_risk": self.raw_risk, "optimized_risk": self.optimized_risk,
                "pgap": self.pgap,
                "map": {"knots": self.map.knots.tolist(),
                        "kappa": self.map.kappa.tolist()}}


def temperature_grid(t_min: float = 0.1, t_max: float = 10.0, t_step: float = 0.1) -> np.ndarray:
    count = int(round((t_max - t_min) / t_step)) + 1
    if count < 1:
        raise ValueError("empty temperature grid")
    return np.round(t_min + t_step * np.arange(count), 12)


def apply_temperature(pset: PredictionSet, t: float) -> PredictionSet:
    """Rescale logits by 1/t; labels and argmax are unchanged for t > 0."""
    if t <= 0.0:
        raise ValueError("temperature must be > 0")
    if pset.logits is None:
        raise ValueError("temperature scaling requires logits")
    scaled = pset.logits / t
    return PredictionSet(probs=softmax(scaled, axis=1), labels=pset.labels.copy(),
                         logits=scaled, eta=None if pset.eta is None else pset.eta.copy())


def temperature_scan(val: PredictionSet, cfg: BinningConfig = BinningConfig(),
                     t_min: float = 0.1, t_max: float = 10.0,
                     t_step: float = 0.1) -> TemperatureScanResult:
    """Grid-search the temperature minimizing validation ECE.

    Ties are broken toward the T closest to 1.0, then toward the smaller T.
    """
    if val.logits is None:
        raise ValueError("temperature scan requires logits")
    grid = temperature_grid(t_min, t_max, t_step)
    pairs = []
    for t in grid:
        pairs.append((float(t), ece(apply_temperature(val, float(t)), cfg)))
    best_t, best_e = pairs[0]
    for t, e in pairs[1:]:
        if e < best_e or (e == best_e and (abs(t - 1.0), t) < (abs(best_t - 1.0), best_t)):
            best_t, best_e = t, e
    pre_ece = ece(apply_temperature(val, 1.0), cfg)
    return TemperatureScanResult(best_t=best_t, grid=pairs, pre_ece=pre_ece, post_ece=best_e)


def _binary_loss_terms(spec: LossSpec, kappa: np.ndarray):
    """Loss, first and second derivative at class-1 probability ``kappa``.

    Returns (l1, l0, d1, d0, h1, h0): values/derivatives for label 1 and 0.
    Logs (and their derivatives) are floored at probability 1e-12.
    """
    # optimizer iterates may stray a hair outside [0, 1]; clamp before the
    # fractional powers so they stay real-valued
    p = np.clip(kappa, 0.0, 1.0)
    q = 1.0 - p
    ps = np.maximum(p, LOG_EPS)
    qs = np.maximum(q, LOG_EPS)
    logp, logq = np.log(ps), np.log(qs)
    gamma, lam = spec.gamma, spec.lam

    if spec.family == "ce":
        return (-logp, -logq, -1.0 / ps, 1.0 / qs, 1.0 / ps ** 2, 1.0 / qs ** 2)
    if spec.family == "brier":
        # sum over both classes: 2 (p - y)^2
        return (2.0 * q ** 2, 2.0 * p ** 2, -4.0 * q, 4.0 * p,
                np.full_like(p, 4.0), np.full_like(p, 4.0))
    # focal / fcl
    l1 = q ** gamma * (-logp)
    l0 = p ** gamma * (-logq)
    if gamma == 0.0:
        d1, h1 = -1.0 / ps, 1.0 / ps ** 2
        d0, h0 = 1.0 / qs, 1.0 / qs ** 2
    else:
        qg1 = np.maximum(q, LOG_EPS) ** (gamma - 1.0)
        pg1 = np.maximum(p, LOG_EPS) ** (gamma - 1.0)
        d1 = gamma * qg1 * logp - q ** gamma / ps
        d0 = -gamma * pg1 * logq + p ** gamma / qs
        qg2 = np.maximum(q, LOG_EPS) ** (gamma - 2.0)
        pg2 = np.maximum(p, LOG_EPS) ** (gamma - 2.0)
        h1 = -gamma * (gamma - 1.0) * qg2 * logp + 2.0 * gamma * qg1 / ps + q ** gamma / ps ** 2
        h0 = -gamma * (gamma - 1.0) * pg2 * logq + 2.0 * gamma * pg1 / qs + p ** gamma / qs ** 2
    if spec.family == "fcl" and lam > 0.0:
        l1 = l1 + lam * 2.0 * q ** 2
        l0 = l0 + lam * 2.0 * p ** 2
        d1 = d1 - lam * 4.0 * q
        d0 = d0 + lam * 4.0 * p
        h1 = h1 + lam * 4.0
        h0 = h0 + lam * 4.0
    return l1, l0, d1, d0, h1, h0


def pgap(pset: PredictionSet, spec: LossSpec) -> PGapResult:
    """Risk reduction achievable by the best 1-Lipschitz-offset remap.

    Restricted to binary prediction sets and losses convex in the predicted
    probability (ce, brier, focal, fcl).
    """
    if pset.k != 2:
        raise ValueError("pgap is defined for binary predictors (K = 2)")
    if spec.family not in CONVEX_FAMILIES:
        raise ValueError(f"pgap requires a convex loss family, got {spec.family!r}")

    v_all = pset.probs[:, 1]
    y_all = pset.labels
    knots, inverse = np.unique(v_all, return_inverse=True)
    n1 = np.zeros(knots.size)
    n0 = np.zeros(knots.size)
    np.add.at(n1, inverse[y_all == 1], 1.0)
    np.add.at(n0, inverse[y_all == 0], 1.0)
    n = pset.n

    def objective(kappa):
        l1, l0, d1, d0, h1, h0 = _binary_loss_terms(spec, kappa)
        val = float(n1 @ l1 + n0 @ l0) / n
        grad = (n1 * d1 + n0 * d0) / n
        hess = (n1 * h1 + n0 * h0) / n
        return val, grad, hess

    raw_risk, _, _ = objective(knots)
    raw_risk = float(raw_risk)

    if knots.size == 1:
        # single knot: kappa free in [0, 1]
        grid = np.linspace(0.0, 1.0, 2001)
        l1, l0, *_ = _binary_loss_terms(spec, grid)
        vals = (n1[0] * l1 + n0[0] * l0) / n
        j = int(np.argmin(vals))
        best = _refine_scalar(lambda x: (n1[0] * _binary_loss_terms(spec, np.array([x]))[0][0]
                                         + n0[0] * _binary_loss_terms(spec, np.array([x]))[1][0]) / n,
                              grid[j])
        kappa = np.array([best[0]])
        opt = best[1]
    else:
        d = np.diff(knots)
        m = knots.size
        rows = sp.diags([-np.ones(m - 1), np.ones(m - 1)], offsets=[0, 1],
                        shape=(m - 1, m), format="csr")
        chain = LinearConstraint(rows, 0.0, 2.0 * d)
        res = minimize(
            lambda x: objective(x)[:2], knots, jac=True,
            hess=lambda x: sp.diags(objective(x)[2]),
            method="trust-constr", bounds=[(0.0, 1.0)] * m,
            constraints=[chain],
            options={"gtol": 1e-12, "xtol": 1e-14, "maxiter": 3000},
        )
        kappa = np.clip(res.x, 0.0, 1.0)
        # repair solver round-off against the chain constraint
        for i in range(1, m):
            lo, hi = kappa[i - 1], kappa[i - 1] + 2.0 * d[i - 1]
            kappa[i] = min(max(kappa[i], lo), hi)
        opt = objective(kappa)[0]
        if opt > raw_risk:  # identity map is always feasible
            kappa, opt = knots.copy(), raw_risk
    opt = float(opt)
    return PGapResult(raw_risk=raw_risk, optimized_risk=opt, pgap=raw_risk - opt,
                      map=PostProcessMap(knots=knots, kappa=kappa))


def _refine_scalar(fn, x0: float, lo: float = 0.0, hi: float = 1.0):
    """Golden-section polish of a scalar convex objective around x0."""
    a, b = max(lo, x0 - 1e-3), min(hi, x0 + 1e-3)
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    c, d_ = b - phi * (b - a), a + phi * (b - a)
    fc, fd = fn(c), fn(d_)
    for _ in range(80):
        if fc <= fd:
            b, d_, fd = d_, c, fc
            c = b - phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + phi * (b - a)
            fd = fn(d_)
    x = (a + b) / 2.0
    return x, fn(x)
