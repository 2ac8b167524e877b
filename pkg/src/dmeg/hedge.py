"""Exponentiated-gradient learners for the expert weights and the dual variable.

Both learners keep the running sum of their gradients and re-derive the
played point from it each round:

    expert weights   p  proportional to exp(-eta * cumulative_grad)   (uniform prior)
    dual variable    lam = lambda_max * sigmoid(eta_lambda * cumulative_grad)

The dual form is exactly two-expert hedging between the endpoints 0 and
lambda_max, with the positive sign in the exponent because the dual player
ascends the Lagrangian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class ExpertWeights:
    """A point on the probability simplex driven by cumulative gradients.

    When ``include_artificial`` is set, component 0 belongs to the constant
    expert that always predicts the constraint class; the remaining
    components follow the real experts in depth order.
    """

    def __init__(self, num_experts: int, eta: float, include_artificial: bool = False):
        if num_experts < 1:
            raise ValueError("need at least one expert")
        if eta <= 0.0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self.includes_artificial = bool(include_artificial)
        self.size = num_experts + (1 if include_artificial else 0)
        self.cumulative_grad = np.zeros(self.size)
        self.p = np.full(self.size, 1.0 / self.size)

    @property
    def num_real(self) -> int:
        return self.size - (1 if self.includes_artificial else 0)

    def real_weights(self) -> np.ndarray:
        """Weights of the network-backed experts (artificial component dropped)."""
        return self.p[1:] if self.includes_artificial else self.p


class DualVariable:
    """Constraint multiplier on [0, lambda_max], hedged between the endpoints.

    The first round plays lam = 0; every update thereafter places it at
    lambda_max * sigmoid(eta_lambda * cumulative_grad).
    """

    def __init__(self, lambda_max: float = 10.0, eta_lambda: float = 0.01):
        if lambda_max < 1.0:
            raise ValueError("lambda_max must be >= 1")
        if eta_lambda <= 0.0:
            raise ValueError("eta_lambda must be positive")
        self.lambda_max = float(lambda_max)
        self.eta_lambda = float(eta_lambda)
        self.cumulative_grad = 0.0
        self.lam = 0.0


@dataclass
class RateSchedule:
    """Step sizes for the two learners over a known horizon."""

    eta: float
    eta_lambda: float
    horizon: int
    num_experts: int
    G1: float
    G2: float


def combine(w: ExpertWeights, expert_probs: np.ndarray, artificial_pred: float | None = None) -> float:
    """Weighted mixture of the expert predictions.

    ``artificial_pred`` is the constant prediction of the artificial expert
    (1.0 when the constraint class is 1, 0.0 when it is 0) and is required
    exactly when the weight vector includes that expert.
    """
    expert_probs = np.asarray(expert_probs, dtype=float)
    if expert_probs.shape != (w.num_real,):
        raise ValueError(f"expected {w.num_real} expert predictions, got {expert_probs.shape}")
    if w.includes_artificial:
        if artificial_pred is None:
            raise ValueError("artificial expert enabled but no artificial_pred supplied")
        return float(w.p[0] * artificial_pred + w.p[1:] @ expert_probs)
    return float(w.p @ expert_probs)


def grad_p(w: ExpertWeights, grad_b: float, expert_probs: np.ndarray,
           artificial_pred: float | None = None, clip: float | None = None) -> np.ndarray:
    """Chain rule through the mixture: component k is grad_b * prediction_k.

    Clipped elementwise to [-clip, clip] when a bound is given.
    """
    if not math.isfinite(grad_b):
        raise ValueError("grad_b must be finite")
    expert_probs = np.asarray(expert_probs, dtype=float)
    if w.includes_artificial:
        if artificial_pred is None:
            raise ValueError("artificial expert enabled but no artificial_pred supplied")
        preds = np.concatenate(([artificial_pred], expert_probs))
    else:
        preds = expert_probs
    g = grad_b * preds
    if clip is not None:
        np.clip(g, -clip, clip, out=g)
    return g


def eg_update_experts(w: ExpertWeights, grad: np.ndarray) -> ExpertWeights:
    """Fold one gradient into the running sum and renormalise the weights."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (w.size,):
        raise ValueError(f"gradient shape {grad.shape} does not match {w.size} experts")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite expert gradient")
    w.cumulative_grad += grad
    z = -w.eta * w.cumulative_grad
    z -= z.max()
    np.exp(z, out=z)
    w.p = z / z.sum()
    return w


def eg_update_lambda(d: DualVariable, grad: float, clip: float | None = None) -> DualVariable:
    """Fold one dual gradient in and re-place lam on [0, lambda_max]."""
    if not math.isfinite(grad):
        raise ValueError("non-finite dual gradient")
    if clip is not None:
        grad = min(max(grad, -clip), clip)
    d.cumulative_grad += grad
    d.lam = d.lambda_max * _sigmoid(d.eta_lambda * d.cumulative_grad)
    return d


def theorem_rates(G1: float, G2: float, T: int, L: int) -> RateSchedule:
    """Horizon-tuned step sizes for L real experts plus the artificial one."""
    if min(G1, G2) <= 0 or T <= 0 or L <= 0:
        raise ValueError("all rate-schedule arguments must be positive")
    n = L + 1
    return RateSchedule(
        eta=math.sqrt(math.log(n) / T) / G1,
        eta_lambda=math.sqrt(math.log(2.0) / T) / G2,
        horizon=T,
        num_experts=n,
        G1=G1,
        G2=G2,
    )


def constraint_certificate(G1: float, G2: float, T: int, L: int, gamma: float) -> float:
    """Upper bound on the running average constraint surrogate at the horizon."""
    if min(G1, G2) <= 0 or T <= 0 or L <= 0:
        raise ValueError("all certificate arguments must be positive")
    return gamma + 4.0 * max(G1, G2) * math.sqrt(math.log(L + 1) / T)
