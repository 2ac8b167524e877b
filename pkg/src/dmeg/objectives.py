"""Gated cross-entropy surrogates and the per-round Lagrangian.

Each online round sees one (prediction, label) pair.  The main loss is the
binary cross-entropy gated to the non-constraint class, the constraint loss
is the same quantity gated to the constraint class, and the scalar driving
all three updates (expert weights, dual variable, backprop) is

    lagrangian(b, lam, y) = main_loss(b, y) + lam * (constraint_loss(b, y) - gamma)

Both surrogates are clipped at ``loss_clip`` so every gradient the learners
see is bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PROB_EPS = 1e-15  # squeeze predictions into the open interval before log()


@dataclass
class NPObjective:
    """Configuration and running state for the two-objective surrogate.

    gamma            constraint threshold, in (0, 1)
    constraint_class label whose error is constrained (0 or 1)
    conditioning     'prior_weighted' leaves the gated losses as-is, so the
                     constrained quantity is the class-prior-scaled risk;
                     'class_normalized' divides each gated loss by a running
                     estimate of its class frequency, approximating the
                     class-conditional risk.
    loss_clip        upper clip for each surrogate (>= 1)
    G1, G2           bounds imposed on the prediction- and dual-gradients;
                     derived from loss_clip and lambda_max when omitted.
    """

    gamma: float
    constraint_class: int = 1
    conditioning: str = "prior_weighted"
    loss_clip: float = 4.0
    G1: float | None = None
    G2: float | None = None
    lambda_max: float = 10.0
    # running label counts, only consulted in class_normalized mode; the
    # owning loop updates them via observe_label()
    class_counts: list[int] = field(default_factory=lambda: [0, 0])

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.constraint_class not in (0, 1):
            raise ValueError(f"constraint_class must be 0 or 1, got {self.constraint_class}")
        if self.conditioning not in ("prior_weighted", "class_normalized"):
            raise ValueError(f"unknown conditioning mode {self.conditioning!r}")
        if self.loss_clip < 1.0:
            raise ValueError(f"loss_clip must be >= 1, got {self.loss_clip}")
        if self.G1 is None:
            self.G1 = self.loss_clip * max(1.0, self.lambda_max)
        if self.G2 is None:
            self.G2 = self.loss_clip
        if self.G1 <= 0 or self.G2 <= 0:
            raise ValueError("gradient bounds G1, G2 must be positive")

    def observe_label(self, y: int) -> None:
        """Fold one revealed label into the running class counts."""
        self.class_counts[int(y)] += 1

    def class_weight(self, y: int) -> float:
        """1 / (smoothed running frequency of class y); 1.0 in prior_weighted mode."""
        if self.conditioning == "prior_weighted":
            return 1.0
        total = self.class_counts[0] + self.class_counts[1]
        freq = (self.class_counts[int(y)] + 1.0) / (total + 2.0)
        return 1.0 / freq


def _check_prob(b: float) -> float:
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"prediction must lie in [0,1], got {b}")
    # the endpoints only arise from an all-mass artificial expert; squeeze
    # them into the open interval so the log stays finite
    return min(max(b, PROB_EPS), 1.0 - PROB_EPS)


def _bce(b: float, y: int) -> float:
    return -math.log(b) if y == 1 else -math.log(1.0 - b)


def main_loss(b: float, y: int, obj: NPObjective) -> float:
    """Cross-entropy gated to the non-constraint class, clipped at loss_clip."""
    y = int(y)
    if y == obj.constraint_class:
        return 0.0
    b = _check_prob(b)
    return min(_bce(b, y) * obj.class_weight(y), obj.loss_clip)


def constraint_loss(b: float, y: int, obj: NPObjective) -> float:
    """Cross-entropy gated to the constraint class, clipped at loss_clip."""
    y = int(y)
    if y != obj.constraint_class:
        return 0.0
    b = _check_prob(b)
    return min(_bce(b, y) * obj.class_weight(y), obj.loss_clip)


def instantaneous_lagrangian(b: float, lam: float, y: int, obj: NPObjective) -> float:
    """main_loss + lam * (constraint_loss - gamma); affine in lam."""
    if lam < 0.0:
        raise ValueError(f"dual variable must be nonnegative, got {lam}")
    return main_loss(b, y, obj) + lam * (constraint_loss(b, y, obj) - obj.gamma)


def grad_b(b: float, lam: float, y: int, obj: NPObjective) -> float:
    """Derivative of the per-round Lagrangian with respect to the prediction.

    The active gated term contributes (b - y) / (b (1 - b)) scaled by its
    coefficient (1 for the main term, lam for the constraint term) and the
    conditioning weight; a saturated clip contributes zero.
    """
    y = int(y)
    b = _check_prob(b)
    weight = obj.class_weight(y)
    if _bce(b, y) * weight >= obj.loss_clip:
        return 0.0
    raw = (b - y) / (b * (1.0 - b))
    coeff = lam if y == obj.constraint_class else 1.0
    return coeff * weight * raw


def grad_lambda(b: float, y: int, obj: NPObjective) -> float:
    """Derivative with respect to the dual variable: constraint_loss - gamma."""
    return constraint_loss(b, y, obj) - obj.gamma
