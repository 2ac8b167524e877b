"""Feed-forward trunk with one classifier head per hidden layer.

All parameters live in a single flat float64 vector; each layer holds views
into it, so the optimizer advances every tensor with a handful of whole-array
operations.  Gradients use the same flat layout.

Backpropagation is hand-derived for this fixed architecture: the scalar loss
reaches head k through the mixture weight p_k, and trunk layer k accumulates
sensitivity both from its own head and from everything deeper.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import objectives as obj_mod
from .hedge import ExpertWeights, combine
from .objectives import NPObjective

CHECKPOINT_MAGIC = "DMEG-CKPT-1"
LOGIT_CLAMP = 30.0  # head logits are clamped here; beyond it backward sees a saturation


class DenseLayer:
    """An affine map with an activation tag; weights/bias are views into the flat buffer."""

    __slots__ = ("weights", "bias", "activation")

    def __init__(self, weights: np.ndarray, bias: np.ndarray, activation: str):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        if weights.shape[0] != bias.shape[0]:
            raise ValueError("weight rows and bias length disagree")
        self.weights = weights
        self.bias = bias
        self.activation = activation


class HedgedNetwork:
    """Trunk of L ReLU layers plus L single-logit affine heads, head k on layer k."""

    def __init__(self, input_dim: int, hidden_dim: int, depth: int, params: np.ndarray,
                 layout: list[tuple[str, int, tuple[int, ...]]]):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.L = depth
        self.params = params
        self.layout = layout
        self._bounds = {
            name: (off, off + int(np.prod(shape)), shape)
            for name, off, shape in layout
        }
        self._views = {
            name: params[a:b].reshape(shape)
            for name, (a, b, shape) in self._bounds.items()
        }
        self.trunk = [
            DenseLayer(self._views[f"trunk.{k}.weight"], self._views[f"trunk.{k}.bias"], "relu")
            for k in range(depth)
        ]
        self.heads = [
            DenseLayer(self._views[f"head.{k}.weight"].reshape(1, -1),
                       self._views[f"head.{k}.bias"], "identity")
            for k in range(depth)
        ]
        # slice bounds in backward's access order, to keep the hot loop off dict+format
        self._head_bounds = [(self._bounds[f"head.{k}.weight"], self._bounds[f"head.{k}.bias"])
                             for k in range(depth)]
        self._trunk_bounds = [(self._bounds[f"trunk.{k}.weight"], self._bounds[f"trunk.{k}.bias"])
                              for k in range(depth)]

    def tensor(self, name: str) -> np.ndarray:
        return self._views[name]

    def view_of(self, flat: np.ndarray, name: str) -> np.ndarray:
        """View a tensor's slice of any buffer sharing this network's layout."""
        a, b, shape = self._bounds[name]
        return flat[a:b].reshape(shape)

    def tensor_name_at(self, flat_index: int) -> str:
        for name, off, shape in self.layout:
            if off <= flat_index < off + int(np.prod(shape)):
                return name
        raise IndexError(flat_index)

    def num_params(self) -> int:
        return self.params.size


@dataclass
class ForwardTrace:
    """Everything forward() computed, kept for the backward pass."""

    x: np.ndarray
    layer_activations: list[np.ndarray]
    head_logits: np.ndarray      # after clamping
    head_saturated: np.ndarray   # bool; True where the clamp was hit
    expert_probs: np.ndarray


class OptimizerState:
    """Nesterov-momentum SGD state: one velocity entry per parameter."""

    def __init__(self, num_params: int, learning_rate: float, momentum: float = 0.9):
        if learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.velocity = np.zeros(num_params)
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)


def _build_layout(input_dim: int, hidden_dim: int, depth: int) -> tuple[list[tuple[str, int, tuple[int, ...]]], int]:
    layout: list[tuple[str, int, tuple[int, ...]]] = []
    off = 0
    for k in range(depth):
        fan_in = input_dim if k == 0 else hidden_dim
        layout.append((f"trunk.{k}.weight", off, (hidden_dim, fan_in)))
        off += hidden_dim * fan_in
        layout.append((f"trunk.{k}.bias", off, (hidden_dim,)))
        off += hidden_dim
    for k in range(depth):
        layout.append((f"head.{k}.weight", off, (hidden_dim,)))
        off += hidden_dim
        layout.append((f"head.{k}.bias", off, (1,)))
        off += 1
    return layout, off


def init_network(input_dim: int, hidden_dim: int, depth: int, seed: int) -> HedgedNetwork:
    """Fresh network: zero biases, weights uniform on +-sqrt(2/fan_in)."""
    if input_dim < 1 or hidden_dim < 1 or depth < 1:
        raise ValueError("input_dim, hidden_dim and depth must all be positive")
    layout, total = _build_layout(input_dim, hidden_dim, depth)
    params = np.zeros(total)
    net = HedgedNetwork(input_dim, hidden_dim, depth, params, layout)
    rng = np.random.default_rng(seed)
    for k in range(depth):
        w = net.tensor(f"trunk.{k}.weight")
        bound = math.sqrt(2.0 / w.shape[1])
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    for k in range(depth):
        w = net.tensor(f"head.{k}.weight")
        bound = math.sqrt(2.0 / w.shape[0])
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return net


def forward(net: HedgedNetwork, x: np.ndarray) -> ForwardTrace:
    """Run the trunk and every head; expert k's probability reads layer k."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape} does not match input_dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input features")
    activations: list[np.ndarray] = []
    h = x
    for layer in net.trunk:
        h = layer.weights @ h + layer.bias
        np.maximum(h, 0.0, out=h)
        activations.append(h)
    raw = np.empty(net.L)
    for k, head in enumerate(net.heads):
        raw[k] = head.weights[0] @ activations[k] + head.bias[0]
    logits = np.clip(raw, -LOGIT_CLAMP, LOGIT_CLAMP)
    saturated = np.abs(raw) > LOGIT_CLAMP
    # the clamp bounds the logits, so the plain logistic cannot overflow
    probs = 1.0 / (1.0 + np.exp(-logits))
    return ForwardTrace(x=x, layer_activations=activations, head_logits=logits,
                        head_saturated=saturated, expert_probs=probs)


def backward(net: HedgedNetwork, trace: ForwardTrace, p: ExpertWeights, lam: float,
             y: int, objective: NPObjective) -> np.ndarray:
    """Exact gradient of the per-round Lagrangian w.r.t. every parameter.

    Returns a flat array in the network's parameter layout.
    """
    if len(trace.layer_activations) != net.L:
        raise ValueError("trace does not match this network's depth")
    if p.num_real != net.L:
        raise ValueError(f"expert weights cover {p.num_real} experts, network has {net.L}")
    artificial = float(objective.constraint_class) if p.includes_artificial else None
    b = combine(p, trace.expert_probs, artificial)
    dl_db = obj_mod.grad_b(b, lam, y, objective)

    probs = trace.expert_probs
    real_w = p.real_weights()
    # sensitivity at each head's (clamped) logit; zero where the clamp saturated
    dz = dl_db * real_w * probs * (1.0 - probs)
    dz[trace.head_saturated] = 0.0

    grads = np.zeros_like(net.params)
    for k in range(net.L):
        (wa, wb, wshape), (ba, _, _) = net._head_bounds[k]
        np.multiply(trace.layer_activations[k], dz[k], out=grads[wa:wb])
        grads[ba] = dz[k]

    # walk the trunk from the deepest layer down, accumulating head + downstream terms
    delta_next: np.ndarray | None = None
    for k in range(net.L - 1, -1, -1):
        g_h = dz[k] * net.heads[k].weights[0]
        if delta_next is not None:
            g_h = g_h + net.trunk[k + 1].weights.T @ delta_next
        delta = g_h * (trace.layer_activations[k] > 0.0)
        prev = trace.x if k == 0 else trace.layer_activations[k - 1]
        (wa, wb, wshape), (ba, bb, _) = net._trunk_bounds[k]
        np.multiply(delta[:, None], prev[None, :], out=grads[wa:wb].reshape(wshape))
        grads[ba:bb] = delta
        delta_next = delta
    return grads


def sgd_nesterov_step(net: HedgedNetwork, grads: np.ndarray,
                      opt: OptimizerState) -> tuple[HedgedNetwork, OptimizerState]:
    """Advance every parameter by one Nesterov-momentum step (in place).

        v <- mu * v - lr * g
        w <- w + mu * v - lr * g
    """
    if grads.shape != net.params.shape:
        raise ValueError("gradient layout does not match the network")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise ValueError(f"non-finite gradient in tensor {net.tensor_name_at(bad)!r}")
    v = opt.velocity
    lr = opt.learning_rate
    mu = opt.momentum
    v *= mu
    v -= lr * grads
    net.params += mu * v
    net.params -= lr * grads
    return net, opt


def save_checkpoint(net: HedgedNetwork, path: str) -> None:
    """Write parameters as a versioned JSON document (row-major values)."""
    doc = {
        "magic": CHECKPOINT_MAGIC,
        "input_dim": net.input_dim,
        "hidden_dim": net.hidden_dim,
        "depth": net.L,
        "tensors": [
            {"name": name, "shape": list(shape),
             "values": net.tensor(name).ravel().tolist()}
            for name, _, shape in net.layout
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path: str) -> HedgedNetwork:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"not a recognised checkpoint (magic {doc.get('magic')!r})")
    layout, total = _build_layout(doc["input_dim"], doc["hidden_dim"], doc["depth"])
    params = np.zeros(total)
    net = HedgedNetwork(doc["input_dim"], doc["hidden_dim"], doc["depth"], params, layout)
    for entry in doc["tensors"]:
        view = net.tensor(entry["name"])
        values = np.asarray(entry["values"], dtype=float).reshape(entry["shape"])
        if values.shape != view.shape:
            raise ValueError(f"tensor {entry['name']!r} has shape {values.shape}, "
                             f"expected {view.shape}")
        view[:] = values
    return net
