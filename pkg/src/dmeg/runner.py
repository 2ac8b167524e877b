"""Experiment orchestration: the per-round online loop, baselines, metrics, reports.

The protocol is strictly prequential: each round commits a hard prediction
(mixture >= 0.5) before the label is revealed, then performs the three
updates (expert weights, dual variable, network backprop) in fixed order.
Metrics are windowed counts over the committed predictions; type-I is the
error rate conditioned on the constraint class, type-II on the other class.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import net as net_mod
from . import objectives as obj_mod
from .hedge import (DualVariable, ExpertWeights, combine, constraint_certificate,
                    eg_update_experts, eg_update_lambda, grad_p, theorem_rates)
from .objectives import NPObjective
from .streams import NormalizerState, StreamSpec, derive_seed, make_stream, normalize

DEFAULT_BL_DEPTHS = [2, 3, 4, 8, 16]
DEFAULT_GAMMA_SWEEP = [0.15, 0.18, 0.21, 0.24, 0.27, 0.3]
ALGORITHMS = ("dmeg", "bl", "mol", "dmeg_unconstrained")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericAbort(RuntimeError):
    """Non-finite value encountered mid-run (CLI exit code 3)."""

    def __init__(self, round_index: int, message: str):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index


@dataclass
class ExperimentConfig:
    stream: StreamSpec
    hidden_dim: int = 32
    depth: int = 6
    gamma: float = 0.2
    constraint_class: int = 1
    conditioning: str = "prior_weighted"
    loss_clip: float = 4.0
    G1: float | None = None
    G2: float | None = None
    rates_mode: str = "fixed"     # "fixed" or "theorem"
    eta: float = 0.01
    eta_lambda: float = 0.01
    lambda_max: float = 10.0
    learning_rate: float = 0.001
    momentum: float = 0.9
    algorithm: str = "dmeg"
    bl_depths: list[int] = field(default_factory=lambda: list(DEFAULT_BL_DEPTHS))
    gamma_sweep: list[float] = field(default_factory=lambda: list(DEFAULT_GAMMA_SWEEP))
    seed: int = 0
    output_dir: str | None = None
    window: int = 10_000
    artificial_expert: bool = False
    normalize: bool | None = None  # None: standardize csv streams only

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        try:
            self.stream.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.hidden_dim < 1 or self.depth < 1:
            raise ConfigError("architecture dims must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0,1), got {self.gamma}")
        for g in self.gamma_sweep:
            if not 0.0 < g < 1.0:
                raise ConfigError(f"sweep gamma must lie in (0,1), got {g}")
        for d in self.bl_depths:
            if d < 1:
                raise ConfigError(f"bl depth must be >= 1, got {d}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.rates_mode not in ("fixed", "theorem"):
            raise ConfigError(f"rates mode must be 'fixed' or 'theorem', got {self.rates_mode!r}")
        if self.rates_mode == "fixed" and (self.eta <= 0 or self.eta_lambda <= 0):
            raise ConfigError("fixed rates must be positive")
        if self.rates_mode == "theorem" and self.stream.T <= 0:
            raise ConfigError("theorem rates need a known positive stream length")
        if self.learning_rate <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigError("bad optimizer settings")
        if self.lambda_max < 1.0:
            raise ConfigError("lambda_max must be >= 1")

    def make_objective(self) -> NPObjective:
        return NPObjective(gamma=self.gamma, constraint_class=self.constraint_class,
                           conditioning=self.conditioning, loss_clip=self.loss_clip,
                           G1=self.G1, G2=self.G2, lambda_max=self.lambda_max)

    def resolved_rates(self, obj: NPObjective) -> tuple[float, float]:
        if self.rates_mode == "theorem":
            sched = theorem_rates(obj.G1, obj.G2, self.stream.T, self.depth)
            return sched.eta, sched.eta_lambda
        return self.eta, self.eta_lambda

    def should_normalize(self) -> bool:
        if self.normalize is None:
            return self.stream.kind == "csv"
        return self.normalize

    def to_dict(self) -> dict:
        s = self.stream
        return {
            "stream": {
                "kind": s.kind, "path": s.path, "label_column": s.label_column,
                "feature_columns": s.feature_columns, "limit": s.limit,
                "dim": s.dim, "T": s.T, "seed": s.seed,
                "class_prior": s.class_prior, "separation": s.separation,
                "num_segments": s.num_segments, "teacher_depth": s.teacher_depth,
                "teacher_width": s.teacher_width,
            },
            "architecture": {"hidden_dim": self.hidden_dim, "depth": self.depth},
            "objective": {
                "gamma": self.gamma, "constraint_class": self.constraint_class,
                "conditioning": self.conditioning, "loss_clip": self.loss_clip,
                "G1": self.G1, "G2": self.G2,
            },
            "rates": {"mode": self.rates_mode, "eta": self.eta, "eta_lambda": self.eta_lambda},
            "lambda_max": self.lambda_max,
            "optimizer": {"learning_rate": self.learning_rate, "momentum": self.momentum},
            "algorithm": self.algorithm,
            "bl_depths": list(self.bl_depths),
            "gamma_sweep": list(self.gamma_sweep),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "window": self.window,
            "artificial_expert": self.artificial_expert,
            "normalize": self.normalize,
        }


_STREAM_KEYS = {"kind", "path", "label_column", "feature_columns", "limit", "dim", "T",
                "seed", "class_prior", "separation", "num_segments", "teacher_depth",
                "teacher_width"}
_TOP_KEYS = {"stream", "architecture", "objective", "rates", "lambda_max", "optimizer",
             "algorithm", "bl_depths", "gamma_sweep", "seed", "output_dir", "window",
             "artificial_expert", "normalize"}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "stream" not in doc or not isinstance(doc["stream"], dict):
        raise ConfigError("config needs a 'stream' object")
    unknown = set(doc["stream"]) - _STREAM_KEYS
    if unknown:
        raise ConfigError(f"unknown stream keys: {sorted(unknown)}")
    seed = int(doc.get("seed", 0))
    sdoc = dict(doc["stream"])
    if "kind" not in sdoc:
        raise ConfigError("stream needs a 'kind'")
    if "seed" not in sdoc:
        sdoc["seed"] = derive_seed(seed, "stream")
    try:
        stream = StreamSpec(**sdoc)
    except TypeError as e:
        raise ConfigError(f"bad stream block: {e}") from None
    arch = doc.get("architecture", {})
    objective = doc.get("objective", {})
    rates = doc.get("rates", {})
    optimizer = doc.get("optimizer", {})
    for name, block, allowed in (
        ("architecture", arch, {"hidden_dim", "depth"}),
        ("objective", objective, {"gamma", "constraint_class", "conditioning", "loss_clip", "G1", "G2"}),
        ("rates", rates, {"mode", "eta", "eta_lambda"}),
        ("optimizer", optimizer, {"learning_rate", "momentum"}),
    ):
        if not isinstance(block, dict):
            raise ConfigError(f"{name} must be an object")
        bad = set(block) - allowed
        if bad:
            raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
    try:
        return ExperimentConfig(
            stream=stream,
            hidden_dim=int(arch.get("hidden_dim", 32)),
            depth=int(arch.get("depth", 6)),
            gamma=float(objective.get("gamma", 0.2)),
            constraint_class=int(objective.get("constraint_class", 1)),
            conditioning=objective.get("conditioning", "prior_weighted"),
            loss_clip=float(objective.get("loss_clip", 4.0)),
            G1=objective.get("G1"),
            G2=objective.get("G2"),
            rates_mode=rates.get("mode", "fixed"),
            eta=float(rates.get("eta", 0.01)),
            eta_lambda=float(rates.get("eta_lambda", 0.01)),
            lambda_max=float(doc.get("lambda_max", 10.0)),
            learning_rate=float(optimizer.get("learning_rate", 0.001)),
            momentum=float(optimizer.get("momentum", 0.9)),
            algorithm=doc.get("algorithm", "dmeg"),
            bl_depths=[int(d) for d in doc.get("bl_depths", DEFAULT_BL_DEPTHS)],
            gamma_sweep=[float(g) for g in doc.get("gamma_sweep", DEFAULT_GAMMA_SWEEP)],
            seed=seed,
            output_dir=doc.get("output_dir"),
            window=int(doc.get("window", 10_000)),
            artificial_expert=bool(doc.get("artificial_expert", False)),
            normalize=doc.get("normalize"),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# metrics


@dataclass
class WindowRecord:
    round: int
    type1: float
    type2: float
    constraint_avg: float
    lam: float
    p: tuple[float, ...]
    expert_type1: tuple[float, ...]
    expert_type2: tuple[float, ...]


@dataclass
class MetricsLog:
    algorithm: str
    gamma: float
    seed: int
    windows: list[WindowRecord]
    final: dict
    y: np.ndarray            # revealed labels, uint8
    yhat: np.ndarray         # committed hard predictions, uint8
    expert_yhat: np.ndarray | None  # (rounds, num_experts) committed per-expert predictions


def _rate(errors: int, count: int) -> float:
    return errors / count if count > 0 else math.nan


class _Accumulator:
    """Windowed and cumulative error counts over committed predictions."""

    def __init__(self, window: int, constraint_class: int, num_experts: int, capacity: int):
        self.window = window
        self.cls = constraint_class
        self.num_experts = num_experts
        cap = max(capacity, 1024)
        self.y = np.empty(cap, dtype=np.uint8)
        self.yhat = np.empty(cap, dtype=np.uint8)
        self.expert_yhat = np.empty((cap, num_experts), dtype=np.uint8) if num_experts else None
        self.n = 0
        self.constraint_sum = 0.0
        self.records: list[WindowRecord] = []
        self._reset_window()

    def _reset_window(self) -> None:
        self.w_err_c = 0
        self.w_cnt_c = 0
        self.w_err_o = 0
        self.w_cnt_o = 0
        if self.num_experts:
            self.w_exp_err_c = np.zeros(self.num_experts, dtype=np.int64)
            self.w_exp_err_o = np.zeros(self.num_experts, dtype=np.int64)

    def _grow(self) -> None:
        cap = self.y.size * 2
        self.y = np.resize(self.y, cap)
        self.yhat = np.resize(self.yhat, cap)
        if self.expert_yhat is not None:
            new = np.empty((cap, self.num_experts), dtype=np.uint8)
            new[:self.n] = self.expert_yhat[:self.n]
            self.expert_yhat = new

    def record(self, y: int, yhat: int, expert_yhat: np.ndarray | None,
               cl_value: float, lam: float, p: np.ndarray) -> None:
        if self.n >= self.y.size:
            self._grow()
        self.y[self.n] = y
        self.yhat[self.n] = yhat
        if self.expert_yhat is not None:
            self.expert_yhat[self.n] = expert_yhat
        self.n += 1
        self.constraint_sum += cl_value
        wrong = yhat != y
        if y == self.cls:
            self.w_cnt_c += 1
            self.w_err_c += wrong
            if self.num_experts:
                self.w_exp_err_c += expert_yhat != y
        else:
            self.w_cnt_o += 1
            self.w_err_o += wrong
            if self.num_experts:
                self.w_exp_err_o += expert_yhat != y
        if self.n % self.window == 0:
            self._emit(lam, p)

    def _emit(self, lam: float, p: np.ndarray) -> None:
        self.records.append(WindowRecord(
            round=self.n,
            type1=_rate(self.w_err_c, self.w_cnt_c),
            type2=_rate(self.w_err_o, self.w_cnt_o),
            constraint_avg=self.constraint_sum / self.n,
            lam=float(lam),
            p=tuple(float(v) for v in p),
            expert_type1=tuple(_rate(int(e), self.w_cnt_c) for e in
                               (self.w_exp_err_c if self.num_experts else ())),
            expert_type2=tuple(_rate(int(e), self.w_cnt_o) for e in
                               (self.w_exp_err_o if self.num_experts else ())),
        ))
        self._reset_window()

    def finalize(self, lam: float, p: np.ndarray, gamma: float) -> MetricsLog:
        if self.n % self.window != 0 and (self.w_cnt_c + self.w_cnt_o) > 0:
            self._emit(lam, p)
        y = self.y[:self.n]
        yhat = self.yhat[:self.n]
        expert_yhat = self.expert_yhat[:self.n] if self.expert_yhat is not None else None
        mask_c = y == self.cls
        cnt_c = int(mask_c.sum())
        cnt_o = self.n - cnt_c
        final = {
            "rounds": self.n,
            "type1": _rate(int((yhat[mask_c] != y[mask_c]).sum()), cnt_c),
            "type2": _rate(int((yhat[~mask_c] != y[~mask_c]).sum()), cnt_o),
            "constraint_avg": self.constraint_sum / self.n if self.n else math.nan,
            "lambda": float(lam),
            "p": [float(v) for v in p],
        }
        if expert_yhat is not None and self.num_experts:
            final["expert_type1"] = [
                _rate(int((expert_yhat[mask_c, k] != y[mask_c]).sum()), cnt_c)
                for k in range(self.num_experts)]
            final["expert_type2"] = [
                _rate(int((expert_yhat[~mask_c, k] != y[~mask_c]).sum()), cnt_o)
                for k in range(self.num_experts)]
        else:
            final["expert_type1"] = []
            final["expert_type2"] = []
        q1, q2 = [], []
        for q in range(4):
            lo, hi = self.n * q // 4, self.n * (q + 1) // 4
            ys, ps = y[lo:hi], yhat[lo:hi]
            mc = ys == self.cls
            q1.append(_rate(int((ps[mc] != ys[mc]).sum()), int(mc.sum())))
            q2.append(_rate(int((ps[~mc] != ys[~mc]).sum()), int((~mc).sum())))
        final["quarter_type1"] = q1
        final["quarter_type2"] = q2
        log = MetricsLog(algorithm="", gamma=gamma, seed=0, windows=self.records,
                         final=final, y=y, yhat=yhat, expert_yhat=expert_yhat)
        if final["expert_type1"]:
            log.final["best_expert"] = extract_best_expert(log, gamma)
        return log


def extract_best_expert(log: MetricsLog, gamma: float) -> dict:
    """Lowest type-II among the experts whose final type-I meets gamma.

    Returns an explicit infeasible marker when no expert qualifies.
    """
    t1 = log.final.get("expert_type1") or []
    t2 = log.final.get("expert_type2") or []
    if not t1:
        raise ValueError("log carries no per-expert metrics")
    best: tuple[int, float, float] | None = None
    for k, (a, b) in enumerate(zip(t1, t2)):
        if math.isnan(a) or a > gamma:
            continue
        if best is None or (not math.isnan(b) and (math.isnan(best[1]) or b < best[1])):
            best = (k, b, a)
    if best is None:
        return {"feasible": False, "expert": None, "type1": None, "type2": None}
    return {"feasible": True, "expert": best[0], "type1": best[2], "type2": best[1]}


# ---------------------------------------------------------------------------
# online loops


def _stable_sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def run_dmeg(config: ExperimentConfig) -> MetricsLog:
    """Full online loop: hedged experts, dual-controlled constraint, backprop.

    With algorithm 'dmeg_unconstrained' the dual mechanism is frozen and the
    network trains on the plain (clipped) cross-entropy of the mixture; this
    is the deep-online baseline with no constraint handling.
    """
    constrained = config.algorithm != "dmeg_unconstrained"
    obj = config.make_objective()
    eta, eta_lambda = config.resolved_rates(obj)
    dim = _stream_dim(config)
    net = net_mod.init_network(dim, config.hidden_dim, config.depth,
                               derive_seed(config.seed, "net"))
    opt = net_mod.OptimizerState(net.num_params(), config.learning_rate, config.momentum)
    weights = ExpertWeights(config.depth, eta, include_artificial=config.artificial_expert)
    dual = DualVariable(config.lambda_max, eta_lambda)
    artificial = float(obj.constraint_class) if config.artificial_expert else None
    acc = _Accumulator(config.window, obj.constraint_class, config.depth,
                       capacity=max(config.stream.T, 0))
    norm_state = NormalizerState(dim) if config.should_normalize() else None

    t = 0
    for sample in make_stream(config.stream):
        t += 1
        if norm_state is not None:
            sample, norm_state = normalize(sample, norm_state)
        try:
            trace = net_mod.forward(net, sample.features)
        except ValueError as e:
            raise NumericAbort(t, str(e)) from None
        b = combine(weights, trace.expert_probs, artificial)
        if not math.isfinite(b):
            raise NumericAbort(t, "non-finite mixture prediction")
        yhat = 1 if b >= 0.5 else 0
        expert_hard = (trace.expert_probs >= 0.5).astype(np.uint8)
        y = sample.label

        lam_played = dual.lam if constrained else 0.0
        cl = obj_mod.constraint_loss(b, y, obj)
        # backprop gradient is taken at the pair played this round; the
        # unconstrained variant trains on main + constraint = plain BCE
        lam_backprop = lam_played if constrained else 1.0
        grads = net_mod.backward(net, trace, weights, lam_backprop, y, obj)
        gb = obj_mod.grad_b(b, lam_backprop, y, obj)
        gp = grad_p(weights, gb, trace.expert_probs, artificial, clip=obj.G1)
        eg_update_experts(weights, gp)
        if constrained:
            eg_update_lambda(dual, obj_mod.grad_lambda(b, y, obj), clip=obj.G2)
        obj.observe_label(y)
        try:
            net_mod.sgd_nesterov_step(net, grads, opt)
        except ValueError as e:
            raise NumericAbort(t, str(e)) from None
        acc.record(y, yhat, expert_hard, cl,
                   dual.lam if constrained else 0.0, weights.p)

    lam_final = dual.lam if constrained else 0.0
    log = acc.finalize(lam_final, weights.p, config.gamma)
    log.algorithm = config.algorithm
    log.gamma = config.gamma
    log.seed = config.seed
    return log


def _stream_dim(config: ExperimentConfig) -> int:
    if config.stream.kind == "csv":
        # peek at the first row to learn the feature arity
        it = make_stream(config.stream)
        first = next(it, None)
        it.close()
        if first is None:
            raise ConfigError(f"csv stream {config.stream.path!r} is empty")
        return first.features.size
    return config.stream.dim


def _single_head_backward(net: net_mod.HedgedNetwork, trace: net_mod.ForwardTrace,
                          dz: float) -> np.ndarray:
    """Backprop through the deepest head only; independent of the hedged path."""
    L = net.L
    grads = np.zeros_like(net.params)
    k = L - 1
    np.multiply(trace.layer_activations[k], dz, out=net.view_of(grads, f"head.{k}.weight"))
    net.view_of(grads, f"head.{k}.bias")[0] = dz
    delta = dz * net.heads[k].weights[0] * (trace.layer_activations[k] > 0.0)
    while True:
        prev = trace.x if k == 0 else trace.layer_activations[k - 1]
        gw = net.view_of(grads, f"trunk.{k}.weight")
        np.multiply(delta[:, None], prev[None, :], out=gw)
        net.view_of(grads, f"trunk.{k}.bias")[:] = delta
        if k == 0:
            break
        k -= 1
        delta = (net.trunk[k + 1].weights.T @ delta) * (trace.layer_activations[k] > 0.0)
    return grads


def run_baseline_bl(config: ExperimentConfig, total_depth: int | None = None
                    ) -> list[MetricsLog] | MetricsLog:
    """Unconstrained single-head networks, one run per depth in bl_depths.

    Depth counts hidden layers plus the output layer, matching the experts'
    depth convention; depth 1 therefore degenerates to a linear model.
    Pass total_depth to run one instance and get a single log back.
    """
    if total_depth is not None:
        return _run_bl_single(config, total_depth)
    return [_run_bl_single(config, d) for d in config.bl_depths]


def _run_bl_single(config: ExperimentConfig, total_depth: int) -> MetricsLog:
    if total_depth < 1:
        raise ConfigError(f"bl depth must be >= 1, got {total_depth}")
    if total_depth == 1:
        log = _run_linear(config, constrained=False)
        log.algorithm = "bl_d1"
        return log
    trunk_depth = total_depth - 1
    obj = config.make_objective()
    dim = _stream_dim(config)
    net = net_mod.init_network(dim, config.hidden_dim, trunk_depth,
                               derive_seed(config.seed, "net"))
    opt = net_mod.OptimizerState(net.num_params(), config.learning_rate, config.momentum)
    acc = _Accumulator(config.window, obj.constraint_class, 0,
                       capacity=max(config.stream.T, 0))
    norm_state = NormalizerState(dim) if config.should_normalize() else None

    t = 0
    for sample in make_stream(config.stream):
        t += 1
        if norm_state is not None:
            sample, norm_state = normalize(sample, norm_state)
        try:
            trace = net_mod.forward(net, sample.features)
        except ValueError as e:
            raise NumericAbort(t, str(e)) from None
        b = float(trace.expert_probs[-1])
        yhat = 1 if b >= 0.5 else 0
        y = sample.label
        # plain clipped BCE: main + constraint with unit coefficient
        gb = obj_mod.grad_b(b, 1.0, y, obj)
        dz = 0.0 if trace.head_saturated[-1] else gb * b * (1.0 - b)
        grads = _single_head_backward(net, trace, dz)
        obj.observe_label(y)
        try:
            net_mod.sgd_nesterov_step(net, grads, opt)
        except ValueError as e:
            raise NumericAbort(t, str(e)) from None
        acc.record(y, yhat, None, obj_mod.constraint_loss(b, y, obj), 0.0,
                   np.ones(1))
    log = acc.finalize(0.0, np.ones(1), config.gamma)
    log.algorithm = f"bl_d{total_depth}"
    log.gamma = config.gamma
    log.seed = config.seed
    return log


def run_baseline_mol(config: ExperimentConfig, constrained: bool = True) -> MetricsLog:
    """Shallow multi-objective baseline: a linear model on the same Lagrangian."""
    log = _run_linear(config, constrained=constrained)
    log.algorithm = "mol" if constrained else "mol_unconstrained"
    return log


def _run_linear(config: ExperimentConfig, constrained: bool) -> MetricsLog:
    obj = config.make_objective()
    eta, eta_lambda = config.resolved_rates(obj)
    dim = _stream_dim(config)
    w = np.zeros(dim)
    c = 0.0
    dual = DualVariable(config.lambda_max, eta_lambda)
    acc = _Accumulator(config.window, obj.constraint_class, 0,
                       capacity=max(config.stream.T, 0))
    norm_state = NormalizerState(dim) if config.should_normalize() else None

    t = 0
    for sample in make_stream(config.stream):
        t += 1
        if norm_state is not None:
            sample, norm_state = normalize(sample, norm_state)
        x = sample.features
        z = float(w @ x) + c
        z = min(max(z, -net_mod.LOGIT_CLAMP), net_mod.LOGIT_CLAMP)
        b = _stable_sigmoid(z)
        if not math.isfinite(b):
            raise NumericAbort(t, "non-finite linear prediction")
        yhat = 1 if b >= 0.5 else 0
        y = sample.label
        lam_played = dual.lam if constrained else 0.0
        lam_grad = lam_played if constrained else 1.0
        cl = obj_mod.constraint_loss(b, y, obj)
        dz = obj_mod.grad_b(b, lam_grad, y, obj) * b * (1.0 - b)
        w -= eta * dz * x
        c -= eta * dz
        if constrained:
            eg_update_lambda(dual, obj_mod.grad_lambda(b, y, obj), clip=obj.G2)
        obj.observe_label(y)
        acc.record(y, yhat, None, cl, lam_played, np.ones(1))
    log = acc.finalize(dual.lam if constrained else 0.0, np.ones(1), config.gamma)
    log.gamma = config.gamma
    log.seed = config.seed
    return log


def run_algorithm(config: ExperimentConfig) -> list[MetricsLog]:
    """Dispatch on config.algorithm; always returns a list of logs."""
    if config.algorithm in ("dmeg", "dmeg_unconstrained"):
        return [run_dmeg(config)]
    if config.algorithm == "bl":
        return run_baseline_bl(config)
    return [run_baseline_mol(config)]


def _sweep_worker(args: tuple[ExperimentConfig, float]) -> MetricsLog:
    config, gamma = args
    return run_dmeg(replace(config, gamma=gamma))


def run_gamma_sweep(config: ExperimentConfig, workers: int = 1) -> list[MetricsLog]:
    """One independent run per gamma in config.gamma_sweep, identical stream."""
    jobs = [(config, g) for g in config.gamma_sweep]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_worker, jobs))
    return [_sweep_worker(j) for j in jobs]


# ---------------------------------------------------------------------------
# reports


def _run_tag(log: MetricsLog) -> str:
    return f"{log.algorithm}_g{log.gamma:g}_s{log.seed}"


def emit_report(runs: list[tuple[ExperimentConfig, MetricsLog]], output_dir: str,
                wall_clock: dict[str, float] | None = None) -> list[str]:
    """Write one trajectory CSV and one summary JSON per run.

    Returns the paths written.  Multi-run batches also get a sweep summary
    with the trade-off curve and the quarter-stage type-I table.
    """
    os.makedirs(output_dir, exist_ok=True)
    paths: list[str] = []
    for config, log in runs:
        tag = _run_tag(log)
        csv_path = os.path.join(output_dir, f"{tag}_trajectory.csv")
        p_len = len(log.windows[0].p) if log.windows else len(log.final["p"])
        with open(csv_path, "w") as f:
            cols = ["round", "typeI_window", "typeII_window", "constraint_running_avg",
                    "lambda"] + [f"p_{i}" for i in range(p_len)]
            f.write(",".join(cols) + "\n")
            for rec in log.windows:
                row = [str(rec.round), repr(float(rec.type1)), repr(float(rec.type2)),
                       repr(float(rec.constraint_avg)), repr(float(rec.lam))]
                row += [repr(float(v)) for v in rec.p]
                f.write(",".join(row) + "\n")
        paths.append(csv_path)
        summary = {
            "algorithm": log.algorithm,
            "gamma": log.gamma,
            "seed": log.seed,
            "final": log.final,
            "config": config.to_dict(),
            "config_sha256": config_hash(config),
        }
        if config.stream.T > 0:
            obj = config.make_objective()
            summary["certificate"] = constraint_certificate(
                obj.G1, obj.G2, config.stream.T, config.depth, config.gamma)
        if wall_clock and _run_tag(log) in wall_clock:
            summary["wall_clock_sec"] = wall_clock[_run_tag(log)]
        json_path = os.path.join(output_dir, f"{tag}_summary.json")
        with open(json_path, "w") as f:
            json.dump(summary, f, indent=1, sort_keys=True)
        paths.append(json_path)
    if len(runs) > 1:
        sweep = {
            "tradeoff": [
                {"gamma": log.gamma, "type1": log.final["type1"], "type2": log.final["type2"]}
                for _, log in runs
            ],
            "stage_type1": [
                {"gamma": log.gamma, "quarters": log.final["quarter_type1"]}
                for _, log in runs
            ],
        }
        sweep_path = os.path.join(output_dir, "sweep_summary.json")
        with open(sweep_path, "w") as f:
            json.dump(sweep, f, indent=1, sort_keys=True)
        paths.append(sweep_path)
    return paths


def rederive_report(input_dir: str) -> dict:
    """Rebuild per-run summaries from the trajectory CSVs in a directory."""
    out: dict = {"runs": []}
    for name in sorted(os.listdir(input_dir)):
        if not name.endswith("_trajectory.csv"):
            continue
        path = os.path.join(input_dir, name)
        with open(path) as f:
            header = f.readline().strip().split(",")
            rows = [line.strip().split(",") for line in f if line.strip()]
        entry = {"file": name, "windows": len(rows)}
        if rows:
            last = rows[-1]
            idx = {h: i for i, h in enumerate(header)}
            entry["final_round"] = int(last[idx["round"]])
            entry["final_typeI_window"] = float(last[idx["typeI_window"]])
            entry["final_typeII_window"] = float(last[idx["typeII_window"]])
            entry["final_constraint_avg"] = float(last[idx["constraint_running_avg"]])
            entry["final_lambda"] = float(last[idx["lambda"]])
        out["runs"].append(entry)
    return out
