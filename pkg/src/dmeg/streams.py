"""Sequential sample suppliers and the online feature normalizer.

Three stream kinds are supported: CSV files consumed in file order, an
i.i.d. two-Gaussian mixture, and a concept-drift stream whose labels come
from a different random teacher network in each segment.  Every generator
is deterministic given its seed and parameters.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

_BLOCK = 2048  # internal generation block; fixed so sequences never depend on the consumer
_PROBE_SIZE = 10_000
_TEACHER_LOGIT_SPREAD = 3.0  # median |logit| after normalisation (~5% label noise)


def derive_seed(master: int, label: str) -> int:
    """Stable 63-bit seed for a named component of a run.

    Labeled hashing keeps independent components (stream, network, teachers,
    baselines) on non-interfering random streams: adding one never shifts
    another.
    """
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class Sample:
    features: np.ndarray
    label: int
    index: int


@dataclass
class StreamSpec:
    """Declarative description of a sample stream; see make_stream()."""

    kind: str
    # csv
    path: str | None = None
    label_column: int = 0
    feature_columns: list[int] | None = None
    limit: int | None = None
    # synthetic (shared)
    dim: int = 0
    T: int = 0
    seed: int = 0
    # stationary mixture
    class_prior: float = 0.5
    separation: float = 1.0
    # concept drift
    num_segments: int = 3
    teacher_depth: int = 8
    teacher_width: int = 32

    def validate(self) -> None:
        if self.kind not in ("csv", "stationary_synthetic", "concept_drift_synthetic"):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.kind == "csv":
            if not self.path:
                raise ValueError("csv stream needs a path")
        else:
            if self.dim < 1:
                raise ValueError("synthetic stream needs dim >= 1")
            if self.T < 0:
                raise ValueError("stream length must be nonnegative")
        if self.kind == "stationary_synthetic":
            if not 0.0 < self.class_prior < 1.0:
                raise ValueError("class_prior must lie in (0,1)")
            if self.separation < 0.0:
                raise ValueError("separation must be nonnegative")
        if self.kind == "concept_drift_synthetic":
            if self.num_segments < 1:
                raise ValueError("need at least one segment")
            if self.teacher_depth < 1 or self.teacher_width < 1:
                raise ValueError("teacher architecture must be positive")


def make_stream(spec: StreamSpec) -> Iterator[Sample]:
    spec.validate()
    if spec.kind == "csv":
        return open_csv_stream(spec.path, spec.label_column, spec.feature_columns, spec.limit)
    if spec.kind == "stationary_synthetic":
        return gen_stationary(spec.seed, spec.dim, spec.T, spec.class_prior, spec.separation)
    return gen_concept_drift(spec.seed, spec.dim, spec.T, spec.num_segments,
                             spec.teacher_depth, spec.teacher_width)


def open_csv_stream(path: str, label_column: int = 0,
                    feature_columns: list[int] | None = None,
                    limit: int | None = None) -> Iterator[Sample]:
    """Yield samples from a comma-separated file in file order.

    A non-numeric first row is treated as a header.  Labels must parse to
    0 or 1; malformed rows raise with their 1-based line number.
    """
    emitted = 0
    arity: int | None = None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for line_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if line_no == 1 and _looks_like_header(row):
                continue
            if limit is not None and emitted >= limit:
                break
            if arity is None:
                arity = len(row)
            elif len(row) != arity:
                raise ValueError(f"row {line_no}: expected {arity} columns, got {len(row)}")
            cols = feature_columns
            if cols is None:
                cols = [i for i in range(len(row)) if i != label_column]
            if label_column >= len(row) or any(c >= len(row) for c in cols):
                raise ValueError(f"row {line_no}: expected at least "
                                 f"{max([label_column] + cols) + 1} columns, got {len(row)}")
            try:
                label_val = float(row[label_column])
                features = np.array([float(row[c]) for c in cols])
            except ValueError as e:
                raise ValueError(f"row {line_no}: non-numeric value ({e})") from None
            if label_val not in (0.0, 1.0):
                raise ValueError(f"row {line_no}: label must be 0 or 1, got {row[label_column]!r}")
            yield Sample(features=features, label=int(label_val), index=emitted)
            emitted += 1


def _looks_like_header(row: list[str]) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def gen_stationary(seed: int, dim: int, T: int, class_prior: float = 0.5,
                   separation: float = 1.0) -> Iterator[Sample]:
    """I.i.d. two-Gaussian mixture along a fixed random unit direction.

    label ~ Bernoulli(class_prior); features ~ N(+sep*u, I) for label 1 and
    N(-sep*u, I) for label 0, so the Bayes error of the balanced problem is
    Phi(-separation).
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    shift = separation * u
    index = 0
    while index < T:
        n = min(_BLOCK, T - index)
        labels = (rng.random(n) < class_prior).astype(np.int64)
        feats = rng.standard_normal((n, dim))
        feats += np.where(labels[:, None] == 1, shift, -shift)
        for i in range(n):
            yield Sample(features=feats[i], label=int(labels[i]), index=index)
            index += 1


class _Teacher:
    """Random deep ReLU network emitting a scalar logit, bias-centred."""

    def __init__(self, seed: int, dim: int, depth: int, width: int):
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        fan_in = dim
        for _ in range(depth):
            self.weights.append(rng.standard_normal((width, fan_in)) * math.sqrt(2.0 / fan_in))
            self.biases.append(np.zeros(width))
            fan_in = width
        self.out_w = rng.standard_normal(fan_in) * math.sqrt(2.0 / fan_in)
        self.out_b = 0.0
        # re-centre so roughly half the probe draws land on each side of 0
        # (keeping both labels present), then normalise the spread so label
        # noise is comparable across seeds and architectures
        probe = rng.standard_normal((_PROBE_SIZE, dim))
        z = self.logits(probe)
        mid = float(np.median(z))
        spread = max(float(np.median(np.abs(z - mid))), 1e-6)
        scale = _TEACHER_LOGIT_SPREAD / spread
        self.out_w *= scale
        self.out_b = -mid * scale

    def logits(self, X: np.ndarray) -> np.ndarray:
        H = X
        for w, b in zip(self.weights, self.biases):
            H = np.maximum(H @ w.T + b, 0.0)
        return H @ self.out_w + self.out_b


def gen_concept_drift(seed: int, dim: int, T: int, num_segments: int = 3,
                      teacher_depth: int = 8, teacher_width: int = 32) -> Iterator[Sample]:
    """Teacher-labelled stream whose teacher is redrawn at each segment boundary.

    Segment s covers rounds [floor(T*s/n), floor(T*(s+1)/n)); features are
    N(0, I) and label = 1 with probability logistic(teacher_s(x)).
    """
    feat_rng = np.random.default_rng(derive_seed(seed, "features"))
    index = 0
    for s in range(num_segments):
        start = T * s // num_segments
        end = T * (s + 1) // num_segments
        if end <= start:
            continue
        teacher = _Teacher(derive_seed(seed, f"teacher-{s}"), dim, teacher_depth, teacher_width)
        pos = start
        while pos < end:
            n = min(_BLOCK, end - pos)
            feats = feat_rng.standard_normal((n, dim))
            z = teacher.logits(feats)
            probs = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                             np.exp(np.minimum(z, 0.0)) / (1.0 + np.exp(np.minimum(z, 0.0))))
            labels = (feat_rng.random(n) < probs).astype(np.int64)
            for i in range(n):
                yield Sample(features=feats[i], label=int(labels[i]), index=index)
                index += 1
            pos += n


class NormalizerState:
    """Online per-feature mean/variance (Welford accumulation)."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def variance(self) -> np.ndarray:
        if self.count < 1:
            return np.zeros_like(self.m2)
        return self.m2 / self.count


NORMALIZER_EPS = 1e-8


def normalize(sample: Sample, state: NormalizerState) -> tuple[Sample, NormalizerState]:
    """Standardise with statistics of strictly earlier samples, then fold this one in.

    Cold start: the first sample passes through unchanged, and until a
    variance estimate exists (two prior samples) the scale falls back to 1.
    """
    x = sample.features
    if x.shape != state.mean.shape:
        raise ValueError(f"feature dim {x.shape} does not match normalizer {state.mean.shape}")
    if state.count == 0:
        out = x.copy()
    elif state.count == 1:
        out = (x - state.mean) / math.sqrt(1.0 + NORMALIZER_EPS)
    else:
        out = (x - state.mean) / np.sqrt(state.variance() + NORMALIZER_EPS)
    state.count += 1
    delta = x - state.mean
    state.mean += delta / state.count
    state.m2 += delta * (x - state.mean)
    return Sample(features=out, label=sample.label, index=sample.index), state
