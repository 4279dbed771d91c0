"""Feed-forward state-posterior network: forward pass, weighted cross-entropy
gradients, and SGD updates.

All arithmetic is float64.  The gradient convention throughout is ascent:
``weighted_ce_gradient`` returns the gradient of the weighted log-likelihood
and ``sgd_step`` adds it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    NumericError,
    SchemaError,
    SchemaVersionError,
    ShapeError,
    ValidationError,
)

MODEL_MAGIC = b"HSAM"
MODEL_SCHEMA_VERSION = 1


@dataclass
class ArchConfig:
    feature_dim: int
    num_states: int
    hidden_sizes: tuple[int, ...] = (128, 128)
    splice: int = 5
    prior_floor: float = 1e-8

    def validate(self):
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        if self.num_states < 1:
            raise ConfigurationError("num_states must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError("hidden_sizes entries must be >= 1")
        if self.splice < 0:
            raise ConfigurationError("splice must be >= 0")
        if not 0.0 < self.prior_floor < 1.0:
            raise ConfigurationError("prior_floor must be in (0, 1)")

    @property
    def input_dim(self):
        return self.feature_dim * (2 * self.splice + 1)


@dataclass
class AcousticModel:
    """Immutable-by-convention parameter set; updates return new instances."""

    arch: ArchConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    state_priors: np.ndarray

    @property
    def num_states(self):
        return self.arch.num_states

    def copy(self):
        return AcousticModel(
            arch=self.arch,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            state_priors=self.state_priors.copy(),
        )

    def param_count(self):
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class FrameGradientRequest:
    """One utterance's frames, per-frame state labels, and a scalar weight."""

    frames: np.ndarray  # (T, feature_dim)
    labels: np.ndarray  # (T,) int state ids
    weight: float
    utterance_id: str = ""

    def validate(self, num_states):
        if len(self.labels) != len(self.frames):
            raise ValidationError(
                f"utterance {self.utterance_id!r}: {len(self.labels)} labels "
                f"for {len(self.frames)} frames"
            )
        bad = np.nonzero((self.labels < 0) | (self.labels >= num_states))[0]
        if bad.size:
            raise ValidationError(
                f"utterance {self.utterance_id!r}: label {int(self.labels[bad[0]])} "
                f"out of range at frame {int(bad[0])}"
            )


@dataclass
class Gradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def global_norm(self):
        sq = sum(float(np.sum(w * w)) for w in self.weights)
        sq += sum(float(np.sum(b * b)) for b in self.biases)
        return float(np.sqrt(sq))

    def is_finite(self):
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )

    def scaled(self, factor):
        return Gradient(
            weights=[w * factor for w in self.weights],
            biases=[b * factor for b in self.biases],
        )

    @staticmethod
    def zeros_like(model: AcousticModel):
        return Gradient(
            weights=[np.zeros_like(w) for w in model.weights],
            biases=[np.zeros_like(b) for b in model.biases],
        )


def init_model(arch: ArchConfig, seed: int) -> AcousticModel:
    """Uniform fan-in-scaled init: Var[w] = 1/fan_in; biases zero; priors uniform."""
    arch.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sizes = [arch.input_dim, *arch.hidden_sizes, arch.num_states]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    priors = np.full(arch.num_states, 1.0 / arch.num_states)
    return AcousticModel(arch=arch, weights=weights, biases=biases, state_priors=priors)


def splice_frames(frames: np.ndarray, splice: int) -> np.ndarray:
    """Stack +/- splice context frames with edge replication; returns float64."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"frames must be 2-D, got shape {x.shape}")
    if splice == 0:
        return x
    padded = np.pad(x, ((splice, splice), (0, 0)), mode="edge")
    t = x.shape[0]
    return np.concatenate([padded[k : k + t] for k in range(2 * splice + 1)], axis=1)


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _forward_activations(model: AcousticModel, spliced: np.ndarray):
    """All layer activations; last entry is the pre-softmax logit matrix."""
    if spliced.shape[1] != model.arch.input_dim:
        raise ShapeError(
            f"spliced input dim {spliced.shape[1]} != model input dim {model.arch.input_dim}"
        )
    acts = [spliced]
    h = spliced
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else _sigmoid(z)
        acts.append(h)
    return acts


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def log_posteriors(model: AcousticModel, frames: np.ndarray) -> np.ndarray:
    """Per-frame log state posteriors, shape (T, num_states)."""
    spliced = splice_frames(frames, model.arch.splice)
    logits = _forward_activations(model, spliced)[-1]
    return _log_softmax(logits)


def forward_posteriors(model: AcousticModel, frames: np.ndarray) -> np.ndarray:
    """Per-frame state posterior matrix; each row sums to 1."""
    return np.exp(log_posteriors(model, frames))


def weighted_ce_gradient(
    model: AcousticModel,
    requests: list[FrameGradientRequest],
    normalize_per_frame: bool = False,
) -> Gradient:
    """Sum of w * d(log P(labels | frames))/d(theta) over requests.

    Accumulation order is fixed: requests are concatenated in list order and
    each layer's contribution is one matrix product over the concatenated
    frames, so results are bit-reproducible for a given request list.
    Requests sharing the same frames array object are forwarded once.
    """
    grad = Gradient.zeros_like(model)
    if not requests:
        return grad
    for req in requests:
        req.validate(model.num_states)

    # Group consecutive requests on identical frame arrays (candidate pairs
    # from one utterance) so the forward pass runs once per utterance.
    groups = []
    for req in requests:
        if groups and groups[-1][0] is req.frames:
            groups[-1][1].append(req)
        else:
            groups.append((req.frames, [req]))

    frame_weights = []
    label_cols = []
    spliced_blocks = []
    for frames, reqs in groups:
        t = len(frames)
        spliced_blocks.append(splice_frames(frames, model.arch.splice))
        wcol = np.zeros((t, len(reqs)))
        lcol = np.zeros((t, len(reqs)), dtype=np.intp)
        for j, req in enumerate(reqs):
            scale = req.weight / t if (normalize_per_frame and t > 0) else req.weight
            wcol[:, j] = scale
            lcol[:, j] = req.labels
        frame_weights.append(wcol)
        label_cols.append(lcol)

    x = np.concatenate(spliced_blocks, axis=0)
    acts = _forward_activations(model, x)
    probs = np.exp(_log_softmax(acts[-1]))

    # Output delta for ascent on sum_j w_j * log p[label_j]: each request in a
    # group adds w * (onehot(label) - p) at its frames.
    n = x.shape[0]
    delta = np.zeros_like(probs)
    row = 0
    for wcol, lcol in zip(frame_weights, label_cols):
        t, m = wcol.shape
        rows = np.arange(row, row + t)
        total_w = wcol.sum(axis=1)
        delta[rows] -= total_w[:, None] * probs[rows]
        for j in range(m):
            np.add.at(delta, (rows, lcol[:, j]), wcol[:, j])
        row += t
    assert row == n

    for i in range(len(model.weights) - 1, -1, -1):
        grad.weights[i][...] = acts[i].T @ delta
        grad.biases[i][...] = delta.sum(axis=0)
        if i > 0:
            h = acts[i]
            delta = (delta @ model.weights[i].T) * (h * (1.0 - h))
    return grad


def sgd_step(
    model: AcousticModel, gradient: Gradient, learning_rate: float, clip_norm: float = 5.0
) -> AcousticModel:
    """theta_hat = theta + lr * g after global-norm clipping; priors untouched."""
    if learning_rate <= 0:
        raise ConfigurationError("learning_rate must be > 0")
    if not gradient.is_finite():
        raise NumericError("gradient contains non-finite values; update refused")
    norm = gradient.global_norm()
    g = gradient
    if clip_norm is not None and norm > clip_norm and norm > 0:
        g = gradient.scaled(clip_norm / norm)
    return AcousticModel(
        arch=model.arch,
        weights=[w + learning_rate * dw for w, dw in zip(model.weights, g.weights)],
        biases=[b + learning_rate * db for b, db in zip(model.biases, g.biases)],
        state_priors=model.state_priors,
    )


def estimate_priors(alignments, num_states: int, floor: float = 1e-8) -> np.ndarray:
    """Floored, normalized state frequency counts from forced alignments.

    States at or below the floor get exactly ``floor``; the remaining mass is
    rescaled so the vector sums to 1.
    """
    counts = np.zeros(num_states)
    total = 0
    for ali in alignments:
        ali = np.asarray(ali)
        counts += np.bincount(ali, minlength=num_states)
        total += len(ali)
    if total == 0:
        raise ValidationError("cannot estimate priors from an empty alignment set")
    raw = counts / total
    floored = raw <= floor
    if floored.all():
        raise ValidationError("prior floor leaves no probability mass")
    priors = np.where(floored, floor, raw)
    free_mass = 1.0 - floor * int(floored.sum())
    priors[~floored] *= free_mass / priors[~floored].sum()
    return priors


# ---------------------------------------------------------------------------
# Model file: magic, version, JSON arch header, raw little-endian f64 tensors.
# ---------------------------------------------------------------------------


def save_model(model: AcousticModel, path):
    header = {
        "feature_dim": model.arch.feature_dim,
        "num_states": model.arch.num_states,
        "hidden_sizes": list(model.arch.hidden_sizes),
        "splice": model.arch.splice,
        "prior_floor": model.arch.prior_floor,
    }
    header_b = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", MODEL_SCHEMA_VERSION, len(header_b)))
        f.write(header_b)
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.state_priors, dtype="<f8").tobytes())


def load_model(path) -> AcousticModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise SchemaError(f"not a model file: {path}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionError(version, MODEL_SCHEMA_VERSION)
    try:
        header = json.loads(data[12 : 12 + header_len])
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"corrupt model header: {exc}") from exc
    arch = ArchConfig(
        feature_dim=header["feature_dim"],
        num_states=header["num_states"],
        hidden_sizes=tuple(header["hidden_sizes"]),
        splice=header["splice"],
        prior_floor=header["prior_floor"],
    )
    sizes = [arch.input_dim, *arch.hidden_sizes, arch.num_states]
    pos = 12 + header_len
    weights, biases = [], []

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(data):
            raise SchemaError("truncated model file")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).copy()
        pos = end
        return arr

    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(take(fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(take(fan_out))
    priors = take(arch.num_states)
    if pos != len(data):
        raise SchemaError("trailing bytes in model file")
    return AcousticModel(arch=arch, weights=weights, biases=biases, state_priors=priors)
