"""Fully connected autoencoder built on numpy: forward, backprop, Adam.

The anomaly score of a sample is its squared reconstruction residual
divided by the input dimension, computed in min-max scaled space so the
detection threshold is unit-free.  The threshold is the nearest-rank
alpha-percentile of validation-set scores.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyValidationSet,
    FormatVersionMismatch,
    NonFiniteActivation,
    ShapeMismatch,
    UncalibratedDetector,
)
from .util import child_seed, nearest_rank

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer widths (input first, output last) and per-layer activations."""

    layer_dims: tuple
    activations: tuple   # one of 'linear' | 'sigmoid' per affine layer

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer dims {dims}")
        if dims[0] != dims[-1]:
            raise ValueError("input and output dimensions must match")
        if len(self.activations) != len(dims) - 1:
            raise ValueError(
                f"{len(dims) - 1} affine layers need {len(dims) - 1} activations, "
                f"got {len(self.activations)}")
        if any(a not in ("linear", "sigmoid") for a in self.activations):
            raise ValueError(f"unknown activation in {self.activations}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", tuple(self.activations))

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


def default_architecture(input_dim: int) -> NetworkArchitecture:
    """339, 339, 256, 128, 64, 32, 64, 128, 256, 339 at input_dim=339.

    The first hidden layer and the output layer are linear; every other
    layer is sigmoid.
    """
    inner = [d for d in (256, 128, 64, 32, 64, 128, 256) if d < input_dim]
    dims = (input_dim, input_dim, *inner, input_dim)
    acts = ("linear",) + ("sigmoid",) * len(inner) + ("linear",)
    return NetworkArchitecture(layer_dims=dims, activations=acts)


@dataclass
class ModelParams:
    weights: list   # per layer, (out_dim, in_dim)
    biases: list    # per layer, (out_dim,)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights],
                           [b.copy() for b in self.biases])


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max map to [0, 1] fitted on the training split.

    Degenerate features (max == min) map to the constant 0.5.  With
    clamp=True, out-of-range values are clipped before scaling.
    """

    feat_min: np.ndarray
    feat_max: np.ndarray
    clamp: bool = True

    @classmethod
    def fit(cls, data, clamp: bool = True) -> "FeatureScaler":
        x = np.atleast_2d(np.asarray(data, dtype=float))
        return cls(feat_min=x.min(axis=0), feat_max=x.max(axis=0), clamp=clamp)

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        span = self.feat_max - self.feat_min
        degenerate = span == 0
        safe_span = np.where(degenerate, 1.0, span)
        if self.clamp:
            x = np.clip(x, self.feat_min, self.feat_max)
        out = (x - self.feat_min) / safe_span
        return np.where(degenerate, 0.5, out)

    def inverse(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        span = self.feat_max - self.feat_min
        return np.where(span == 0, self.feat_min, self.feat_min + s * span)


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-5
    epochs: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("batch_size >= 1, learning_rate > 0, epochs >= 1 required")


def full_profile(seed: int = 0) -> TrainConfig:
    """Full-scale training configuration (slow; hours on a laptop)."""
    return TrainConfig(batch_size=256, learning_rate=1e-5, epochs=2000, seed=seed)


def desk_profile(seed: int = 0) -> TrainConfig:
    """Scaled-down profile for CI and desk experiments."""
    return TrainConfig(batch_size=64, learning_rate=1e-3, epochs=200, seed=seed)


@dataclass
class DetectorState:
    arch: NetworkArchitecture
    params: ModelParams
    scaler: FeatureScaler
    alpha: float | None = None       # percentile in (0, 100]
    threshold: float | None = None   # scaled reconstruction-error units
    train_config: dict = field(default_factory=dict)


# --- numerics ----------------------------------------------------------------

def _sigmoid(u):
    # sign-split form: never exponentiates a large positive argument
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def init_params(arch: NetworkArchitecture, seed: int) -> ModelParams:
    """Uniform +/-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    rng = np.random.default_rng(child_seed(seed, "init"))
    weights, biases = [], []
    for fan_in, fan_out in zip(arch.layer_dims[:-1], arch.layer_dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights=weights, biases=biases)


def forward_scaled(params: ModelParams, arch: NetworkArchitecture, x):
    """Propagate scaled inputs; returns (output, per-layer activations).

    `x` is (batch, d0) or (d0,).  activations[0] is the input.
    """
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != arch.input_dim:
        raise DimensionMismatch(f"expected {arch.input_dim} inputs, got {a.shape[1]}")
    cache = [a]
    for w, b, act in zip(params.weights, params.biases, arch.activations):
        u = a @ w.T + b
        a = _sigmoid(u) if act == "sigmoid" else u
        if not np.all(np.isfinite(a)):
            raise NonFiniteActivation(f"non-finite activation at layer {len(cache)}")
        cache.append(a)
    return a, cache


def forward(state: DetectorState, z):
    """MW-space reconstruction of one measurement vector (or batch)."""
    s = state.scaler.transform(z)
    out, cache = forward_scaled(state.params, state.arch, s)
    recon = state.scaler.inverse(out)
    if np.ndim(z) == 1:
        recon = recon[0]
    return recon, cache


def reconstruction_error(z_scaled, zhat_scaled) -> np.ndarray:
    """||z - zhat||^2 / d0 per sample, in scaled space."""
    a = np.asarray(z_scaled, dtype=float)
    b = np.asarray(zhat_scaled, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    return np.sum((a - b) ** 2, axis=-1) / a.shape[-1]


def scores(state: DetectorState, z) -> np.ndarray:
    """Anomaly scores for MW-space samples."""
    s = state.scaler.transform(z)
    out, _ = forward_scaled(state.params, state.arch, s)
    r = reconstruction_error(np.atleast_2d(s), out)
    return float(r[0]) if np.ndim(z) == 1 else r


def backward(params: ModelParams, arch: NetworkArchitecture, cache):
    """Gradients of J = mean_j ||x_j - xhat_j||^2 / d0 w.r.t. all W, b."""
    x = cache[0]
    out = cache[-1]
    batch = x.shape[0]
    d0 = arch.input_dim
    delta = 2.0 * (out - x) / (batch * d0)    # dJ/d(pre-act of last layer)...
    grads_w = [None] * arch.n_layers
    grads_b = [None] * arch.n_layers
    for layer in reversed(range(arch.n_layers)):
        a_out = cache[layer + 1]
        if arch.activations[layer] == "sigmoid":
            delta = delta * a_out * (1.0 - a_out)
        grads_w[layer] = delta.T @ cache[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer]
    return ModelParams(weights=grads_w, biases=grads_b)


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        zeros = lambda arrs: [np.zeros_like(a) for a in arrs]
        return cls(m=ModelParams(zeros(params.weights), zeros(params.biases)),
                   v=ModelParams(zeros(params.weights), zeros(params.biases)))


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              config: TrainConfig) -> None:
    """One in-place Adam update; increments state.t."""
    state.t += 1
    b1, b2, eps, lr = config.beta1, config.beta2, config.eps, config.learning_rate
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for group in ("weights", "biases"):
        for p, g, m, v in zip(getattr(params, group), getattr(grads, group),
                              getattr(state.m, group), getattr(state.v, group)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train(arch: NetworkArchitecture, config: TrainConfig, train_set,
          validation_set=None, scaler: FeatureScaler | None = None):
    """Fit the autoencoder; returns (DetectorState, per-epoch loss list).

    The scaler is fitted on the training split only.  loss_log[0] is the
    loss of the freshly initialized network before any update.
    """
    x = np.atleast_2d(np.asarray(train_set, dtype=float))
    if x.shape[0] == 0:
        raise EmptyValidationSet("training set is empty")
    if x.shape[1] != arch.input_dim:
        raise DimensionMismatch(
            f"training data has {x.shape[1]} features, architecture wants {arch.input_dim}")
    if scaler is None:
        scaler = FeatureScaler.fit(x)
    xs = scaler.transform(x)
    params = init_params(arch, config.seed)
    adam = AdamState.zeros_like(params)
    shuffle_rng = np.random.default_rng(child_seed(config.seed, "shuffle"))

    def full_loss():
        out, _ = forward_scaled(params, arch, xs)
        return float(np.mean(reconstruction_error(xs, out)))

    loss_log = [full_loss()]
    n = xs.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = xs[order[start:start + config.batch_size]]
            try:
                _, cache = forward_scaled(params, arch, batch)
            except NonFiniteActivation as exc:
                raise NonFiniteActivation(
                    f"diverged at epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from exc
            adam_step(params, backward(params, arch, cache), adam, config)
        loss_log.append(full_loss())
    state = DetectorState(arch=arch, params=params, scaler=scaler,
                          train_config=vars(config).copy())
    return state, loss_log


def calibrate_threshold(state: DetectorState, validation_set, alpha: float):
    """Set tau to the nearest-rank alpha-percentile of validation scores.

    Returns (calibrated state, ascending score curve) so the error
    distribution's inflection point can be inspected.
    """
    v = np.atleast_2d(np.asarray(validation_set, dtype=float))
    if v.shape[0] == 0:
        raise EmptyValidationSet("validation set is empty")
    if not 0 < alpha <= 100:
        raise ValueError(f"alpha must be in (0, 100], got {alpha}")
    errs = np.sort(scores(state, v))
    tau = nearest_rank(errs, alpha / 100.0)
    calibrated = replace(state, alpha=float(alpha), threshold=float(tau))
    return calibrated, errs


def detect(state: DetectorState, z):
    """(flag, score) for one sample, or (flags, scores) for a batch."""
    if state.threshold is None:
        raise UncalibratedDetector("threshold not calibrated; run calibrate_threshold")
    r = scores(state, z)
    if np.ndim(z) == 1:
        return bool(r > state.threshold), r
    return r > state.threshold, r


# --- persistence -------------------------------------------------------------

def save_model(state: DetectorState, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_dims": list(state.arch.layer_dims),
        "activation_map": list(state.arch.activations),
        "scaler": {"min": state.scaler.feat_min.tolist(),
                   "max": state.scaler.feat_max.tolist(),
                   "clamp": state.scaler.clamp},
        "weights": [w.tolist() for w in state.params.weights],
        "biases": [b.tolist() for b in state.params.biases],
        "alpha": state.alpha,
        "threshold": state.threshold,
        "train_config": state.train_config,
        "seed": state.train_config.get("seed"),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_model(path) -> DetectorState:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatVersionMismatch(f"{path}: not a model file: {exc}") from exc
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{path}: format version {doc.get('format_version')}, "
            f"expected {MODEL_FORMAT_VERSION}")
    arch = NetworkArchitecture(layer_dims=tuple(doc["layer_dims"]),
                               activations=tuple(doc["activation_map"]))
    weights = [np.array(w, dtype=float) for w in doc["weights"]]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    for w, b, (fi, fo) in zip(weights, biases,
                              zip(arch.layer_dims[:-1], arch.layer_dims[1:])):
        if w.shape != (fo, fi) or b.shape != (fo,):
            raise ShapeMismatch(
                f"{path}: layer shape {w.shape}/{b.shape} does not match dims ({fo},{fi})")
    scaler = FeatureScaler(feat_min=np.array(doc["scaler"]["min"], dtype=float),
                           feat_max=np.array(doc["scaler"]["max"], dtype=float),
                           clamp=bool(doc["scaler"].get("clamp", True)))
    return DetectorState(arch=arch, params=ModelParams(weights, biases), scaler=scaler,
                         alpha=doc.get("alpha"), threshold=doc.get("threshold"),
                         train_config=doc.get("train_config") or {})
