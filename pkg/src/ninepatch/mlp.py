"""From-scratch fully-connected network.

ReLU hidden layers, softmax output, cross-entropy loss, inverted dropout,
SGD with classical momentum, He-initialized weights, exponential learning
rate decay, and a linear momentum ramp.  All arithmetic is float64; training
is single-threaded per network and fully deterministic given (seed, config,
data).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError, InvalidInputError, TrainingDivergedError
from .seeding import derive_rng

MODEL_MAGIC = b"NPMLP1"

#: Posterior probabilities are clamped here before taking logs.
PROB_FLOOR = 1e-12


@dataclass
class MlpConfig:
    """Architecture plus the full training schedule.

    ``layer_dims`` is the single source of truth for the architecture; use
    :meth:`for_task` to derive it from input dimension and class count.
    """

    layer_dims: list[int]
    dropout_keep_input: float = 0.8
    dropout_keep_hidden: float = 0.5
    lr0: float = 3.0
    lr_decay: float = 0.998
    momentum0: float = 0.5
    momentum_final: float = 0.99
    momentum_ramp_epochs: int = 500
    epochs: int = 1000
    batch_size: int = 128
    seed: int = 0

    DEFAULT_HIDDEN_COUNT = 2
    DEFAULT_HIDDEN_UNITS = 512

    def __post_init__(self):
        dims = [int(d) for d in self.layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigError(f"layer_dims must be >= 2 positive sizes, got {dims}")
        self.layer_dims = dims
        for name in ("dropout_keep_input", "dropout_keep_hidden"):
            p = getattr(self, name)
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {p}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        for name in ("momentum0", "momentum_final"):
            m = getattr(self, name)
            if not 0.0 <= m < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {m}")
        if self.momentum_final < self.momentum0:
            raise ConfigError("momentum_final must be >= momentum0")
        if self.momentum_ramp_epochs < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("momentum_ramp_epochs/epochs/batch_size out of range")

    @classmethod
    def for_task(cls, input_dim: int, n_classes: int, hidden_count: int = None,
                 hidden_units: int = None, **kwargs) -> "MlpConfig":
        """Dims = input, hidden_count x hidden_units, n_classes."""
        hc = cls.DEFAULT_HIDDEN_COUNT if hidden_count is None else hidden_count
        hu = cls.DEFAULT_HIDDEN_UNITS if hidden_units is None else hidden_units
        if hc < 0 or (hc > 0 and hu < 1):
            raise ConfigError(f"bad hidden layout {hc} x {hu}")
        dims = [input_dim] + [hu] * hc + [n_classes]
        return cls(layer_dims=dims, **kwargs)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    lr: float
    momentum: float
    val_accuracy: float | None = None


class Mlp:
    """Network state: per-layer weights/biases, momentum velocities, the
    current epoch, and the dropout RNG."""

    def __init__(self, config: MlpConfig, weights: list[np.ndarray],
                 biases: list[np.ndarray]):
        self.config = config
        self.weights = weights
        self.biases = biases
        self.vel_w = [np.zeros_like(w) for w in weights]
        self.vel_b = [np.zeros_like(b) for b in biases]
        self.epoch = 0
        self.dropout_rng = derive_rng(config.seed, "dropout")

    @property
    def dims(self) -> list[int]:
        return self.config.layer_dims

    @property
    def n_classes(self) -> int:
        return self.dims[-1]

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode posteriors: no dropout masks, no rescaling.

        Accepts one vector or a (n, input_dim) batch; returns a posterior per
        row, each nonnegative and summing to 1.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"input has {a.shape[1]} features, network expects {self.input_dim}")
        for l in range(len(self.weights) - 1):
            a = np.maximum(a @ self.weights[l].T + self.biases[l], 0.0)
        probs = softmax(a @ self.weights[-1].T + self.biases[-1])
        return probs[0] if single else probs

    def parameters_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and \
            all(np.isfinite(b).all() for b in self.biases)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    out = np.zeros((y.shape[0], n_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def init(config: MlpConfig) -> Mlp:
    """He initialization: W ~ N(0, sqrt(2 / fan_in)), biases zero."""
    rng = derive_rng(config.seed, "init")
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(config, weights, biases)


def make_dropout_masks(m: Mlp, batch_size: int,
                       rng: np.random.Generator) -> list[np.ndarray]:
    """Inverted-dropout masks for one batch: entries are 0 or 1/keep_prob.

    One mask for the input layer, one per hidden layer.  A keep probability
    of 1 yields an all-ones mask.
    """
    cfg = m.config
    masks = []
    keeps = [cfg.dropout_keep_input] + [cfg.dropout_keep_hidden] * (len(m.dims) - 2)
    for width, keep in zip(m.dims[:-1], keeps):
        if keep >= 1.0:
            masks.append(np.ones((batch_size, width)))
        else:
            masks.append((rng.random((batch_size, width)) < keep) / keep)
    return masks


def _forward_cached(m: Mlp, x: np.ndarray, masks: list[np.ndarray] | None):
    """Masked forward pass keeping what backprop needs.

    Returns (probs, layer_inputs, hidden_preacts): layer_inputs[l] is the
    post-dropout input to layer l; hidden_preacts[l] is the pre-ReLU value
    of hidden layer l+1.
    """
    n_layers = len(m.weights)
    a = x if masks is None else x * masks[0]
    layer_inputs = [a]
    hidden_preacts = []
    for l in range(n_layers - 1):
        z = a @ m.weights[l].T + m.biases[l]
        hidden_preacts.append(z)
        h = np.maximum(z, 0.0)
        a = h if masks is None else h * masks[l + 1]
        layer_inputs.append(a)
    probs = softmax(a @ m.weights[-1].T + m.biases[-1])
    return probs, layer_inputs, hidden_preacts


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy against one-hot targets, probabilities clamped."""
    picked = (probs * targets).sum(axis=1)
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def loss_and_grads(m: Mlp, x: np.ndarray, targets: np.ndarray,
                   masks: list[np.ndarray] | None = None):
    """Mean cross-entropy loss and exact gradients of the masked forward pass.

    Returns (loss, weight_grads, bias_grads) with the same shapes as the
    parameters.  ``masks=None`` runs with dropout off.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("batch must be a non-empty (n, features) array")
    if targets.shape != (x.shape[0], m.n_classes):
        raise InvalidInputError(
            f"targets shape {targets.shape} != {(x.shape[0], m.n_classes)}")
    n = x.shape[0]
    probs, layer_inputs, hidden_preacts = _forward_cached(m, x, masks)
    loss = cross_entropy(probs, targets)

    grad_w = [None] * len(m.weights)
    grad_b = [None] * len(m.biases)
    delta = (probs - targets) / n
    for l in range(len(m.weights) - 1, -1, -1):
        grad_w[l] = delta.T @ layer_inputs[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            dh = delta @ m.weights[l]
            if masks is not None:
                dh = dh * masks[l]
            delta = dh * (hidden_preacts[l - 1] > 0.0)
    return loss, grad_w, grad_b


def train_step(m: Mlp, x: np.ndarray, targets: np.ndarray, lr: float,
               momentum: float, masks: list[np.ndarray] | None = None) -> float:
    """One classical-momentum update: v <- mu v - lr g; theta <- theta + v."""
    if lr <= 0:
        raise InvalidInputError(f"learning rate must be positive, got {lr}")
    loss, grad_w, grad_b = loss_and_grads(m, x, targets, masks)
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss {loss} at epoch {m.epoch} (lr={lr:g}, momentum={momentum:g}); "
            "reduce lr0 or check input standardization")
    for l in range(len(m.weights)):
        self_vw = m.vel_w[l]
        self_vw *= momentum
        self_vw -= lr * grad_w[l]
        m.weights[l] += self_vw
        self_vb = m.vel_b[l]
        self_vb *= momentum
        self_vb -= lr * grad_b[l]
        m.biases[l] += self_vb
    return loss


def schedule(epoch: int, config: MlpConfig) -> tuple[float, float]:
    """(learning rate, momentum) for an epoch: lr decays by lr_decay each
    epoch; momentum ramps linearly to momentum_final over the ramp window."""
    if epoch < 0:
        raise InvalidInputError(f"epoch must be >= 0, got {epoch}")
    lr = config.lr0 * config.lr_decay ** epoch
    ramp = config.momentum_ramp_epochs
    frac = 1.0 if ramp == 0 else min(epoch / ramp, 1.0)
    momentum = config.momentum0 + (config.momentum_final - config.momentum0) * frac
    return lr, momentum


def accuracy(m: Mlp, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    """Fraction of rows whose argmax posterior equals the label."""
    hits = 0
    for start in range(0, x.shape[0], chunk):
        probs = m.forward(x[start:start + chunk])
        hits += int(np.sum(probs.argmax(axis=1) == y[start:start + chunk]))
    return hits / x.shape[0]


def fit(config: MlpConfig, x: np.ndarray, y: np.ndarray,
        x_val: np.ndarray | None = None, y_val: np.ndarray | None = None,
        log_every: int = 0) -> tuple[Mlp, list[EpochLog]]:
    """Train a network from scratch on (x, y) with the configured schedule.

    Shuffles each epoch with a seeded generator; returns the network and a
    per-epoch log.  Requires at least one sample of every class.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise InvalidInputError("x must be (n, features) aligned with y, n >= 1")
    n_classes = config.layer_dims[-1]
    missing = sorted(set(range(n_classes)) - set(np.unique(y).tolist()))
    if missing:
        raise DataError(f"training data has no samples for classes {missing}")

    m = init(config)
    shuffle_rng = derive_rng(config.seed, "shuffle")
    logs = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        lr, momentum = schedule(epoch, config)
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = x[idx]
            targets = one_hot(y[idx], n_classes)
            masks = make_dropout_masks(m, xb.shape[0], m.dropout_rng)
            total += train_step(m, xb, targets, lr, momentum, masks) * xb.shape[0]
        m.epoch = epoch + 1
        if not m.parameters_finite():
            raise TrainingDivergedError(
                f"non-finite parameters after epoch {epoch} (lr={lr:g})")
        val_acc = None
        if x_val is not None and len(x_val):
            val_acc = accuracy(m, x_val, y_val)
        entry = EpochLog(epoch, total / n, lr, momentum, val_acc)
        logs.append(entry)
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            logging.getLogger("ninepatch").info(
                "epoch %d loss %.4f lr %.4f momentum %.3f%s", epoch, entry.loss,
                lr, momentum, "" if val_acc is None else f" val {val_acc:.4f}")
    return m, logs


# ---------------------------------------------------------------------------
# Gradient checking

@dataclass
class GradCheckReport:
    max_rel_error: float
    n_batches: int
    dims: list[int]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _numeric_grad(m: Mlp, x, targets, arr: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up, _, _ = _forward_cached(m, x, None)
        loss_up = cross_entropy(up, targets)
        flat[i] = orig - h
        down, _, _ = _forward_cached(m, x, None)
        loss_down = cross_entropy(down, targets)
        flat[i] = orig
        grad.ravel()[i] = (loss_up - loss_down) / (2.0 * h)
    return grad


def gradient_check(dims: tuple[int, ...] = (12, 7, 5, 2), n_batches: int = 5,
                   batch_size: int = 8, h: float = 1e-5, seed: int = 12345,
                   tolerance: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Dropout is off.  Biases are nudged to 0.05 after init so pre-activations
    sit away from the ReLU kink at the finite-difference step size.
    Relative error is |a - n| / max(|a|, |n|, 1e-8).
    """
    config = MlpConfig(layer_dims=list(dims), dropout_keep_input=1.0,
                       dropout_keep_hidden=1.0, epochs=0, seed=seed)
    m = init(config)
    for b in m.biases:
        b += 0.05
    rng = derive_rng(seed, "gradcheck")
    worst = 0.0
    for _ in range(n_batches):
        x = rng.normal(size=(batch_size, dims[0]))
        targets = one_hot(rng.integers(0, dims[-1], size=batch_size), dims[-1])
        _, grad_w, grad_b = loss_and_grads(m, x, targets, masks=None)
        for analytic, arr in zip(grad_w + grad_b, m.weights + m.biases):
            numeric = _numeric_grad(m, x, targets, arr, h)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return GradCheckReport(worst, n_batches, list(dims), tolerance)


# ---------------------------------------------------------------------------
# Serialization: magic NPMLP1, little-endian throughout.
# u32 layer count L, u32 dims[L+1], then per layer the row-major float64
# weight matrix and bias vector, then a u32-length-prefixed JSON metadata
# block (config echo, class names, training-log digest, epoch, rng state).

def log_digest(logs: list[EpochLog]) -> str:
    payload = json.dumps([asdict(e) for e in logs], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_model(m: Mlp, path, class_names: list[str] | None = None,
               logs: list[EpochLog] | None = None, extra_meta: dict | None = None) -> None:
    dims = m.dims
    meta = {
        "config": asdict(m.config),
        "class_names": class_names or [str(i) for i in range(m.n_classes)],
        "epoch": m.epoch,
        "log_digest": log_digest(logs or []),
        "rng_state": m.dropout_rng.bit_generator.state,
    }
    if extra_meta:
        meta.update(extra_meta)
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(dims) - 1))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(m.weights, m.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_model(path) -> tuple[Mlp, dict]:
    """Read a model file back; returns (network, metadata)."""
    with open(path, "rb") as fh:
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise DataError(f"{path} is not a model file (bad magic)")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        dims = list(struct.unpack(f"<{n_layers + 1}I", fh.read(4 * (n_layers + 1))))
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(fh.read(8 * fan_out * fan_in), dtype="<f8")
            weights.append(w.reshape(fan_out, fan_in).copy())
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy())
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
    config = MlpConfig(**meta["config"])
    if config.layer_dims != dims:
        raise DataError(f"{path}: dims {dims} disagree with config {config.layer_dims}")
    m = Mlp(config, weights, biases)
    m.epoch = int(meta.get("epoch", 0))
    state = meta.get("rng_state")
    if state:
        m.dropout_rng.bit_generator.state = state
    return m, meta
