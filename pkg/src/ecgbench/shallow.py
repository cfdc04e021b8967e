"""Single-hidden-layer network for multi-label classification on wavelet
features, trained with mini-batch adaptive moments and decoupled weight
decay, plus epsilon-rule relevance propagation back to the input features.

All math is float64 numpy with seeded shuffling, so runs are reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .metrics import UndefinedMetricError, macro_auc
from .records import LabelMatrix, PredictionMatrix

NET_MAGIC = b"ECGBNET1"


@dataclass
class FeatureScaler:
    """Train-set standardization; zero-variance columns are recorded and
    neutralized (std forced to 1 so the centered column is constant 0)."""

    mean: np.ndarray
    std: np.ndarray
    dropped_columns: tuple[int, ...] = ()

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        dropped = tuple(int(i) for i in np.flatnonzero(std == 0.0))
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean=mean, std=std, dropped_columns=dropped)

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


@dataclass
class ShallowNet:
    """Dense rectifier hidden layer, per-class sigmoid outputs."""

    w1: np.ndarray  # input_dim x hidden_dim
    b1: np.ndarray
    w2: np.ndarray  # hidden_dim x output_dim
    b2: np.ndarray

    def __post_init__(self):
        in_dim, hidden = self.w1.shape
        hidden2, out = self.w2.shape
        if hidden != hidden2 or self.b1.shape != (hidden,) or self.b2.shape != (out,):
            raise ValueError("inconsistent parameter shapes")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(arr).all():
                raise ValueError("parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "ShallowNet":
        return ShallowNet(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def init_net(input_dim: int, hidden_dim: int, output_dim: int, seed: int = 0) -> ShallowNet:
    rng = np.random.Generator(np.random.PCG64(seed))
    w1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, hidden_dim))
    w2 = rng.normal(0.0, np.sqrt(1.0 / hidden_dim), size=(hidden_dim, output_dim))
    return ShallowNet(w1=w1, b1=np.zeros(hidden_dim), w2=w2, b2=np.zeros(output_dim))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(net: ShallowNet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (pre-activation hidden, hidden activations, pre-sigmoid logits)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z1 = x @ net.w1 + net.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ net.w2 + net.b2
    return z1, a1, z2


def bce_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over all batch x class cells (stable form)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    return float((np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).mean())


def loss_and_grads(
    net: ShallowNet, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """BCE loss and analytic gradients for every parameter."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    z1, a1, z2 = forward(net, x)
    loss = bce_loss(z2, y)
    delta2 = (_sigmoid(z2) - y) / y.size
    delta1 = (delta2 @ net.w2.T) * (z1 > 0.0)
    grads = {
        "w2": a1.T @ delta2,
        "b2": delta2.sum(axis=0),
        "w1": x.T @ delta1,
        "b1": delta1.sum(axis=0),
    }
    return loss, grads


@dataclass
class TrainConfig:
    hidden_dim: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 128
    max_epochs: int = 50
    seed: int = 0


@dataclass
class TrainResult:
    net: ShallowNet
    best_epoch: int
    best_val_auc: float
    train_losses: list[float] = field(default_factory=list)
    val_aucs: list[float] = field(default_factory=list)
    dropped_columns: tuple[int, ...] = ()


class _AdamW:
    """Adaptive moments with decoupled weight decay (decay skipped on biases)."""

    def __init__(self, net: ShallowNet, lr: float, weight_decay: float):
        self.lr = lr
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(getattr(net, k)) for k in ("w1", "b1", "w2", "b2")}
        self.v = {k: np.zeros_like(getattr(net, k)) for k in ("w1", "b1", "w2", "b2")}

    def step(self, net: ShallowNet, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for key, grad in grads.items():
            param = getattr(net, key)
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * grad * grad
            m_hat = self.m[key] / (1 - self.beta1**self.t)
            v_hat = self.v[key] / (1 - self.beta2**self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if key.startswith("w"):
                param -= self.lr * self.wd * param


def shallow_train(
    features_train: np.ndarray,
    labels_train: np.ndarray,
    features_val: np.ndarray,
    labels_val: np.ndarray,
    config: Optional[TrainConfig] = None,
) -> TrainResult:
    """Minimize mean BCE with AdamW; return the parameters with the best
    validation macro AUC.

    Features must already be standardized with the train-set scaler.
    Validation classes missing a label value are excluded from the monitored
    macro AUC so early selection stays total on small folds.
    """
    config = config or TrainConfig()
    x_train = np.asarray(features_train, dtype=np.float64)
    y_train = np.asarray(labels_train, dtype=np.float64)
    x_val = np.asarray(features_val, dtype=np.float64)
    y_val = np.asarray(labels_val, dtype=np.float64)
    if x_train.shape[0] != y_train.shape[0]:
        raise ValueError("train features/labels row mismatch")
    n, in_dim = x_train.shape
    out_dim = y_train.shape[1]
    net = init_net(in_dim, config.hidden_dim, out_dim, seed=config.seed)
    optimizer = _AdamW(net, config.learning_rate, config.weight_decay)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))

    val_ids = tuple(str(i) for i in range(x_val.shape[0]))
    classes = tuple(str(j) for j in range(out_dim))
    val_labels = LabelMatrix(record_ids=val_ids, class_codes=classes, values=y_val)

    best = net.copy()
    best_auc = -np.inf
    best_epoch = -1
    result = TrainResult(net=best, best_epoch=best_epoch, best_val_auc=best_auc)
    step = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(net, x_train[batch], y_train[batch])
            step += 1
            if not np.isfinite(loss):
                raise FloatingPointError(f"NaN loss at step {step} (epoch {epoch})")
            optimizer.step(net, grads)
            epoch_loss += loss
            n_batches += 1
        result.train_losses.append(epoch_loss / max(1, n_batches))
        val_preds = PredictionMatrix(
            record_ids=val_ids, class_codes=classes, scores=predict_scores(net, x_val)
        )
        try:
            _, val_auc = macro_auc(val_preds, val_labels, on_undefined="skip")
        except UndefinedMetricError:
            val_auc = float("nan")  # degenerate validation fold; keep training
        result.val_aucs.append(val_auc)
        if val_auc > best_auc:
            best_auc = val_auc
            best = net.copy()
            best_epoch = epoch
    if best_epoch < 0:  # monitoring never produced a usable AUC
        best = net.copy()
        best_epoch = config.max_epochs - 1
    result.net = best
    result.best_epoch = best_epoch
    result.best_val_auc = best_auc
    return result


def predict_scores(net: ShallowNet, features: np.ndarray) -> np.ndarray:
    """Sigmoid class scores for a feature matrix (rows) or single vector."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != net.input_dim:
        raise ValueError(
            f"feature dimension {features.shape[1]} != net input {net.input_dim}"
        )
    _, _, z2 = forward(net, features)
    return _sigmoid(z2)


def shallow_predict(
    net: ShallowNet,
    features: np.ndarray,
    record_ids: tuple[str, ...],
    class_codes: tuple[str, ...],
) -> PredictionMatrix:
    return PredictionMatrix(
        record_ids=record_ids, class_codes=class_codes, scores=predict_scores(net, features)
    )


def _stabilized(z: np.ndarray, eps: float) -> np.ndarray:
    sign = np.where(z >= 0.0, 1.0, -1.0)  # sign(0) := +1
    return z + eps * sign


def lrp_epsilon(
    net: ShallowNet, feature_vector: np.ndarray, target_class: int, eps: float = 0.1
) -> np.ndarray:
    """Epsilon-rule relevance of each input feature for one class.

    Output relevance starts at the pre-sigmoid score of the target class and
    is redistributed through each dense layer via
    ``R_j = sum_k a_j w_jk / (z_k + eps*sign(z_k)) R_k``. With eps=0 and zero
    biases the input relevances sum exactly to the pre-sigmoid output.
    """
    x = np.asarray(feature_vector, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"feature vector must have shape ({net.input_dim},)")
    if not 0 <= target_class < net.output_dim:
        raise ValueError(f"target class {target_class} out of range")
    z1, a1, z2 = forward(net, x)
    z1, a1 = z1[0], a1[0]
    out_relevance = float(z2[0, target_class])
    if out_relevance == 0.0:
        return np.zeros(net.input_dim)

    # output layer -> hidden units
    zk = float(z2[0, target_class])
    contributions = a1 * net.w2[:, target_class]
    with np.errstate(invalid="ignore", divide="ignore"):
        r_hidden = np.where(
            contributions != 0.0,
            contributions / _stabilized(np.array(zk), eps),
            0.0,
        ) * out_relevance

    # hidden layer -> input features
    denom = _stabilized(z1, eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(r_hidden != 0.0, r_hidden / denom, 0.0)
    r_input = (x[:, None] * net.w1) @ ratio
    return r_input


def save_net(path: str | Path, net: ShallowNet, scaler: Optional[FeatureScaler] = None) -> None:
    """Checkpoint layout: magic, u64 LE dims (in, hidden, out), then float64
    LE arrays in order: scaler mean, scaler std, w1 (row-major), b1, w2, b2."""
    scaler = scaler or FeatureScaler.identity(net.input_dim)
    if scaler.mean.shape != (net.input_dim,):
        raise ValueError("scaler dimension does not match the net input")
    payload = NET_MAGIC + struct.pack("<QQQ", net.input_dim, net.hidden_dim, net.output_dim)
    for arr in (scaler.mean, scaler.std, net.w1, net.b1, net.w2, net.b2):
        payload += np.asarray(arr, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(payload)


def load_net(path: str | Path) -> tuple[ShallowNet, FeatureScaler]:
    raw = Path(path).read_bytes()
    if raw[: len(NET_MAGIC)] != NET_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    offset = len(NET_MAGIC)
    in_dim, hidden, out = struct.unpack("<QQQ", raw[offset : offset + 24])
    offset += 24
    sizes = [in_dim, in_dim, in_dim * hidden, hidden, hidden * out, out]
    expected = offset + 8 * sum(sizes)
    if len(raw) != expected:
        raise ValueError(f"{path}: file size {len(raw)} != expected {expected}")
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(raw[offset : offset + 8 * size], dtype="<f8").copy())
        offset += 8 * size
    mean, std, w1, b1, w2, b2 = arrays
    net = ShallowNet(
        w1=w1.reshape(in_dim, hidden), b1=b1, w2=w2.reshape(hidden, out), b2=b2
    )
    # dropped-column indices are a training-time record, not checkpoint state
    scaler = FeatureScaler(mean=mean, std=std)
    return net, scaler
