"""The per-band CRNN classifier, its training loop and clip-level fusion."""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .augment import MixupConfig, mixup_batch, pair_partners, sample_lambda
from .errors import ConfigError, NumericError, ShapeError
from .nn.checkpoint import load_checkpoint, save_checkpoint

INPUT_SHAPE = (60, 60, 3)

# name, filters, kernel, pool stride after the pair (None inside a block)
_CONV_BLOCKS = [
    (("conv1", 32, (3, 3)), ("conv2", 32, (3, 3)), ("pool1", (4, 2))),
    (("conv3", 64, (3, 1)), ("conv4", 64, (3, 1)), ("pool2", (2, 1))),
    (("conv5", 128, (1, 3)), ("conv6", 128, (1, 3)), ("pool3", (1, 2))),
    (("conv7", 256, (3, 3)), ("conv8", 256, (3, 3)), ("pool4", (2, 2))),
]
GRU_UNITS = 128
NETWORKS = ("crnn", "cnn")


def build_layers(n_classes: int, *, network="crnn", input_shape=INPUT_SHAPE, rng=None, dtype=np.float32):
    """The layer stack: four conv-conv-pool blocks, then two BiGRUs (or, for
    the ``cnn`` ablation, nothing), a temporal mean and the output layer.

    ReLU follows every convolution.
    """
    if network not in NETWORKS:
        raise ConfigError(f"unknown network {network!r}; expected one of {NETWORKS}")
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    c_in = input_shape[2]
    for conv_a, conv_b, (pool_name, stride) in _CONV_BLOCKS:
        for name, filters, kernel in (conv_a, conv_b):
            layers.append(nn.Conv2D(c_in, filters, kernel, rng=rng, dtype=dtype, name=name))
            layers.append(nn.ReLU(name=f"{name}.relu"))
            c_in = filters
        layers.append(nn.MaxPool2D(stride, name=pool_name))
    layers.append(nn.ToSequence())
    seq = nn.Sequential(layers).output_shape(input_shape)
    n_feat = seq[1]
    if network == "crnn":
        layers.append(nn.BiGRU(n_feat, GRU_UNITS, rng=rng, dtype=dtype, name="gru1"))
        layers.append(nn.BiGRU(2 * GRU_UNITS, GRU_UNITS, rng=rng, dtype=dtype, name="gru2"))
        n_feat = 2 * GRU_UNITS
    layers.append(nn.TemporalMean())
    layers.append(nn.Dense(n_feat, n_classes, rng=rng, dtype=dtype, name="fc1"))
    return layers


class CrnnModel:
    """One band branch: (frames, mels, 3) log-mel tensor -> class probabilities.

    Inputs are transposed to (mels, frames, 3) so that the width axis, which
    the recurrent layers read as time, is the frame axis.
    """

    def __init__(self, n_classes: int, *, band_index=0, network="crnn", seed=0, dtype=np.float32,
                 input_shape=INPUT_SHAPE):
        self.n_classes = n_classes
        self.band_index = band_index
        self.network = network
        self.dtype = np.dtype(dtype)
        self.input_shape = tuple(input_shape)
        self.net = nn.Sequential(
            build_layers(n_classes, network=network, input_shape=self._net_input_shape(),
                         rng=np.random.default_rng(seed), dtype=self.dtype)
        )

    def _net_input_shape(self):
        n, k, c = self.input_shape
        return (k, n, c)

    @property
    def layers(self):
        return self.net.layers

    def params(self) -> list[nn.Tensor]:
        return self.net.params()

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def named_params(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params()}

    def table_shapes(self):
        """Output shape of every conv, pool, recurrent and output layer."""
        rows = []
        for name, shape in self.net.shapes(self._net_input_shape()):
            if name.endswith(".relu") or name in ("to_sequence", "temporal_mean"):
                continue
            rows.append((name, shape))
        return rows

    def _prepare(self, x):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected features of shape {self.input_shape}, got {x.shape[1:]}")
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3), dtype=self.dtype)

    def logits(self, x) -> np.ndarray:
        return self.net.forward(self._prepare(x))

    def backward(self, dlogits) -> None:
        self.net.backward(dlogits)

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def loss_and_grad(self, x, targets):
        """Forward, cross-entropy and backward on one batch; returns (probs, loss)."""
        self.zero_grad()
        probs, loss, dlogits = nn.softmax_cross_entropy(self.logits(x), targets)
        self.backward(dlogits.astype(self.dtype, copy=False))
        self.net.clear()
        return probs, loss

    def predict_proba(self, x, batch_size=32) -> np.ndarray:
        x = np.asarray(x)
        single = x.ndim == 3
        if single:
            x = x[None]
        out = []
        for i in range(0, len(x), batch_size):
            out.append(nn.softmax(self.logits(x[i:i + batch_size]).astype(np.float64)))
        self.net.clear()
        probs = np.concatenate(out) if out else np.zeros((0, self.n_classes))
        return probs[0] if single else probs

    def predict(self, feature) -> np.ndarray:
        data = getattr(feature, "data", feature)
        return self.predict_proba(np.asarray(data))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.params()}
        if set(params) != set(state):
            missing = sorted(set(params) ^ set(state))
            raise ShapeError(f"checkpoint parameter names differ: {missing[:5]}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {state[name].shape} vs model {p.shape}")
            p.value[...] = state[name]

    def save(self, path, optimizer=None) -> None:
        save_checkpoint(path, self.named_params(), optimizer)

    @classmethod
    def load(cls, path, n_classes, **kwargs) -> "CrnnModel":
        params, _ = load_checkpoint(path)
        model = cls(n_classes, **kwargs)
        model.load_state_dict(params)
        return model


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float | None = None


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "lr", "train_loss", "train_acc", "val_acc"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.train_acc),
                            "" if r.val_acc is None else repr(r.val_acc)])


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def clip_scores(window_probs: np.ndarray, clip_index: np.ndarray, n_clips: int) -> np.ndarray:
    """Average window probabilities per clip (``clip_index[i]`` is the clip of window i)."""
    out = np.zeros((n_clips, window_probs.shape[1]))
    counts = np.bincount(clip_index, minlength=n_clips).astype(np.float64)
    np.add.at(out, clip_index, window_probs)
    return out / counts[:, None]


@dataclass
class ValidationSet:
    features: np.ndarray
    clip_index: np.ndarray
    clip_labels: np.ndarray

    def accuracy(self, model: CrnnModel) -> float:
        probs = clip_scores(model.predict_proba(self.features), self.clip_index, len(self.clip_labels))
        return float(np.mean(probs.argmax(axis=1) == self.clip_labels))


def train_branch(model: CrnnModel, features: np.ndarray, labels, *, mixup: MixupConfig | None = None,
                 optimizer: nn.OptimizerState | None = None, epochs: int = 1, batch_size: int = 16,
                 seed: int = 0, validation: ValidationSet | None = None, on_epoch=None,
                 stop_at_train_acc: float | None = None) -> TrainingLog:
    """Mini-batch training with optional mixup; keeps the best-validation parameters."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    if len(features) == 0:
        raise ShapeError("training set is empty")
    if len(features) != len(labels):
        raise ShapeError(f"{len(features)} features vs {len(labels)} labels")
    mixup = mixup or MixupConfig(enabled=False)
    optimizer = optimizer or nn.OptimizerState()
    targets = one_hot(labels, model.n_classes)
    shuffle_rng = np.random.default_rng([seed, 1])
    mix_rng = np.random.default_rng([mixup.seed, seed, 2])
    log = TrainingLog()
    best_acc, best_state = -1.0, None
    last_good = model.state_dict()

    for epoch in range(epochs):
        lr = optimizer.set_epoch(epoch)
        order = shuffle_rng.permutation(len(features))
        loss_sum = correct = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = features[idx], targets[idx]
            if mixup.enabled:
                partners = pair_partners(len(idx), mix_rng)
                lam = np.array([sample_lambda(mixup, mix_rng) for _ in idx])
                xb, yb = mixup_batch(xb, yb, xb[partners], yb[partners], lam)
                hit_a = labels[idx]
                hit_b = labels[idx][partners]
            probs, loss = model.loss_and_grad(xb, yb)
            if not np.isfinite(loss):
                model.load_state_dict(last_good)
                raise NumericError(f"non-finite loss at epoch {epoch + 1}; parameters reset to last good state")
            nn.sgd_nesterov_step(model.params(), optimizer)
            pred = probs.argmax(axis=1)
            if mixup.enabled:
                correct += float(np.sum(lam * (pred == hit_a) + (1 - lam) * (pred == hit_b)))
            else:
                correct += float(np.sum(pred == labels[idx]))
            loss_sum += loss * len(idx)
        last_good = model.state_dict()
        val_acc = validation.accuracy(model) if validation is not None else None
        rec = EpochRecord(epoch + 1, lr, loss_sum / len(features), correct / len(features), val_acc)
        log.records.append(rec)
        if val_acc is not None and val_acc > best_acc:
            best_acc, best_state, log.best_epoch = val_acc, last_good, epoch + 1
        if on_epoch is not None:
            on_epoch(rec)
        if stop_at_train_acc is not None and rec.train_acc >= stop_at_train_acc:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return log


def predict_clip(models, band_features, weights) -> np.ndarray:
    """Fused clip score: per window sum_i w_i p_i over bands, then the mean over windows.

    ``band_features[i]`` holds the (n_windows, frames, mels, 3) features of band i.
    """
    from .fusion import FusionWeights, fuse

    weights = weights if isinstance(weights, FusionWeights) else FusionWeights(weights)
    if len(models) != len(band_features) or len(models) != len(weights.weights):
        raise ConfigError(
            f"{len(models)} models, {len(band_features)} feature bands, {len(weights.weights)} weights"
        )
    per_band = [m.predict_proba(np.asarray(f)) for m, f in zip(models, band_features)]
    n_windows = {len(p) for p in per_band}
    if len(n_windows) != 1:
        raise ShapeError("bands disagree on the number of windows")
    fused = np.stack([fuse([p[w] for p in per_band], weights) for w in range(n_windows.pop())])
    return fused.mean(axis=0)


def clone(model: CrnnModel) -> CrnnModel:
    return copy.deepcopy(model)


def checkpoint_name(band_index: int) -> str:
    return f"band{band_index}.ckpt"


def checkpoint_path(directory, band_index: int) -> Path:
    return Path(directory) / checkpoint_name(band_index)
