"""The six forecasting architectures and the shared training loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import IO

import numpy as np

from .dataset import WindowedDataset
from .errors import BuildError, ConfigError, NumericalError, ShapeError
from .nn import tensor as T
from .nn.checkpoint import dump_checkpoint, load_checkpoint
from .nn.layers import LSTM, Bidirectional, Conv1D, Dense, MaxPool1D
from .nn.optim import AdamState, adam_step, zero_grad

log = logging.getLogger(__name__)

MODEL_KINDS = ("baseline", "fnn", "lstm", "cnn", "bilstm", "cnn_lstm")
DEFAULT_KERNEL = 3
DEFAULT_POOL = 2


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_width: int
    feature_count: int
    target_count: int
    seed: int = 0
    epochs: int = 100
    batch_size: int = 16
    patience: int = 10
    learning_rate: float = 0.001
    units: int = 32
    dropout: float = 0.5
    kernel_size: int | None = None  # None: 3, shrunk to fit narrow inputs
    pool_size: int | None = None  # None: 2, skipped when it does not fit

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        for name in ("input_width", "feature_count", "target_count", "epochs", "batch_size", "units"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.target_count > self.feature_count:
            raise ConfigError("target_count cannot exceed feature_count")

    @property
    def target_offset(self) -> int:
        # catalog order is tactics, weapons, targets: targets are the last columns
        return self.feature_count - self.target_count

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class ForecastModel:
    """A stack of layers mapping (batch, w, F) windows to (batch, |Y|) targets."""

    def __init__(self, spec: ModelSpec, layers: list, forward_fn, adjustments: list[str]):
        self.spec = spec
        self.layers = layers
        self._forward = forward_fn
        self.adjustments = adjustments

    @property
    def params(self) -> list[T.Parameter]:
        return [p for layer in self.layers for p in layer.params]

    def named_params(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.params}

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        for p in self.params:
            if p.name not in values:
                raise ConfigError(f"checkpoint has no parameter {p.name!r}")
            v = np.asarray(values[p.name], dtype=np.float64)
            if v.shape != p.data.shape:
                raise ShapeError(f"{p.name}: checkpoint shape {v.shape} vs model {p.data.shape}")
            np.copyto(p.data, v)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params)

    def forward(self, x, training=False, rng=None) -> T.Tensor:
        x = T.as_tensor(x)
        s = self.spec
        if x.data.ndim != 3 or x.shape[1:] != (s.input_width, s.feature_count):
            raise ShapeError(f"expected input (batch, {s.input_width}, {s.feature_count}), got {x.shape}")
        return self._forward(x, training, rng)

    def predict(self, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Raw outputs; a single (w, F) window gives a (|Y|,) vector."""
        inputs = np.asarray(inputs, dtype=np.float64)
        single = inputs.ndim == 2
        if single:
            inputs = inputs[None]
        if len(inputs) == 0:
            return np.zeros((0, self.spec.target_count))
        out = np.concatenate([self.forward(inputs[i:i + batch_size]).data
                              for i in range(0, len(inputs), batch_size)])
        return out[0] if single else out

    def descriptor(self) -> dict:
        return {"spec": self.spec.to_dict(), "adjustments": list(self.adjustments),
                "dropout_placement": "lstm_input", "param_count": self.param_count()}


def _resolve_conv(spec: ModelSpec, adjustments: list[str]) -> int:
    w = spec.input_width
    if spec.kernel_size is not None:
        if spec.kernel_size > w:
            raise BuildError(f"{spec.kind}: kernel size {spec.kernel_size} exceeds input width {w} "
                             "(valid convolution needs kernel_size <= input width)")
        return spec.kernel_size
    k = min(DEFAULT_KERNEL, w)
    if k != DEFAULT_KERNEL:
        adjustments.append(f"conv kernel_size reduced from {DEFAULT_KERNEL} to {k} for input width {w}")
    return k


def _resolve_pool(spec: ModelSpec, conv_len: int, adjustments: list[str]) -> int | None:
    if spec.pool_size is not None:
        if spec.pool_size > conv_len:
            raise BuildError(f"{spec.kind}: pool size {spec.pool_size} exceeds convolution output "
                             f"length {conv_len} at input width {spec.input_width} "
                             "(needs input_width - kernel_size + 1 >= pool_size)")
        return spec.pool_size
    if conv_len < DEFAULT_POOL:
        adjustments.append(f"max pooling skipped: convolution output length {conv_len} "
                           f"< pool size {DEFAULT_POOL}")
        return None
    return DEFAULT_POOL


def build(spec: ModelSpec) -> ForecastModel:
    rng = np.random.default_rng([spec.seed, 0])
    w, F, Y, units = spec.input_width, spec.feature_count, spec.target_count, spec.units
    adjustments: list[str] = []
    tgt = slice(spec.target_offset, spec.target_offset + Y)

    if spec.kind == "baseline":
        return ForecastModel(spec, [], lambda x, training, r: x[:, -1, tgt], adjustments)

    if spec.kind == "fnn":
        h1 = Dense(w * F, units, "relu", rng, "dense_0")
        h2 = Dense(units, units, "relu", rng, "dense_1")
        out = Dense(units, Y, "linear", rng, "dense_out")

        def fwd(x, training, r):
            return out(h2(h1(T.flatten(x))))
        return ForecastModel(spec, [h1, h2, out], fwd, adjustments)

    if spec.kind == "lstm":
        rec = LSTM(F, units, spec.dropout, False, rng, "lstm")
        out = Dense(units, Y, "linear", rng, "dense_out")

        def fwd(x, training, r):
            return out(rec(x, training, r))
        return ForecastModel(spec, [rec, out], fwd, adjustments)

    if spec.kind == "bilstm":
        rec = Bidirectional(F, units, spec.dropout, True, rng, "bilstm")
        out = Dense(2 * units, Y, "linear", rng, "dense_out")

        def fwd(x, training, r):
            return out(rec(x, training, r)[:, -1, :])
        return ForecastModel(spec, [rec, out], fwd, adjustments)

    if spec.kind == "cnn":
        k = _resolve_conv(spec, adjustments)
        conv = Conv1D(F, units, k, "relu", rng, "conv1d")
        h = Dense(units, units, "relu", rng, "dense_0")
        out = Dense(units, Y, "linear", rng, "dense_out")

        def fwd(x, training, r):
            # the dense head is position-wise, so only the final position is computed
            return out(h(conv(x)[:, -1, :]))
        return ForecastModel(spec, [conv, h, out], fwd, adjustments)

    # cnn_lstm
    k = _resolve_conv(spec, adjustments)
    pool = _resolve_pool(spec, w - k + 1, adjustments)
    conv = Conv1D(F, units, k, "linear", rng, "conv1d")
    pooler = MaxPool1D(pool) if pool else None
    h = Dense(units, units, "relu", rng, "dense_0")
    rec = LSTM(units, units, spec.dropout, False, rng, "lstm")
    out = Dense(units, Y, "linear", rng, "dense_out")

    def fwd(x, training, r):
        z = conv(x)
        if pooler is not None:
            z = pooler(z)
        return out(rec(h(z), training, r))
    return ForecastModel(spec, [conv, h, rec, out], fwd, adjustments)


@dataclass
class TrainedModel:
    spec: ModelSpec
    model: ForecastModel
    history: list[tuple[int, float, float]] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val_mse: float = math.nan

    def predict(self, inputs):
        return self.model.predict(inputs)


def evaluate_mse(model: ForecastModel, ds: WindowedDataset) -> float:
    """Unclamped MSE of raw outputs, dropout off."""
    pred = model.predict(ds.inputs)
    return float(np.mean((pred - ds.labels) ** 2))


def train(model: ForecastModel, train_ds: WindowedDataset, val_ds: WindowedDataset) -> TrainedModel:
    """Adam on MSE in chronological mini-batches with early stopping.

    Stops once validation MSE has not improved for ``patience`` epochs and
    restores the parameters of the best epoch.
    """
    spec = model.spec
    if spec.kind == "baseline":
        return TrainedModel(spec, model)
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ConfigError("training and validation datasets must be non-empty")

    params = model.params
    state = AdamState(learning_rate=spec.learning_rate)
    rng = np.random.default_rng([spec.seed, 1])
    result = TrainedModel(spec, model)
    best = [p.data.copy() for p in params]
    best_val, wait = math.inf, 0
    n = len(train_ds)

    for epoch in range(1, spec.epochs + 1):
        total = 0.0
        for start in range(0, n, spec.batch_size):
            xb = train_ds.inputs[start:start + spec.batch_size]
            yb = train_ds.labels[start:start + spec.batch_size]
            zero_grad(params)
            loss = T.mse_loss(model.forward(xb, training=True, rng=rng), yb)
            if not np.isfinite(loss.data):
                raise NumericalError(f"{spec.kind}: training loss is {float(loss.data)} "
                                     f"at epoch {epoch}, batch starting at {start}")
            loss.backward()
            adam_step(params, state)
            total += float(loss.data) * len(yb)
        train_mse = total / n
        val_mse = evaluate_mse(model, val_ds)
        if not np.isfinite(val_mse):
            raise NumericalError(f"{spec.kind}: validation MSE is {val_mse} at epoch {epoch}")
        result.history.append((epoch, train_mse, val_mse))
        log.debug("%s w=%d epoch %d train %.6f val %.6f", spec.kind, spec.input_width,
                  epoch, train_mse, val_mse)
        if val_mse < best_val:
            best_val, wait = val_mse, 0
            result.best_epoch = epoch
            for b, p in zip(best, params):
                np.copyto(b, p.data)
        else:
            wait += 1
            if wait >= spec.patience:
                break

    result.stopped_epoch = len(result.history)
    result.best_val_mse = best_val
    for b, p in zip(best, params):
        np.copyto(p.data, b)
    return result


def predict(model: ForecastModel | TrainedModel, window: np.ndarray) -> np.ndarray:
    return model.predict(window)


def write_history(trained: TrainedModel, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["epoch", "train_mse", "val_mse"])
    for epoch, tr, va in trained.history:
        writer.writerow([epoch, repr(tr), repr(va)])


def save_model(model: ForecastModel, stream: IO[str], catalog_hash: str, extra: dict | None = None) -> None:
    dump_checkpoint(stream, model.named_params(), architecture=model.descriptor(),
                    seed=model.spec.seed, catalog_hash=catalog_hash, extra=extra)


def load_model(stream: IO[str]) -> tuple[ForecastModel, dict]:
    payload = load_checkpoint(stream)
    spec = ModelSpec.from_dict(payload["architecture"]["spec"])
    model = build(spec)
    model.load_params(payload["parameters"])
    return model, payload
