"""Layers built from the tensor primitives.

Inputs are batched: (batch, features) for dense layers applied to flat
inputs, (batch, time, channels) for the sequence layers.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .init import glorot_uniform, orthogonal
from .tensor import Parameter, Tensor


class Layer:
    def __init__(self, name: str):
        self.name = name

    @property
    def params(self) -> list[Parameter]:
        return []

    def __call__(self, x, training=False, rng=None) -> Tensor:
        return self.forward(T.as_tensor(x), training, rng)

    def forward(self, x, training, rng):
        raise NotImplementedError


class Dense(Layer):
    """activation(x @ kernel + bias); kernel has shape (n_in, n_out)."""

    def __init__(self, n_in: int, units: int, activation="linear", rng=None, name="dense"):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.n_in, self.units = n_in, units
        self.activation = activation
        self.kernel = Parameter(glorot_uniform(rng, (n_in, units)), f"{name}/kernel")
        self.bias = Parameter(np.zeros(units), f"{name}/bias")

    @property
    def params(self):
        return [self.kernel, self.bias]

    def forward(self, x, training, rng):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.name}: expected {self.n_in} input features, got shape {x.shape}")
        return T.ACTIVATIONS[self.activation](T.bias_add(T.matmul(x, self.kernel), self.bias))


def dense(x, kernel, bias, activation="linear") -> Tensor:
    return T.ACTIVATIONS[activation](T.bias_add(T.matmul(x, kernel), bias))


class Conv1D(Layer):
    """Valid (unpadded) 1-D cross-correlation over the time axis.

    The kernel is stored unrolled as (kernel_size * channels, filters) so the
    forward pass is a single matmul over stacked time-shifted slices.
    """

    def __init__(self, channels: int, filters: int, kernel_size: int, activation="linear",
                 rng=None, name="conv1d"):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.channels, self.filters, self.kernel_size = channels, filters, kernel_size
        self.activation = activation
        shape = (kernel_size * channels, filters)
        self.kernel = Parameter(
            glorot_uniform(rng, shape, fan_in=kernel_size * channels, fan_out=kernel_size * filters),
            f"{name}/kernel")
        self.bias = Parameter(np.zeros(filters), f"{name}/bias")

    @property
    def params(self):
        return [self.kernel, self.bias]

    def forward(self, x, training, rng):
        return conv1d(x, self.kernel, self.bias, self.kernel_size, self.activation)


def conv1d(x, kernel, bias, kernel_size: int, activation="linear") -> Tensor:
    x = T.as_tensor(x)
    steps, channels = x.shape[-2], x.shape[-1]
    if kernel_size > steps:
        raise ShapeError(f"conv1d: kernel size {kernel_size} exceeds time length {steps}")
    if kernel.shape[0] != kernel_size * channels:
        raise ShapeError(f"conv1d: kernel {kernel.shape} does not fit {channels} channels "
                         f"with kernel size {kernel_size}")
    out_len = steps - kernel_size + 1
    if kernel_size == 1:
        cols = x
    else:
        cols = T.concat([x[..., k:k + out_len, :] for k in range(kernel_size)], axis=-1)
    return dense(cols, kernel, bias, activation)


class MaxPool1D(Layer):
    def __init__(self, pool: int, name="maxpool1d"):
        super().__init__(name)
        self.pool = pool

    def forward(self, x, training, rng):
        return T.maxpool1d(x, self.pool)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept entries scaled by 1 / (1 - rate)."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


class LSTM(Layer):
    """LSTM with gate order (input, forget, candidate, output).

    Dropout is applied to the layer input (and so to the input projection)
    during training, with one mask shared across all timesteps.
    """

    def __init__(self, n_in: int, units: int, dropout: float = 0.0, return_sequences=False,
                 rng=None, name="lstm"):
        super().__init__(name)
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        rng = rng or np.random.default_rng(0)
        self.n_in, self.units = n_in, units
        self.dropout = dropout
        self.return_sequences = return_sequences
        self.kernel = Parameter(glorot_uniform(rng, (n_in, 4 * units)), f"{name}/kernel")
        self.recurrent_kernel = Parameter(orthogonal(rng, (units, 4 * units)),
                                          f"{name}/recurrent_kernel")
        bias = np.zeros(4 * units)
        bias[units:2 * units] = 1.0
        self.bias = Parameter(bias, f"{name}/bias")

    @property
    def params(self):
        return [self.kernel, self.recurrent_kernel, self.bias]

    def forward(self, x, training, rng):
        if x.data.ndim != 3 or x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.name}: expected (batch, time, {self.n_in}), got {x.shape}")
        if training and self.dropout > 0:
            if rng is None:
                raise ValueError("training with dropout needs an rng")
            x = T.mul(x, dropout_mask(rng, (x.shape[0], 1, x.shape[2]), self.dropout))
        return lstm_sequence(x, self.kernel, self.recurrent_kernel, self.bias, self.units,
                             self.return_sequences)


def lstm_cell(z, c, units):
    """One step given the full pre-activation z = x W + h U + b."""
    u = units
    i = T.sigmoid(z[:, :u])
    f = T.sigmoid(z[:, u:2 * u])
    g = T.tanh(z[:, 2 * u:3 * u])
    o = T.sigmoid(z[:, 3 * u:])
    c_new = i * g if c is None else f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def lstm_sequence(x, kernel, recurrent_kernel, bias, units, return_sequences=False):
    batch, steps = x.shape[0], x.shape[1]
    projected = T.bias_add(T.matmul(x, kernel), bias)  # (B, T, 4u)
    h = c = None
    outputs = []
    for t in range(steps):
        z = projected[:, t, :]
        if h is not None:
            z = z + T.matmul(h, recurrent_kernel)
        h, c = lstm_cell(z, c, units)
        if return_sequences:
            outputs.append(T.reshape(h, (batch, 1, units)))
    if return_sequences:
        return T.concat(outputs, axis=1)
    return h


class Bidirectional(Layer):
    """Forward and time-reversed LSTMs, hidden sequences concatenated per step.

    The backward pass's outputs are flipped back so step t of the result
    pairs the forward state after x[0..t] with the backward state after
    x[T-1..t].
    """

    def __init__(self, n_in: int, units: int, dropout: float = 0.0, return_sequences=True,
                 rng=None, name="bidirectional"):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.units = units
        self.return_sequences = return_sequences
        self.forward_layer = LSTM(n_in, units, dropout, True, rng, f"{name}/forward")
        self.backward_layer = LSTM(n_in, units, dropout, True, rng, f"{name}/backward")

    @property
    def params(self):
        return self.forward_layer.params + self.backward_layer.params

    def forward(self, x, training, rng):
        fwd = self.forward_layer(x, training, rng)
        bwd = T.flip(self.backward_layer(T.flip(x, axis=1), training, rng), axis=1)
        out = T.concat([fwd, bwd], axis=-1)
        if not self.return_sequences:
            return out[:, -1, :]
        return out
