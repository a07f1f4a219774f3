"""Minimal float64 autodiff engine with the layers the forecasting models use."""
from .layers import LSTM, Bidirectional, Conv1D, Dense, MaxPool1D
from .optim import AdamState, adam_step, zero_grad
from .tensor import Parameter, Tensor, mse_loss

__all__ = ["AdamState", "Bidirectional", "Conv1D", "Dense", "LSTM", "MaxPool1D", "Parameter",
           "Tensor", "adam_step", "mse_loss", "zero_grad"]
