"""Weight initializers."""
import numpy as np


def glorot_uniform(rng: np.random.Generator, shape, fan_in=None, fan_out=None) -> np.ndarray:
    fan_in = shape[0] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, shape, gain: float = 1.0) -> np.ndarray:
    """(Semi-)orthogonal matrix from the QR decomposition of a Gaussian draw.

    Tall or square shapes have orthonormal columns, wide shapes orthonormal
    rows. Column signs follow diag(R) so the result is unique for a draw.
    """
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q
