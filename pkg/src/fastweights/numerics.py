"""Dense float64 matrix/vector helpers and seeded randomness.

Everything downstream works on plain ``numpy.ndarray`` values in double
precision. Shapes are checked strictly: there is no implicit broadcasting
between mismatched shapes, a mismatch is always a :class:`ShapeError`.

Randomness comes from numpy's PCG64 generator, which is counter-based and
produces identical streams for identical seeds on every platform.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an operation's contract."""


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product of two 2-D arrays, float64 accumulation."""
    a = as_f64(a)
    b = as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Outer product u v^T of two vectors (1-D or single-row/column 2-D)."""
    u = as_f64(u).reshape(-1)
    v = as_f64(v).reshape(-1)
    return np.outer(u, v)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(as_f64(z), 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = as_f64(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def uniform_fanout_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform on (-1/sqrt(fan_out), 1/sqrt(fan_out)) for an (in, out) matrix."""
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def scaled_identity(n: int, scale: float) -> np.ndarray:
    return scale * np.eye(n, dtype=np.float64)
