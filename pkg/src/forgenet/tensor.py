"""Rank-2 and rank-4 array helpers.

Activations and gradients are carried by plain numpy arrays in row-major
(n, c, h, w) order, float32 for model state. A float64 path through the
same functions exists for finite-difference gradient checking; everything
here is dtype-preserving.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

Shape4 = tuple[int, int, int, int]

FLOAT_DTYPES = (np.float32, np.float64)


def _check_shape(shape: tuple[int, ...], rank: int) -> None:
    if len(shape) != rank:
        raise ShapeError(f"expected rank-{rank} shape, got {shape}")
    if any(int(d) < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")


def zeros(shape: Shape4, dtype=np.float32) -> np.ndarray:
    """All-zero (n, c, h, w) tensor. Rejects zero or negative dimensions."""
    _check_shape(tuple(shape), 4)
    return np.zeros(shape, dtype=dtype)


def zeros2(shape: tuple[int, int], dtype=np.float32) -> np.ndarray:
    _check_shape(tuple(shape), 2)
    return np.zeros(shape, dtype=dtype)


def as_tensor4(data, dtype=np.float32) -> np.ndarray:
    """Validate and return a contiguous rank-4 array."""
    x = np.ascontiguousarray(data, dtype=dtype)
    _check_shape(x.shape, 4)
    return x


def require_rank(x: np.ndarray, rank: int, what: str = "tensor") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != rank:
        got = getattr(x, "shape", type(x).__name__)
        raise ShapeError(f"{what}: expected rank-{rank} array, got {got}")
    if any(d < 1 for d in x.shape):
        raise ShapeError(f"{what}: all dimensions must be >= 1, got {x.shape}")
    return x


def require_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{what}: contains non-finite values")
    return x


def flatten(x: np.ndarray) -> np.ndarray:
    """(n, c, h, w) -> (n, c*h*w), preserving row-major (c, h, w) order."""
    require_rank(x, 4, "flatten input")
    n = x.shape[0]
    return np.ascontiguousarray(x).reshape(n, -1)


def unflatten(x2: np.ndarray, shape: Shape4) -> np.ndarray:
    """Inverse of flatten: (n, c*h*w) -> (n, c, h, w)."""
    require_rank(x2, 2, "unflatten input")
    _check_shape(tuple(shape), 4)
    n, c, h, w = shape
    if x2.shape[0] != n or x2.shape[1] != c * h * w:
        raise ShapeError(
            f"unflatten: {x2.shape} incompatible with target shape {tuple(shape)}"
        )
    return np.ascontiguousarray(x2).reshape(shape)


def map_elementwise(x: np.ndarray, f: Callable[[float], float]) -> np.ndarray:
    """Apply a scalar function elementwise, keeping shape and dtype."""
    require_rank(x, 4, "map_elementwise input")
    out = np.vectorize(f, otypes=[x.dtype])(x)
    return np.ascontiguousarray(out)
