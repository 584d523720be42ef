"""Dense float64 primitives behind the generative layer.

Vectors and matrices are plain ``numpy`` arrays of dtype float64 (row-major).
Every routine accepts optional leading batch axes so a whole stack of channels
can be unrolled in one call; the documented shapes refer to the trailing axes.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


def as_vector(data, name: str = "vector") -> np.ndarray:
    """Return ``data`` as a finite, non-empty float64 1-D array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    check_finite(arr, name)
    return arr


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    check_finite(arr, name)
    return arr


def as_float(data) -> np.ndarray:
    """View ``data`` as a floating array, keeping extended precision if present."""
    arr = np.asarray(data)
    if arr.dtype == np.longdouble:
        return arr
    return arr.astype(np.float64, copy=False)


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")


def same_padding(kernel_width: int) -> int:
    if kernel_width < 1 or kernel_width % 2 == 0:
        raise InvalidArgumentError(f"kernel width must be odd and >= 1, got {kernel_width}")
    return (kernel_width - 1) // 2


def im2row(y, kernel_width: int, pad: int | None = None) -> np.ndarray:
    """Unroll ``y`` (..., M) into sliding windows (..., rows, K).

    ``y`` is zero-padded by ``pad`` samples on both sides (default ``(K-1)/2``,
    which gives exactly M rows). Row ``m`` holds padded samples ``m .. m+K-1``.
    The result is stored tap-major (a transposed view of a (..., K, rows)
    array) so each column is contiguous.
    """
    y = as_float(y)
    if y.ndim == 0 or y.shape[-1] == 0:
        raise InvalidArgumentError("im2row needs a non-empty input")
    check_finite(y, "im2row input")
    default_pad = same_padding(kernel_width)
    pad = default_pad if pad is None else pad
    if pad < 0:
        raise InvalidArgumentError(f"padding must be non-negative, got {pad}")
    if kernel_width > y.shape[-1] + 2 * pad:
        raise InvalidArgumentError(
            f"kernel width {kernel_width} exceeds padded length {y.shape[-1] + 2 * pad}"
        )
    widths = [(0, 0)] * (y.ndim - 1) + [(pad, pad)]
    padded = np.pad(y, widths)
    rows = padded.shape[-1] - kernel_width + 1
    taps = np.stack([padded[..., r:r + rows] for r in range(kernel_width)], axis=-2)
    return np.swapaxes(taps, -1, -2)


def hadamard_power_concat(Y, order: int) -> np.ndarray:
    """Column-concatenate elementwise powers ``[Y, Y**2, ..., Y**order]``.

    Output has shape (..., M, K*order); column block ``q-1`` holds the q-th power.
    It keeps the memory order of ``Y``, so a tap-major input gives a tap-major result.
    """
    if order < 1:
        raise InvalidArgumentError(f"Taylor order must be >= 1, got {order}")
    Y = as_float(Y)
    if Y.ndim < 2:
        raise InvalidArgumentError(f"expected at least a 2-D array, got shape {Y.shape}")
    k = Y.shape[-1]
    if Y.strides[-1] > Y.strides[-2]:
        out = np.swapaxes(np.empty(Y.shape[:-2] + (k * order, Y.shape[-2]), dtype=Y.dtype), -1, -2)
    else:
        out = np.empty(Y.shape[:-1] + (k * order,), dtype=Y.dtype)
    out[..., :k] = Y
    for q in range(1, order):
        np.multiply(out[..., (q - 1) * k:q * k], Y, out=out[..., q * k:(q + 1) * k])
    return out


def row_dot(Y, w) -> np.ndarray:
    """Matrix-vector product: ``out[m] = sum_n Y[m, n] * w[n]``."""
    Y = as_matrix(Y, "Y")
    w = as_vector(w, "w")
    if Y.shape[1] != w.shape[0]:
        raise InvalidArgumentError(f"Y has {Y.shape[1]} columns but w has length {w.shape[0]}")
    return Y @ w


def im2row_transpose_scatter(G, kernel_width: int, pad: int | None = None) -> np.ndarray:
    """Adjoint of :func:`im2row`.

    Scatter-adds row ``m`` of ``G`` (..., rows, K) onto padded positions
    ``m .. m+K-1`` and crops the padding, giving an array of shape (..., M).
    """
    G = as_float(G)
    default_pad = same_padding(kernel_width)
    pad = default_pad if pad is None else pad
    if G.ndim < 2 or G.shape[-1] != kernel_width:
        raise InvalidArgumentError(
            f"G must have {kernel_width} columns, got shape {G.shape}"
        )
    rows = G.shape[-2]
    length = rows + kernel_width - 1 - 2 * pad
    if rows < 1 or length < 1:
        raise InvalidArgumentError(f"no valid output length for {rows} rows, K={kernel_width}, pad={pad}")
    padded = np.zeros(G.shape[:-2] + (rows + kernel_width - 1,), dtype=G.dtype)
    for r in range(kernel_width):
        padded[..., r : r + rows] += G[..., r]
    return padded[..., pad : pad + length]
