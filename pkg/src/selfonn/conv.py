"""Plain 1-D convolution layer written independently of the unrolled path.

Used as the Q=1 baseline and as the "Q separate convolutions" formulation of
a generative layer.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .tensor import as_float, same_padding


def conv1d_forward(kernels: np.ndarray, biases: np.ndarray, inputs) -> np.ndarray:
    """Same-padded cross-correlation.

    ``kernels`` is (..., out, in, K), ``biases`` (..., out) and ``inputs``
    (..., in, M); leading axes broadcast.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    n_in, K = kernels.shape[-2:]
    if x.ndim < 2 or x.shape[-2] != n_in:
        raise InvalidArgumentError(f"expected inputs of shape (..., {n_in}, M), got {x.shape}")
    pad = same_padding(K)
    length = x.shape[-1]
    padded = np.zeros(x.shape[:-1] + (length + 2 * pad,))
    padded[..., pad : pad + length] = x
    out = np.asarray(biases, dtype=np.float64)[..., None]
    for r in range(K):
        # out[k, m] += sum_i kernels[k, i, r] * padded[i, m + r]
        out = out + kernels[..., r] @ padded[..., r : r + length]
    return out


def conv1d_backward(kernels: np.ndarray, inputs: np.ndarray, d_output: np.ndarray):
    """Return ``(d_kernels, d_biases, d_inputs)`` for :func:`conv1d_forward`."""
    kernels = np.asarray(kernels, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    d_out = np.asarray(d_output, dtype=np.float64)
    n_out, n_in, K = kernels.shape
    pad = same_padding(K)
    length = x.shape[1]
    padded = np.zeros((n_in, length + 2 * pad))
    padded[:, pad : pad + length] = x
    d_kernels = np.empty_like(kernels)
    d_padded = np.zeros_like(padded)
    for r in range(K):
        d_kernels[:, :, r] = d_out @ padded[:, r : r + length].T
        d_padded[:, r : r + length] += kernels[:, :, r].T @ d_out
    return d_kernels, d_out.sum(axis=1), d_padded[:, pad : pad + length]


def _contract_taps(w: np.ndarray, powers: list[np.ndarray], length: int) -> np.ndarray:
    """``sum_r sum_q w[..., r, q] * powers[q][..., r : r + length]`` per output channel.

    ``powers`` holds Q padded arrays (..., in, M + K - 1); they are stacked as
    extra channels so one matrix product covers every tap, followed by a
    shifted sum over taps.
    """
    out_c, n_in, K, Q = w.shape[-4:]
    stacked = np.stack(powers, axis=-2)  # (..., in, Q, M + K - 1)
    lead = stacked.shape[:-3]
    width = stacked.shape[-1]
    stacked = stacked.reshape(lead + (n_in * Q, width))
    taps = np.moveaxis(w, -2, -4).reshape(w.shape[:-4] + (K, out_c, n_in * Q))

    if w.ndim == 4:
        cols = np.moveaxis(stacked, -2, 0).reshape(n_in * Q, -1)
        prod = (taps.reshape(K * out_c, n_in * Q) @ cols).reshape((K, out_c) + lead + (width,))
        out = prod[0, ..., 0:length].copy()
        for r in range(1, K):
            out += prod[r, ..., r : r + length]
        return np.moveaxis(out, 0, -2)  # (..., out, M)
    if stacked.ndim != 2:
        raise InvalidArgumentError("inputs and weights cannot both be batched")
    prod = (taps.reshape(-1, n_in * Q) @ stacked).reshape(w.shape[:-4] + (K, out_c, width))
    out = prod[..., 0, :, 0:length].copy()
    for r in range(1, K):
        out += prod[..., r, :, r : r + length]
    return out


def _padded(x: np.ndarray, K: int) -> np.ndarray:
    pad = same_padding(K)
    return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)])


def _check_qconv_input(w: np.ndarray, x: np.ndarray) -> None:
    n_in = w.shape[-3]
    if x.ndim < 2 or x.shape[-2] != n_in:
        raise InvalidArgumentError(f"expected inputs of shape (..., {n_in}, M), got {x.shape}")


def forward_qconv(weights: np.ndarray, biases: np.ndarray, inputs) -> np.ndarray:
    """Generative layer evaluated as convolutions over the input powers.

    Computes ``sum_q conv(w[..., q-1], x**q) + b``. Either ``inputs``
    (..., in, M) or ``weights`` (..., out, in, K, Q) with ``biases`` (..., out)
    may carry leading batch axes, not both.
    """
    w = as_float(weights)
    x = as_float(inputs)
    _check_qconv_input(w, x)
    K, Q = w.shape[-2:]
    padded = _padded(x, K)
    powers = [padded]
    for _ in range(Q - 1):
        powers.append(powers[-1] * padded)
    return _contract_taps(w, powers, x.shape[-1]) + as_float(biases)[..., None]


def qconv_difference(weights: np.ndarray, plus, diff) -> np.ndarray:
    """``forward_qconv(w, b, plus) - forward_qconv(w, b, plus - diff)`` without cancellation.

    Uses ``a**q - b**q = a * (a**(q-1) - b**(q-1)) + b**(q-1) * (a - b)`` so
    the result stays accurate relative to ``diff`` even when it is tiny.
    """
    w = as_float(weights)
    a = as_float(plus)
    d = as_float(diff)
    _check_qconv_input(w, d)
    K, Q = w.shape[-2:]
    a = _padded(np.broadcast_to(a, d.shape), K)
    d = _padded(d, K)
    b = a - d
    powers = [d]
    b_pow = np.ones_like(b)
    for _ in range(Q - 1):
        b_pow = b_pow * b
        powers.append(a * powers[-1] + b_pow * d)
    return _contract_taps(w, powers, diff.shape[-1])
