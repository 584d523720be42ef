"""Generative-neuron layer: parameters, forward passes and back-propagation.

Each connection ``i -> k`` carries a K x Q kernel. Tap ``r`` applies the
polynomial ``sum_q w[k, i, r, q-1] * y**q`` to its input sample, taps are
summed, input channels are summed and a per-output bias is added. With
``Q == 1`` this is exactly a same-padded, stride-1 convolution layer.

Weight storage is ``weights[k, i, r, q]`` where slot ``q`` holds the
coefficient of power ``q + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError
from .tensor import (
    check_finite,
    hadamard_power_concat,
    im2row,
    im2row_transpose_scatter,
    same_padding,
)


@dataclass
class GenerativeLayerParams:
    weights: np.ndarray  # (out_channels, in_channels, K, Q)
    biases: np.ndarray  # (out_channels,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 4:
            raise InvalidArgumentError(f"weights must be 4-D [out, in, K, Q], got shape {self.weights.shape}")
        out, inp, k, q = self.weights.shape
        if min(out, inp, k, q) < 1:
            raise InvalidArgumentError(f"degenerate weight shape {self.weights.shape}")
        same_padding(k)
        if self.biases.shape != (out,):
            raise InvalidArgumentError(f"biases must have shape ({out},), got {self.biases.shape}")
        check_finite(self.weights, "weights")
        check_finite(self.biases, "biases")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_width(self) -> int:
        return self.weights.shape[2]

    @property
    def q_order(self) -> int:
        return self.weights.shape[3]

    def copy(self) -> "GenerativeLayerParams":
        return GenerativeLayerParams(self.weights.copy(), self.biases.copy())


@dataclass
class ForwardCache:
    inputs: np.ndarray  # (in_channels, M)
    base: np.ndarray  # (in_channels, M, K): unrolled inputs, the power-1 block
    yq: np.ndarray  # (in_channels, M, K*Q): per-channel power stacks
    pre_activation: np.ndarray  # (out_channels, M)


@dataclass
class LayerGradients:
    d_weights: np.ndarray
    d_biases: np.ndarray
    d_input: np.ndarray


class MultiplyCounter:
    """Tally of weight-times-input multiplications made by :func:`forward_naive`."""

    def __init__(self):
        self.count = 0


def init_params(in_channels: int, out_channels: int, kernel_width: int, q_order: int,
                seed=None) -> GenerativeLayerParams:
    """Uniform fan-in/fan-out init with the power-q slice damped by 1/q!.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if min(in_channels, out_channels, kernel_width, q_order) < 1:
        raise InvalidArgumentError("channel counts, kernel width and Q must all be >= 1")
    same_padding(kernel_width)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = weight_bound(in_channels, out_channels, kernel_width)
    w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_width, q_order))
    damping = np.array([1.0 / math.factorial(q) for q in range(1, q_order + 1)])
    return GenerativeLayerParams(w * damping, np.zeros(out_channels))


def weight_bound(in_channels: int, out_channels: int, kernel_width: int) -> float:
    return math.sqrt(6.0 / (in_channels * kernel_width + out_channels * kernel_width))


def count_params(params: GenerativeLayerParams) -> int:
    return params.out_channels * (params.in_channels * params.kernel_width * params.q_order + 1)


def count_macs(params: GenerativeLayerParams, length: int) -> int:
    """Multiply-accumulates for one forward pass over ``length`` output samples.

    Bias additions and the elementwise powers are not counted.
    """
    if length < 1:
        raise InvalidArgumentError(f"output length must be >= 1, got {length}")
    return (params.out_channels * params.in_channels * length
            * params.kernel_width * params.q_order)


def flat_kernel(params: GenerativeLayerParams, k: int, i: int) -> np.ndarray:
    """Kernel of connection ``i -> k`` as a KQ vector: all taps of power 1, then power 2, ..."""
    return params.weights[k, i].T.reshape(-1)


def _check_inputs(params: GenerativeLayerParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgumentError(f"inputs must be 2-D [channels, length], got shape {x.shape}")
    if x.shape[0] != params.in_channels:
        raise InvalidArgumentError(
            f"layer expects {params.in_channels} input channels, got {x.shape[0]}"
        )
    if x.shape[1] < 1:
        raise InvalidArgumentError("inputs must have at least one sample")
    check_finite(x, "layer input")
    return x


def forward_naive(params: GenerativeLayerParams, inputs, counter: MultiplyCounter | None = None) -> np.ndarray:
    """Reference forward pass with explicit loops over every term.

    Slow by design; it exists to check :func:`forward_vectorized`.
    """
    x = _check_inputs(params, inputs)
    n_in, length = x.shape
    K, Q = params.kernel_width, params.q_order
    pad = same_padding(K)
    padded = [[0.0] * pad + list(row) + [0.0] * pad for row in x.tolist()]
    w = params.weights.tolist()
    out = np.empty((params.out_channels, length))
    mults = 0
    for k in range(params.out_channels):
        for m in range(length):
            acc = float(params.biases[k])
            for i in range(n_in):
                row = padded[i]
                wki = w[k][i]
                for r in range(K):
                    y = row[m + r]
                    for q in range(Q):
                        acc += wki[r][q] * y ** (q + 1)
                        mults += 1
            out[k, m] = acc
    if counter is not None:
        counter.count += mults
    return out


def stacked_kernels(weights: np.ndarray) -> np.ndarray:
    """Flatten (out, in, K, Q) weights to (in, K*Q, out).

    Slice ``i`` stacks the :func:`flat_kernel` vectors of every connection
    leaving input channel ``i``, matching the columns of its power stack.
    """
    out, n_in, K, Q = weights.shape
    return np.swapaxes(weights, -1, -2).reshape(out, n_in, Q * K).transpose(1, 2, 0)


def unroll(x: np.ndarray, kernel_width: int, q_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Unroll ``x`` (in, M) into windows (in, M, K) and power stacks (in, M, K*Q).

    Row ``m`` of stack ``i`` lists the K taps of channel ``i`` raised to
    power 1, then power 2, and so on up to Q.
    """
    base = im2row(x, kernel_width)
    return base, hadamard_power_concat(base, q_order)


def forward_vectorized(params: GenerativeLayerParams, inputs) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass as matrix products over unrolled power stacks.

    Each input channel is unrolled and raised to powers 1..Q, giving an
    M x KQ matrix per channel. Multiplying it by that channel's flattened
    kernels gives its contribution to every output; the contributions are
    summed over input channels and the bias is added.
    """
    x = _check_inputs(params, inputs)
    base, yq = unroll(x, params.kernel_width, params.q_order)
    w = np.swapaxes(stacked_kernels(params.weights), 1, 2)  # (in, out, K*Q)
    per_channel = w @ np.swapaxes(yq, 1, 2)  # (in, out, M)
    out = per_channel.sum(axis=0) + params.biases[:, None]
    return out, ForwardCache(inputs=x, base=base, yq=yq, pre_activation=out)


def backward(params: GenerativeLayerParams, cache: ForwardCache, d_output) -> LayerGradients:
    """Gradients of a scalar loss w.r.t. weights, biases and the layer input."""
    if cache is None or not isinstance(cache, ForwardCache):
        raise InvalidStateError("backward needs the cache returned by forward_vectorized")
    n_in, length, K = cache.base.shape
    Q = params.q_order
    if n_in != params.in_channels or K != params.kernel_width or cache.yq.shape[2] != K * Q:
        raise InvalidStateError(
            f"cache with power stacks {cache.yq.shape} does not belong to a layer with "
            f"{params.in_channels} inputs, K={params.kernel_width}, Q={Q}"
        )
    dx = np.asarray(d_output, dtype=np.float64)
    if dx.shape != (params.out_channels, length):
        raise InvalidStateError(
            f"d_output shape {dx.shape} does not match layer output ({params.out_channels}, {length})"
        )

    d_biases = dx.sum(axis=1)
    dw = dx @ cache.yq  # (in, out, Q*K)
    d_weights = dw.reshape(n_in, params.out_channels, Q, K).transpose(1, 0, 3, 2)

    # tap-major throughout: (in, Q*K, M) keeps every power block contiguous
    d_yq = stacked_kernels(params.weights) @ dx
    base = np.swapaxes(cache.base, 1, 2)
    # sum_q q * base**(q-1) * d_q, accumulated Horner-style from q = Q down
    d_base = Q * d_yq[:, (Q - 1) * K:]
    for q in range(Q - 1, 0, -1):
        d_base *= base
        d_base += q * d_yq[:, (q - 1) * K:q * K]
    d_input = im2row_transpose_scatter(np.swapaxes(d_base, 1, 2), K)
    return LayerGradients(d_weights=np.ascontiguousarray(d_weights), d_biases=d_biases, d_input=d_input)
