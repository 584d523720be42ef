"""UNet-style encoder/decoder built from generative layers.

Topology for the default config (every layer shares K and Q)::

    enc 1 -> 8  : layer, tanh, maxpool/2     (skip = pre-pool activation)
    enc 8 -> 16 : layer, tanh, maxpool/2
    bottleneck  : layer 16 -> 32, tanh
    dec         : upsample x2, concat skip, layer 48 -> 16, tanh
    dec         : upsample x2, concat skip, layer 24 -> 8, tanh
    head        : layer 8 -> 1, sigmoid

Six generative layers, 81 neurons.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from . import layer as gl
from .conv import conv1d_backward, conv1d_forward, forward_qconv, qconv_difference
from .errors import InvalidArgumentError, InvalidStateError
from .layer import GenerativeLayerParams, LayerGradients

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class NetworkConfig:
    q_order: int = 3
    kernel_width: int = 9
    encoder_channels: tuple[int, ...] = (8, 16)
    bottleneck_channels: int = 32
    decoder_channels: tuple[int, ...] = (16, 8)
    output_channels: int = 1
    pool_factor: int = 2
    skip_connections: bool = True

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        if self.q_order < 1:
            raise InvalidArgumentError(f"q_order must be >= 1, got {self.q_order}")
        if self.kernel_width < 1 or self.kernel_width % 2 == 0:
            raise InvalidArgumentError(f"kernel_width must be odd and >= 1, got {self.kernel_width}")
        if len(self.decoder_channels) != len(self.encoder_channels):
            raise InvalidArgumentError("decoder must have as many stages as the encoder")
        if any(c < 1 for c in self.encoder_channels + self.decoder_channels):
            raise InvalidArgumentError("channel counts must be >= 1")
        if self.bottleneck_channels < 0 or self.output_channels < 1:
            raise InvalidArgumentError("bottleneck_channels must be >= 0 and output_channels >= 1")
        if self.pool_factor < 1:
            raise InvalidArgumentError(f"pool_factor must be >= 1, got {self.pool_factor}")

    @property
    def length_multiple(self) -> int:
        return self.pool_factor ** len(self.encoder_channels)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(in_channels, out_channels) for every generative layer, in forward order."""
        shapes = []
        width = 1
        for c in self.encoder_channels:
            shapes.append((width, c))
            width = c
        if self.bottleneck_channels:
            shapes.append((width, self.bottleneck_channels))
            width = self.bottleneck_channels
        for s, c in enumerate(self.decoder_channels):
            skip = self.encoder_channels[-1 - s] if self.skip_connections else 0
            shapes.append((width + skip, c))
            width = c
        shapes.append((width, self.output_channels))
        return shapes

    def neuron_count(self) -> int:
        return sum(out for _, out in self.layer_shapes())


@dataclass
class Model:
    config: NetworkConfig
    layers: list[GenerativeLayerParams]
    training: bool = True
    # bumped by every parameter update so stale caches can be detected
    version: int = 0

    def __post_init__(self):
        shapes = self.config.layer_shapes()
        if len(shapes) != len(self.layers):
            raise InvalidArgumentError(f"config needs {len(shapes)} layers, got {len(self.layers)}")
        for n, ((cin, cout), p) in enumerate(zip(shapes, self.layers)):
            expected = (cout, cin, self.config.kernel_width, self.config.q_order)
            if p.weights.shape != expected:
                raise InvalidArgumentError(f"layer {n}: weight shape {p.weights.shape}, expected {expected}")

    def copy(self) -> "Model":
        return Model(self.config, [p.copy() for p in self.layers], self.training, self.version)


def build_model(config: NetworkConfig = NetworkConfig(), seed=0) -> Model:
    rng = np.random.default_rng(seed)
    layers = [gl.init_params(cin, cout, config.kernel_width, config.q_order, rng)
              for cin, cout in config.layer_shapes()]
    return Model(config, layers)


def set_output_prior(model: Model, positive_fraction: float) -> Model:
    """Start the head biases at the log-odds of the expected positive rate.

    With zero biases the untrained net predicts 0.5 everywhere, and on sparse
    targets the quickest way down is to saturate the last tanh layer, which
    can stall training for good. Starting at the base rate avoids that.
    """
    if not 0.0 < positive_fraction < 1.0:
        raise InvalidArgumentError(f"positive fraction must lie in (0, 1), got {positive_fraction}")
    model.layers[-1].biases[:] = math.log(positive_fraction / (1.0 - positive_fraction))
    return model


def count_params(model: Model) -> int:
    return sum(gl.count_params(p) for p in model.layers)


def count_macs(model: Model, length: int) -> list[int]:
    """Per-layer MACs for an input of ``length`` samples."""
    lengths = layer_lengths(model.config, length)
    return [gl.count_macs(p, m) for p, m in zip(model.layers, lengths)]


def layer_lengths(config: NetworkConfig, length: int) -> list[int]:
    out = []
    m = length
    for _ in config.encoder_channels:
        out.append(m)
        m //= config.pool_factor
    if config.bottleneck_channels:
        out.append(m)
    for _ in config.decoder_channels:
        m *= config.pool_factor
        out.append(m)
    out.append(m)
    return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def maxpool(x: np.ndarray, factor: int) -> tuple[np.ndarray, np.ndarray]:
    m = x.shape[-1]
    windows = x.reshape(x.shape[:-1] + (m // factor, factor))
    idx = windows.argmax(axis=-1)  # first index on ties
    return np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0], idx


def maxpool_backward(grad: np.ndarray, idx: np.ndarray, factor: int) -> np.ndarray:
    out = np.zeros(grad.shape + (factor,))
    np.put_along_axis(out, idx[..., None], grad[..., None], axis=-1)
    return out.reshape(grad.shape[:-1] + (grad.shape[-1] * factor,))


def upsample(x: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(x, factor, axis=-1)


def upsample_backward(grad: np.ndarray, factor: int) -> np.ndarray:
    m = grad.shape[-1]
    return grad.reshape(grad.shape[:-1] + (m // factor, factor)).sum(axis=-1)


@dataclass
class ModelCache:
    version: int
    layer_caches: list = field(default_factory=list)
    activations: list = field(default_factory=list)  # tanh outputs of hidden layers
    pool_indices: list = field(default_factory=list)
    prediction: np.ndarray | None = None


def _check_segment(config: NetworkConfig, segment) -> np.ndarray:
    x = np.asarray(segment, dtype=np.float64)
    if x.ndim == 2 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError(f"segment must be a non-empty 1-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("segment contains NaN or Inf")
    if np.max(np.abs(x)) > 1.0 + 1e-9:
        raise InvalidArgumentError("segment is not normalized to [-1, 1]")
    if x.size % config.length_multiple:
        raise InvalidArgumentError(
            f"segment length {x.size} is not divisible by {config.length_multiple}"
        )
    return x


def _concat(u: np.ndarray, skip: np.ndarray) -> np.ndarray:
    lead = np.broadcast_shapes(u.shape[:-2], skip.shape[:-2])
    u = np.broadcast_to(u, lead + u.shape[-2:])
    skip = np.broadcast_to(skip, lead + skip.shape[-2:])
    return np.concatenate([u, skip], axis=-2)


def _graph(config: NetworkConfig, x: np.ndarray, run_layer, cache: "ModelCache | None") -> np.ndarray:
    """Evaluate the encoder/decoder on ``x`` (..., 1, M).

    ``run_layer(index, h)`` returns the pre-activation of generative layer
    ``index``. Every op broadcasts over leading axes.
    """
    h = x
    skips = []
    n = 0
    for _ in config.encoder_channels:
        a = np.tanh(run_layer(n, h))
        n += 1
        skips.append(a)
        h, idx = maxpool(a, config.pool_factor)
        if cache is not None:
            cache.activations.append(a)
            cache.pool_indices.append(idx)
    if config.bottleneck_channels:
        h = np.tanh(run_layer(n, h))
        n += 1
        if cache is not None:
            cache.activations.append(h)
    for s in range(len(config.decoder_channels)):
        u = upsample(h, config.pool_factor)
        if config.skip_connections:
            u = _concat(u, skips[-1 - s])
        h = np.tanh(run_layer(n, u))
        n += 1
        if cache is not None:
            cache.activations.append(h)
    return sigmoid(run_layer(n, h))


def _layer_forward(params: GenerativeLayerParams, x: np.ndarray, impl: str):
    if impl == "vectorized":
        return gl.forward_vectorized(params, x)
    if impl == "naive":
        return gl.forward_naive(params, x), None
    if impl == "conv":
        _require_q1(params)
        return conv1d_forward(params.weights[..., 0], params.biases, x), x
    raise InvalidArgumentError(f"unknown layer implementation {impl!r}")


def _require_q1(params: GenerativeLayerParams) -> None:
    if params.q_order != 1:
        raise InvalidArgumentError("the plain convolution path requires Q = 1")


def _layer_backward(params: GenerativeLayerParams, cache, grad: np.ndarray, impl: str) -> LayerGradients:
    if impl == "conv":
        dk, db, dx = conv1d_backward(params.weights[..., 0], cache, grad)
        return LayerGradients(dk[..., None], db, dx)
    return gl.backward(params, cache, grad)


def model_forward(model: Model, segment, impl: str = "vectorized"):
    """Run the network on one normalized segment.

    ``impl`` selects how generative layers are evaluated: ``"vectorized"``
    (default), ``"naive"`` (reference loops, no cache) or ``"conv"`` (plain
    convolution, Q = 1 only). Returns ``(prediction, cache)``; the cache is
    ``None`` in inference mode or with the naive path. The prediction has
    shape (M,) for a single output channel, else (channels, M).
    """
    x = _check_segment(model.config, segment)
    keep = model.training and impl != "naive"
    cache = ModelCache(version=model.version) if keep else None

    def run(n, h):
        z, c = _layer_forward(model.layers[n], h, impl)
        if cache is not None:
            cache.layer_caches.append(c)
        return z

    pred = _graph(model.config, x[None, :], run, cache)
    if cache is not None:
        cache.prediction = pred
    if model.config.output_channels == 1:
        pred = pred[0]
    return pred, cache


def model_backward(model: Model, cache: ModelCache, d_prediction, impl: str = "vectorized") -> list[LayerGradients]:
    """Back-propagate ``dL/dprediction`` through the graph, one gradient per layer."""
    if cache is None or not isinstance(cache, ModelCache) or cache.prediction is None:
        raise InvalidStateError("model_backward needs the cache of a train-mode forward pass")
    if cache.version != model.version:
        raise InvalidStateError(
            f"cache was built at parameter version {cache.version}, model is at {model.version}"
        )
    cfg = model.config
    p = cache.prediction
    grad = np.asarray(d_prediction, dtype=np.float64).reshape(p.shape) * p * (1.0 - p)

    n_layers = len(model.layers)
    grads: list[LayerGradients | None] = [None] * n_layers
    n_enc = len(cfg.encoder_channels)
    li = n_layers - 1
    act = len(cache.activations) - 1

    def back(g):
        nonlocal li
        lg = _layer_backward(model.layers[li], cache.layer_caches[li], g, impl)
        grads[li] = lg
        li -= 1
        return lg.d_input

    grad = back(grad)
    skip_grads = [np.zeros_like(a) for a in cache.activations[:n_enc]]
    for s in reversed(range(len(cfg.decoder_channels))):
        grad = grad * (1.0 - cache.activations[act] ** 2)
        act -= 1
        grad = back(grad)
        if cfg.skip_connections:
            width = grad.shape[0] - cfg.encoder_channels[-1 - s]
            skip_grads[n_enc - 1 - s] += grad[width:]
            grad = grad[:width]
        grad = upsample_backward(grad, cfg.pool_factor)
    if cfg.bottleneck_channels:
        grad = grad * (1.0 - cache.activations[act] ** 2)
        act -= 1
        grad = back(grad)
    for s in reversed(range(n_enc)):
        grad = maxpool_backward(grad, cache.pool_indices[s], cfg.pool_factor) + skip_grads[s]
        grad = grad * (1.0 - cache.activations[act] ** 2)
        act -= 1
        grad = back(grad)
    return grads


def bce_loss(prediction, target) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the prediction."""
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"prediction shape {p.shape} != target shape {t.shape}")
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = p.size
    loss = -np.mean(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    grad = (pc - t) / (pc * (1.0 - pc) * n)
    return float(loss), grad


def loss_and_gradients(model: Model, segment, target, impl: str = "vectorized"):
    pred, cache = model_forward(model, segment, impl)
    loss, d_pred = bce_loss(pred, target)
    return loss, model_backward(model, cache, d_pred, impl)


# -- optimizers ---------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)  # per layer: (weights moment, biases moment)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise InvalidArgumentError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {self.lr}")


def make_optimizer(model: Model, kind: str = "adam", lr: float = 0.001, **kwargs) -> OptimizerState:
    state = OptimizerState(kind=kind, lr=lr, **kwargs)
    if kind == "adam":
        state.m = [(np.zeros_like(p.weights), np.zeros_like(p.biases)) for p in model.layers]
        state.v = [(np.zeros_like(p.weights), np.zeros_like(p.biases)) for p in model.layers]
    return state


def optimizer_step(state: OptimizerState, model: Model, grads) -> tuple[Model, OptimizerState]:
    """Apply one update in place. ``grads`` holds one LayerGradients per layer."""
    if len(grads) != len(model.layers):
        raise InvalidArgumentError(f"expected {len(model.layers)} layer gradients, got {len(grads)}")
    for p, g in zip(model.layers, grads):
        if g.d_weights.shape != p.weights.shape or g.d_biases.shape != p.biases.shape:
            raise InvalidArgumentError(
                f"gradient shapes {g.d_weights.shape}/{g.d_biases.shape} do not match "
                f"parameters {p.weights.shape}/{p.biases.shape}"
            )
    state.t += 1
    if state.kind == "sgd":
        for p, g in zip(model.layers, grads):
            p.weights -= state.lr * g.d_weights
            p.biases -= state.lr * g.d_biases
    else:
        bc1 = 1.0 - state.beta1 ** state.t
        bc2 = 1.0 - state.beta2 ** state.t
        for p, g, m, v in zip(model.layers, grads, state.m, state.v):
            for param, grad, mom, var in ((p.weights, g.d_weights, m[0], v[0]),
                                          (p.biases, g.d_biases, m[1], v[1])):
                mom *= state.beta1
                mom += (1.0 - state.beta1) * grad
                var *= state.beta2
                var += (1.0 - state.beta2) * grad * grad
                param -= state.lr * (mom / bc1) / (np.sqrt(var / bc2) + state.eps)
    model.version += 1
    return model, state


# -- training -----------------------------------------------------------------


def train(model: Model, dataset, epochs: int = 50, seed=0, batch_size: int = 16,
          optimizer: OptimizerState | None = None, on_epoch=None, impl: str = "vectorized"):
    """Mini-batch training; returns ``(model, per-epoch mean training loss)``.

    Segments are reshuffled every epoch with a seeded generator. Within a
    batch the gradients are summed in segment index order and averaged. ``on_epoch``
    is called as ``on_epoch(epoch, model, loss)`` after each epoch.
    """
    dataset = list(dataset)
    if not dataset:
        raise InvalidArgumentError("training set is empty")
    if batch_size < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {batch_size}")
    if optimizer is None:
        optimizer = make_optimizer(model)
    rng = np.random.default_rng(seed)
    model.training = True
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = np.sort(order[start : start + batch_size])
            acc = None
            for j in batch:
                segment, target = dataset[j]
                loss, grads = loss_and_gradients(model, segment, target, impl)
                total += loss
                if acc is None:
                    acc = grads
                else:
                    for a, g in zip(acc, grads):
                        a.d_weights += g.d_weights
                        a.d_biases += g.d_biases
            for a in acc:
                a.d_weights /= len(batch)
                a.d_biases /= len(batch)
            optimizer_step(optimizer, model, acc)
        trace.append(total / len(dataset))
        if on_epoch is not None:
            on_epoch(epoch, model, trace[-1])
    return model, trace


def predict(model: Model, segment) -> np.ndarray:
    was_training = model.training
    model.training = False
    try:
        return model_forward(model, segment)[0]
    finally:
        model.training = was_training


# -- gradient check -----------------------------------------------------------


@dataclass
class GradcheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int
    worst: tuple  # (layer, "weights" | "biases", index)
    tol: float


def _softplus_diff(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``log(1 + e**a) - log(1 + e**(a - delta))`` accurate for tiny ``delta``."""
    return np.log1p(sigmoid(a - delta) * np.expm1(delta))


def _loss_differences(model: Model, x: np.ndarray, target: np.ndarray, li: int,
                      w_plus: np.ndarray, b_plus: np.ndarray,
                      w_delta: np.ndarray, b_delta: np.ndarray) -> np.ndarray:
    """``L(plus) - L(minus)`` for a batch of perturbations of layer ``li``.

    Every activation downstream of the perturbed layer is carried as its
    plus-side value together with the exact plus-minus difference, and each op
    propagates the difference through an identity free of cancellation. The
    central difference of a tiny gradient therefore keeps full precision
    instead of drowning in the rounding error of two nearly equal losses.
    Layers are evaluated as convolutions over input powers, which shares no
    code with the unrolled path whose gradients are checked. The BCE clamp
    is not applied; predictions of a freshly built model never reach it.
    """
    cfg = model.config

    def layer(n, h, d):
        p = model.layers[n]
        if n == li:
            return forward_qconv(w_plus, b_plus, h), forward_qconv(w_delta, b_delta, h)
        z = forward_qconv(p.weights, p.biases, h)
        return z, None if d is None else qconv_difference(p.weights, h, d)

    def tanh(z, dz):
        a = np.tanh(z)
        if dz is None:
            return a, None
        return a, np.tanh(dz) * (1.0 - a * np.tanh(z - dz))

    def pool(h, d):
        hp, ip = maxpool(h, cfg.pool_factor)
        if d is None:
            return hp, None
        hm, im = maxpool(h - d, cfg.pool_factor)
        dw = d.reshape(d.shape[:-1] + (-1, cfg.pool_factor))
        same = np.take_along_axis(dw, ip[..., None], axis=-1)[..., 0]
        return hp, np.where(ip == im, same, hp - hm)

    def concat(u, du, s, ds):
        h = _concat(u, s)
        if du is None and ds is None:
            return h, None
        du = np.zeros_like(u) if du is None else du
        ds = np.zeros_like(s) if ds is None else ds
        return h, _concat(du, ds)

    h, d = x, None
    skips = []
    n = 0
    for _ in cfg.encoder_channels:
        a, da = tanh(*layer(n, h, d))
        n += 1
        skips.append((a, da))
        h, d = pool(a, da)
    if cfg.bottleneck_channels:
        h, d = tanh(*layer(n, h, d))
        n += 1
    for s in range(len(cfg.decoder_channels)):
        u = upsample(h, cfg.pool_factor)
        du = None if d is None else upsample(d, cfg.pool_factor)
        if cfg.skip_connections:
            u, du = concat(u, du, *skips[-1 - s])
        h, d = tanh(*layer(n, u, du))
        n += 1
    z, dz = layer(n, h, d)
    # BCE with p = sigmoid(z): t * softplus(-z) + (1 - t) * softplus(z)
    t = target.reshape(z.shape[-2:]) if cfg.output_channels > 1 else target[None, :]
    per_sample = t * _softplus_diff(-z, -dz) + (1.0 - t) * _softplus_diff(z, dz)
    return per_sample.reshape(per_sample.shape[:-2] + (-1,)).mean(axis=-1)


def gradcheck(model: Model, segment, target, h: float = 1e-5, tol: float = 1e-4,
              fault_inject: str | None = None, impl: str = "vectorized",
              max_batch_floats: int = 4_000_000) -> GradcheckReport:
    """Compare analytic gradients of the BCE loss with central differences.

    Every weight and bias is perturbed by +-h; perturbations of one layer
    are evaluated together as a batch. ``impl`` selects the analytic path
    under test.
    The relative error of an entry is ``|a - fd| / max(|a|, |fd|, 1e-8)``.
    ``fault_inject="weight-grad"`` scales the analytic weight gradients by 1.01
    so the check must fail.
    """
    if impl not in ("vectorized", "conv"):
        raise InvalidArgumentError(f"gradcheck supports the vectorized and conv paths, not {impl!r}")
    model = model.copy()
    model.training = True
    x = _check_segment(model.config, segment)
    target = np.asarray(target, dtype=np.float64)
    _, grads = loss_and_gradients(model, x, target, impl)
    if fault_inject == "weight-grad":
        for g in grads:
            g.d_weights = g.d_weights * 1.01
    elif fault_inject is not None:
        raise InvalidArgumentError(f"unknown fault injection mode {fault_inject!r}")

    widest = max(w * m for (w, _), m in zip(model.config.layer_shapes(),
                                             layer_lengths(model.config, x.size)))
    per_item = widest * (model.config.q_order + model.config.kernel_width) + 1
    chunk = max(1, max_batch_floats // per_item // 2)

    worst_err, worst, n = -1.0, None, 0
    for li, (p, g) in enumerate(zip(model.layers, grads)):
        n_w = p.weights.size
        analytic = np.concatenate([g.d_weights.reshape(-1), g.d_biases.reshape(-1)])
        for start in range(0, analytic.size, chunk):
            idx = np.arange(start, min(start + chunk, analytic.size))
            rows = np.arange(idx.size)
            flat = np.tile(np.concatenate([p.weights.reshape(-1), p.biases]), (idx.size, 1))
            flat[rows, idx] += h
            delta = np.zeros_like(flat)
            delta[rows, idx] = 2.0 * h
            diff = _loss_differences(model, x[None, :], target, li,
                                     flat[:, :n_w].reshape((-1,) + p.weights.shape), flat[:, n_w:],
                                     delta[:, :n_w].reshape((-1,) + p.weights.shape), delta[:, n_w:])
            fd = diff / (2.0 * h)
            a = analytic[idx]
            err = np.abs(a - fd) / np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)
            n += idx.size
            j = int(np.argmax(err))
            if err[j] > worst_err:
                worst_err = float(err[j])
                k = int(idx[j])
                worst = (li, "weights", np.unravel_index(k, p.weights.shape)) if k < n_w else (li, "biases", k - n_w)
    return GradcheckReport(worst_err, worst_err <= tol, n, worst, tol)
