"""Small convolutional encoder trained from scratch in float64 numpy.

Maps a rendered scene image to a per-cell probability of lying on the
shortest-path region. All convolutions are 3x3, stride 1, same padding.
Training, gradients, and initialization are deterministic per seed; batch
reductions use numpy's deterministic summation so repeated runs are
bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DivergenceDetected, IncompatibleArchitecture, IoFailure, ShapeMismatch

RELU = "relu"
LOGISTIC = "logistic"

UNIFORM = "uniform"
GAUSSIAN = "gaussian"

SGD = "sgd"
ADAM = "adam"

KERNEL = 3
PROB_EPS = 1e-7

CHECKPOINT_MAGIC = b"PPE1"
CHECKPOINT_VERSION = 1
_ACTIVATION_CODES = {RELU: 0, LOGISTIC: 1}
_ACTIVATION_NAMES = {code: name for name, code in _ACTIVATION_CODES.items()}


@dataclass(frozen=True)
class ConvLayer:
    in_ch: int
    out_ch: int
    activation: str


def default_arch() -> tuple[ConvLayer, ...]:
    return (
        ConvLayer(3, 16, RELU),
        ConvLayer(16, 16, RELU),
        ConvLayer(16, 16, RELU),
        ConvLayer(16, 1, LOGISTIC),
    )


@dataclass
class EncoderModel:
    layers: tuple[ConvLayer, ...]
    weights: list[np.ndarray]  # per layer (out_ch, in_ch, 3, 3) float64
    biases: list[np.ndarray]  # per layer (out_ch,) float64
    init_seed: int
    version: int = CHECKPOINT_VERSION

    def param_count(self) -> int:
        return sum(l.in_ch * l.out_ch * KERNEL * KERNEL + l.out_ch for l in self.layers)

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            self.layers,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.init_seed,
            self.version,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 2e-3
    optimizer: str = ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weighting: str = UNIFORM
    sigma: float = 1.0
    seed: int = 0
    # Optional early stop: end training once an epoch's mean loss drops below
    # this value. None trains for the full epoch count, and only then is the
    # history guaranteed to have exactly `epochs` entries.
    stop_loss: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in (SGD, ADAM):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.weighting not in (UNIFORM, GAUSSIAN):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.weighting == GAUSSIAN and self.sigma <= 0:
            raise ValueError("sigma must be > 0 for gaussian weighting")


def validate_arch(layers: Sequence[ConvLayer]) -> tuple[ConvLayer, ...]:
    layers = tuple(layers)
    if not layers:
        raise IncompatibleArchitecture("architecture must have at least one layer")
    for prev, cur in zip(layers, layers[1:]):
        if prev.out_ch != cur.in_ch:
            raise IncompatibleArchitecture(
                f"layer chain breaks: {prev.out_ch} out channels feed {cur.in_ch} in channels"
            )
    for layer in layers:
        if layer.in_ch < 1 or layer.out_ch < 1:
            raise IncompatibleArchitecture("channel counts must be positive")
        if layer.activation not in _ACTIVATION_CODES:
            raise IncompatibleArchitecture(f"unknown activation {layer.activation!r}")
    head = layers[-1]
    if head.out_ch != 1 or head.activation != LOGISTIC:
        raise IncompatibleArchitecture("head layer must output 1 channel through logistic")
    return layers


def init_model(arch: Sequence[ConvLayer] | None = None, seed: int = 0) -> EncoderModel:
    """He-scaled random weights, zero biases, deterministic per seed."""
    layers = validate_arch(arch if arch is not None else default_arch())
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in layers:
        fan_in = layer.in_ch * KERNEL * KERNEL
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(layer.out_ch, layer.in_ch, KERNEL, KERNEL)))
        biases.append(np.zeros(layer.out_ch, dtype=np.float64))
    return EncoderModel(layers, weights, biases, seed)


def image_to_input(image: np.ndarray) -> np.ndarray:
    """Rendered (H, W, 3) uint8 image to the normalized (3, H, W) float64 input."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got {image.shape}")
    return image.astype(np.float64).transpose(2, 0, 1) / 255.0


# ------------------------------ forward -------------------------------- #


def _pad_rows(x: np.ndarray) -> np.ndarray:
    """Zero-pad (B, C, H, W) into a flat (B, C, (H+3)*(W+2)) buffer.

    The image sits at rows 1..H, cols 1..W of the implied (H+3, W+2) grid, so
    every 3x3 window offset becomes a contiguous-stride slice of the flat
    buffer and feeds BLAS without an im2col copy. The extra row keeps the
    largest window offset in bounds.
    """
    b, c, h, w = x.shape
    wp = w + 2
    flat = np.zeros((b, c, (h + 3) * wp), dtype=np.float64)
    grid = flat[:, :, : (h + 2) * wp].reshape(b, c, h + 2, wp)
    grid[:, :, 1 : h + 1, 1 : w + 1] = x
    return flat


def _kernel_slices(wt: np.ndarray) -> list[np.ndarray]:
    # Contiguous (out, in) copies per kernel offset; strided slices would push
    # matmul off the BLAS fast path.
    return [np.ascontiguousarray(wt[:, :, di, dj]) for di in range(3) for dj in range(3)]


def _conv_forward(x: np.ndarray, wt: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 same-padding convolution as nine shifted matrix products."""
    b, _, h, w = x.shape
    o = wt.shape[0]
    wp = w + 2
    span = h * wp
    flat = _pad_rows(x)
    z = np.zeros((b, o, span), dtype=np.float64)
    tmp = np.empty_like(z)
    for k, wk in enumerate(_kernel_slices(wt)):
        off = (k // 3) * wp + k % 3
        np.matmul(wk, flat[:, :, off : off + span], out=tmp)
        z += tmp
    z = z.reshape(b, o, h, wp)[:, :, :, :w]
    return z + bias[None, :, None, None]


def _conv_backward(dz: np.ndarray, x: np.ndarray, wt: np.ndarray, need_dx: bool):
    """Gradients of _conv_forward: (dW, db, dx); dx is None when not needed."""
    b, o, h, w = dz.shape
    wp = w + 2
    span = h * wp
    # Output grid widened back to wp columns; the two spare columns stay zero
    # so they contribute nothing to the products below.
    dz_wide = np.zeros((b, o, h, wp), dtype=np.float64)
    dz_wide[:, :, :, :w] = dz
    dz_wide = dz_wide.reshape(b, o, span)
    flat = _pad_rows(x)
    dw = np.empty_like(wt)
    for di in range(3):
        for dj in range(3):
            off = di * wp + dj
            window = flat[:, :, off : off + span]
            dw[:, :, di, dj] = np.matmul(dz_wide, window.transpose(0, 2, 1)).sum(axis=0)
    db = dz.sum(axis=(0, 2, 3))
    if not need_dx:
        return dw, db, None
    dflat = np.zeros_like(flat)
    for k, wk in enumerate(_kernel_slices(wt)):
        off = (k // 3) * wp + k % 3
        dflat[:, :, off : off + span] += np.matmul(wk.T, dz_wide)
    c = wt.shape[1]
    dx = dflat[:, :, : (h + 2) * wp].reshape(b, c, h + 2, wp)[:, :, 1 : h + 1, 1 : w + 1]
    return dw, db, dx


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never overflows.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_batch(model: EncoderModel, x: np.ndarray, keep_cache: bool = False):
    """Run the stack on (B, 3, H, W); returns clipped (B, H, W) probabilities.

    The logistic head is clamped into [PROB_EPS, 1 - PROB_EPS]; the cache
    marks where clamping was inactive so gradients stay consistent with the
    clamped forward value.
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (B, C, H, W) input, got shape {x.shape}")
    if x.shape[1] != model.layers[0].in_ch:
        raise ShapeMismatch(
            f"input has {x.shape[1]} channels, model expects {model.layers[0].in_ch}"
        )
    a = x.astype(np.float64, copy=False)
    cache = []
    for layer, wt, bias in zip(model.layers, model.weights, model.biases):
        z = _conv_forward(a, wt, bias)
        if layer.activation == RELU:
            out = np.maximum(z, 0.0)
        else:
            out = _sigmoid(z)
        if keep_cache:
            cache.append((a, z))
        a = out
    probs = np.clip(a[:, 0], PROB_EPS, 1.0 - PROB_EPS)
    if keep_cache:
        interior = (a[:, 0] > PROB_EPS) & (a[:, 0] < 1.0 - PROB_EPS)
        return probs, cache, interior
    return probs


def forward(model: EncoderModel, x: np.ndarray) -> np.ndarray:
    """Single-sample inference: normalized (3, H, W) input to (H, W) probabilities."""
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (C, H, W) input, got shape {x.shape}")
    return _forward_batch(model, x[None])[0]


# -------------------------------- loss --------------------------------- #


def weight_map(label_mask: np.ndarray, weighting: str = UNIFORM, sigma: float = 1.0) -> np.ndarray:
    """Per-cell loss weights. Gaussian mode decays with the Manhattan distance
    to the nearest label cell: w = exp(-d^2 / (2 sigma^2))."""
    mask = np.asarray(label_mask) > 0
    if weighting == UNIFORM:
        return np.ones(mask.shape, dtype=np.float64)
    if weighting != GAUSSIAN:
        raise ValueError(f"unknown weighting {weighting!r}")
    if not mask.any():
        raise ValueError("label mask has no cells; gaussian weighting undefined")
    dist = ndimage.distance_transform_cdt(~mask, metric="taxicab").astype(np.float64)
    return np.exp(-(dist**2) / (2.0 * sigma * sigma))


def loss(
    pred: np.ndarray,
    label_mask: np.ndarray,
    weighting: str = UNIFORM,
    sigma: float = 1.0,
) -> float:
    """Mean weighted binary cross-entropy over all cells."""
    pred = np.asarray(pred, dtype=np.float64)
    y = (np.asarray(label_mask) > 0).astype(np.float64)
    if pred.shape != y.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs label {y.shape}")
    w = weight_map(y, weighting, sigma)
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    bce = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(np.mean(w * bce))


def _batch_loss_and_head_grad(probs, interior, labels, weights):
    """Loss of the batch mean and its gradient at the head pre-activation."""
    b = probs.shape[0]
    n = probs.shape[1] * probs.shape[2]
    y = labels.astype(np.float64)
    bce = -(y * np.log(probs) + (1.0 - y) * np.log(1.0 - probs))
    total = float(np.sum(weights * bce) / (b * n))
    # d(bce)/dz = p - y through the logistic; zero where the clamp is active.
    dz_head = weights * (probs - y) * interior / (b * n)
    return total, dz_head


def backward(
    model: EncoderModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    weighting: str = UNIFORM,
    sigma: float = 1.0,
    weights_maps: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Gradients of the batch-mean loss for every parameter.

    Returns (loss, weight gradients, bias gradients) with gradient shapes
    matching the model tensors.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    if inputs.ndim != 4 or labels.ndim != 3 or inputs.shape[0] != labels.shape[0]:
        raise ShapeMismatch("backward expects (B, C, H, W) inputs and (B, H, W) labels")
    if inputs.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if inputs.shape[2:] != labels.shape[1:]:
        raise ShapeMismatch(f"inputs {inputs.shape} vs labels {labels.shape}")
    b, _, h, w = inputs.shape
    if weights_maps is None:
        weights_maps = np.stack([weight_map(labels[i], weighting, sigma) for i in range(b)])

    probs, cache, interior = _forward_batch(model, inputs, keep_cache=True)
    total, dz = _batch_loss_and_head_grad(probs, interior, labels, weights_maps)
    dz = dz[:, None]  # (B, 1, H, W), head pre-activation gradient

    grads_w = [np.empty(0)] * len(model.layers)
    grads_b = [np.empty(0)] * len(model.layers)
    for idx in range(len(model.layers) - 1, -1, -1):
        a_prev, _ = cache[idx]
        dw, db_, da = _conv_backward(dz, a_prev, model.weights[idx], need_dx=idx > 0)
        grads_w[idx] = dw
        grads_b[idx] = db_
        if idx > 0:
            z_prev = cache[idx - 1][1]
            dz = da * (z_prev > 0)  # previous layers are ReLU
    return total, grads_w, grads_b


# ------------------------------ training ------------------------------- #


class _Adam:
    def __init__(self, model, cfg):
        self.cfg = cfg
        self.m_w = [np.zeros_like(w) for w in model.weights]
        self.v_w = [np.zeros_like(w) for w in model.weights]
        self.m_b = [np.zeros_like(b) for b in model.biases]
        self.v_b = [np.zeros_like(b) for b in model.biases]
        self.t = 0

    def step(self, model, grads_w, grads_b):
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for i in range(len(model.weights)):
            for param, grad, m, v in (
                (model.weights[i], grads_w[i], self.m_w[i], self.v_w[i]),
                (model.biases[i], grads_b[i], self.m_b[i], self.v_b[i]),
            ):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * grad
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * grad * grad
                param -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


class _Sgd:
    def __init__(self, model, cfg):
        self.cfg = cfg

    def step(self, model, grads_w, grads_b):
        for i in range(len(model.weights)):
            model.weights[i] -= self.cfg.learning_rate * grads_w[i]
            model.biases[i] -= self.cfg.learning_rate * grads_b[i]


def train(
    model: EncoderModel,
    samples: Sequence[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig,
) -> tuple[EncoderModel, list[float]]:
    """Mini-batch training; returns a new model and the per-epoch mean loss.

    Deterministic given the initial model, the sample order, and cfg.seed.
    Raises DivergenceDetected if any batch loss becomes non-finite.
    """
    if not samples:
        raise ValueError("dataset must be non-empty")
    model = model.copy()
    inputs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in samples])
    labels = np.stack([(np.asarray(y) > 0).astype(np.float64) for _, y in samples])
    wmaps = np.stack([weight_map(labels[i], cfg.weighting, cfg.sigma) for i in range(len(samples))])

    optimizer = _Adam(model, cfg) if cfg.optimizer == ADAM else _Sgd(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = len(samples)
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch_loss, gw, gb = backward(
                model, inputs[idx], labels[idx], weights_maps=wmaps[idx]
            )
            if not np.isfinite(batch_loss):
                raise DivergenceDetected(f"batch loss became {batch_loss}")
            optimizer.step(model, gw, gb)
            epoch_sum += batch_loss * len(idx)
        history.append(epoch_sum / n)
        if cfg.stop_loss is not None and history[-1] < cfg.stop_loss:
            break
    return model, history


# ----------------------------- grad check ------------------------------ #


def grad_check(
    model: EncoderModel,
    x: np.ndarray,
    label_mask: np.ndarray,
    h: float = 1e-5,
    weighting: str = UNIFORM,
    sigma: float = 1.0,
    samples_per_tensor: int = 6,
    seed: int = 0,
) -> float:
    """Max relative error between analytic gradients and central differences
    over a seeded sample of parameter coordinates."""
    x = np.asarray(x, dtype=np.float64)[None]
    y = (np.asarray(label_mask) > 0).astype(np.float64)[None]
    wmaps = np.stack([weight_map(y[0], weighting, sigma)])
    _, grads_w, grads_b = backward(model, x, y, weights_maps=wmaps)

    def loss_at() -> float:
        probs = _forward_batch(model, x)
        yb = y
        bce = -(yb * np.log(probs) + (1.0 - yb) * np.log(1.0 - probs))
        return float(np.sum(wmaps * bce) / probs[0].size)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensors, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for tensor, grad in zip(tensors, grads):
            flat = tensor.reshape(-1)
            count = min(samples_per_tensor, flat.size)
            coords = rng.choice(flat.size, size=count, replace=False)
            for coord in coords:
                keep = flat[coord]
                flat[coord] = keep + h
                up = loss_at()
                flat[coord] = keep - h
                down = loss_at()
                flat[coord] = keep
                numeric = (up - down) / (2.0 * h)
                analytic = grad.reshape(-1)[coord]
                denom = max(abs(analytic), abs(numeric), 1e-12)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ----------------------------- checkpoints ------------------------------ #


def save_model(model: EncoderModel, path: str | Path) -> None:
    """Binary checkpoint: magic "PPE1", version, seed, layer table, then
    per-layer float64 little-endian weight and bias tensors."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", model.version)]
    parts.append(struct.pack("<Q", model.init_seed))
    parts.append(struct.pack("<I", len(model.layers)))
    for layer in model.layers:
        parts.append(
            struct.pack(
                "<IIII", layer.in_ch, layer.out_ch, KERNEL, _ACTIVATION_CODES[layer.activation]
            )
        )
    for wt, bias in zip(model.weights, model.biases):
        parts.append(wt.astype("<f8").tobytes())
        parts.append(bias.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> EncoderModel:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise IoFailure(f"{path}: bad checkpoint magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise IoFailure(f"{path}: unsupported checkpoint version {version}")
    (init_seed,) = struct.unpack_from("<Q", data, 8)
    (n_layers,) = struct.unpack_from("<I", data, 16)
    offset = 20
    layers = []
    for _ in range(n_layers):
        in_ch, out_ch, kernel, act = struct.unpack_from("<IIII", data, offset)
        offset += 16
        if kernel != KERNEL or act not in _ACTIVATION_NAMES:
            raise IoFailure(f"{path}: unsupported layer descriptor")
        layers.append(ConvLayer(in_ch, out_ch, _ACTIVATION_NAMES[act]))
    weights, biases = [], []
    for layer in layers:
        w_count = layer.out_ch * layer.in_ch * KERNEL * KERNEL
        wt = np.frombuffer(data, dtype="<f8", count=w_count, offset=offset)
        offset += w_count * 8
        bias = np.frombuffer(data, dtype="<f8", count=layer.out_ch, offset=offset)
        offset += layer.out_ch * 8
        weights.append(wt.reshape(layer.out_ch, layer.in_ch, KERNEL, KERNEL).copy())
        biases.append(bias.copy())
    if offset != len(data):
        raise IoFailure(f"{path}: {len(data) - offset} trailing bytes")
    model = EncoderModel(tuple(layers), weights, biases, init_seed, version)
    validate_arch(model.layers)
    return model
