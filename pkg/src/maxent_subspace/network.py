"""Convolutional autoencoder with hand-written backpropagation.

Layout
------
Images are ``(n, channels, height, width)`` float64 arrays. The encoder is
a stack of stride-2 convolutions with ReLU; the decoder mirrors it with
stride-2 transposed convolutions, ReLU on every layer but the last. A latent
tensor of shape ``(n, c, h, w)`` becomes the feature matrix ``Z`` of shape
``(c*h*w, n)``: one column per sample, flattened channel first, then row,
then column.

Padding is "same"-style: a stride-2 layer maps size ``H`` to ``ceil(H/2)``
with ``total = max((out-1)*2 + k - H, 0)`` rows of zero padding, ``total//2``
before and the rest after. Each transposed convolution is the exact adjoint
of the convolution with that geometry, so the decoder restores the input
shape.

Two training modes share one loss,

    1/2 ||X - X_r||_F^2 + lambda1 R(C) + lambda2 ||Z - Z C||_F^2

* ``decoupled``: ``X_r = decode(encode(X))``; C only sees the
  self-expressive and penalty terms.
* ``coupled``: ``X_r = decode(reshape(Z C))``; the reconstruction runs
  through the self-expressive layer as in the classic deep subspace
  clustering network.
"""

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .affinity import (
    FROBENIUS,
    MAX_ENTROPY,
    SolverConfig,
    canonical_kind,
    project,
    regularizer_value,
    uniform_affinity,
)
from .errors import DimensionError, DivergenceError, FormatError, MalformedHeaderError, PayloadLengthError
from .numerics import AdamState, adam_step, he_normal_init, make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "LayerSpec",
    "LossComponents",
    "NetworkParams",
    "NetworkSpec",
    "TABLE_SPECS",
    "TrainConfig",
    "TrainHistory",
    "build_network",
    "decode",
    "encode",
    "fit",
    "latent_to_features",
    "load_checkpoint",
    "loss_and_grads",
    "pretrain",
    "save_checkpoint",
    "table_spec",
    "train_joint",
]

STRIDE = 2
CHECKPOINT_MAGIC = b"MESCNET1"

DECOUPLED = "decoupled"
COUPLED = "coupled"

# name -> (input height, input width, kernel sizes, encoder channels)
TABLE_SPECS = {
    "toy": (32, 32, (3,), (15,)),
    "orl": (32, 32, (3, 3, 3), (3, 3, 5)),
    "coil20": (32, 32, (3,), (15,)),
    "coil40": (32, 32, (3,), (20,)),
    "coil100": (32, 32, (5,), (50,)),
    "eyaleb": (48, 42, (5, 3, 3), (10, 20, 30)),
    "usps": (16, 16, (5, 3, 3), (10, 20, 30)),
    "mnist": (28, 28, (5, 3, 3), (10, 20, 30)),
}


@dataclass(frozen=True)
class LayerSpec:
    kernel: tuple
    in_channels: int
    out_channels: int
    stride: int = STRIDE
    relu: bool = True
    transposed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if len(self.kernel) != 2 or min(self.kernel) < 1:
            raise ValueError(f"kernel must be two positive sizes, got {self.kernel}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.stride != STRIDE:
            raise ValueError(f"only stride {STRIDE} is supported")

    @property
    def fan_in(self):
        return self.kernel[0] * self.kernel[1] * self.in_channels

    @property
    def kernel_shape(self):
        # conv: (out, in, kh, kw); transposed: (in, out, kh, kw)
        kh, kw = self.kernel
        if self.transposed:
            return (self.in_channels, self.out_channels, kh, kw)
        return (self.out_channels, self.in_channels, kh, kw)


def _down(size):
    return -(-size // STRIDE)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    encoder: tuple
    decoder: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "encoder", tuple(self.encoder))
        object.__setattr__(self, "decoder", tuple(self.decoder))
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ValueError(f"input_shape must be (height, width), got {self.input_shape}")
        if not self.encoder or len(self.encoder) != len(self.decoder):
            raise ValueError("encoder and decoder need the same, nonzero number of layers")
        if any(l.transposed for l in self.encoder) or not all(l.transposed for l in self.decoder):
            raise ValueError("encoder layers are convolutions, decoder layers transposed convolutions")
        if self.encoder[0].in_channels != 1:
            raise ValueError("the first encoder layer must take one input channel")
        chain = list(self.encoder) + list(self.decoder)
        for a, b in zip(chain, chain[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"channel mismatch between layers: {a.out_channels} -> {b.in_channels}")
        if self.decoder[-1].out_channels != 1:
            raise ValueError("the last decoder layer must output one channel")

    @classmethod
    def mirrored(cls, input_shape, kernels, channels):
        """Encoder with the given kernels/channels and its mirror-image decoder."""
        kernels = [(k, k) if np.isscalar(k) else tuple(k) for k in kernels]
        if len(kernels) != len(channels):
            raise ValueError("kernels and channels must have equal length")
        ins = [1] + list(channels[:-1])
        enc = [LayerSpec(k, i, o) for k, i, o in zip(kernels, ins, channels)]
        dec_in = list(reversed(channels))
        dec_out = dec_in[1:] + [1]
        dec_k = list(reversed(kernels))
        dec = [
            LayerSpec(k, i, o, relu=(j < len(dec_k) - 1), transposed=True)
            for j, (k, i, o) in enumerate(zip(dec_k, dec_in, dec_out))
        ]
        return cls(input_shape, enc, dec)

    @property
    def layers(self):
        return self.encoder + self.decoder

    def spatial_shapes(self):
        """Spatial sizes at each encoder level, input first."""
        shapes = [self.input_shape]
        for _ in self.encoder:
            h, w = shapes[-1]
            shapes.append((_down(h), _down(w)))
        return shapes

    @property
    def latent_shape(self):
        h, w = self.spatial_shapes()[-1]
        return (self.encoder[-1].out_channels, h, w)

    @property
    def latent_dim(self):
        return int(np.prod(self.latent_shape))


def table_spec(name, input_shape=None):
    """Network layout for one of the per-dataset architectures in TABLE_SPECS."""
    h, w, kernels, channels = TABLE_SPECS[name.lower()]
    return NetworkSpec.mirrored(input_shape or (h, w), kernels, channels)


@dataclass
class NetworkParams:
    spec: NetworkSpec
    kernels: list
    biases: list

    def names(self):
        out = []
        for i, layer in enumerate(self.spec.layers):
            out += [f"layer{i}.kernel", f"layer{i}.bias"]
        return out

    def tensors(self):
        out = {}
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out[f"layer{i}.kernel"] = k
            out[f"layer{i}.bias"] = b
        return out

    @classmethod
    def from_tensors(cls, spec, tensors):
        L = len(spec.layers)
        return cls(
            spec,
            [tensors[f"layer{i}.kernel"] for i in range(L)],
            [tensors[f"layer{i}.bias"] for i in range(L)],
        )

    def copy(self):
        return NetworkParams(self.spec, [k.copy() for k in self.kernels], [b.copy() for b in self.biases])


def build_network(spec, seed=0):
    """He-normal kernels (fan_in = kh*kw*in_channels) and zero biases."""
    rng = make_rng(seed)
    kernels, biases = [], []
    for layer in spec.layers:
        kernels.append(he_normal_init(layer.kernel_shape, layer.fan_in, rng))
        biases.append(np.zeros(layer.out_channels))
    return NetworkParams(spec, kernels, biases)


# -- convolution kernels -----------------------------------------------------


def _same_pads(size, k):
    out = _down(size)
    total = max((out - 1) * STRIDE + k - size, 0)
    return total // 2, total - total // 2


def _pad(x, ph, pw):
    return np.pad(x, ((0, 0), (0, 0), ph, pw))


def _im2col(xp, kh, kw, ho, wo):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::STRIDE, ::STRIDE][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(cols, n, c, hp, wp, kh, kw, ho, wo):
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + STRIDE * (ho - 1) + 1:STRIDE, j:j + STRIDE * (wo - 1) + 1:STRIDE] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return out


def _crop(xp, ph, pw, h, w):
    return xp[:, :, ph[0]:ph[0] + h, pw[0]:pw[0] + w]


def conv2d(x, kernel, bias):
    """Stride-2 "same" convolution. Returns output and a backward cache."""
    n, c, h, w = x.shape
    o, c2, kh, kw = kernel.shape
    if c != c2:
        raise DimensionError(f"conv expects {c2} input channels, got {c}")
    ph, pw = _same_pads(h, kh), _same_pads(w, kw)
    ho, wo = _down(h), _down(w)
    cols = _im2col(_pad(x, ph, pw), kh, kw, ho, wo)
    y = cols @ kernel.reshape(o, -1).T
    y = y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2) + bias[None, :, None, None]
    return y, (x.shape, cols, ph, pw)


def conv2d_backward(dy, kernel, cache):
    (n, c, h, w), cols, ph, pw = cache
    o, _, kh, kw = kernel.shape
    ho, wo = dy.shape[2:]
    dmat = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dk = (dmat.T @ cols).reshape(kernel.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = dmat @ kernel.reshape(o, -1)
    dxp = _col2im(dcols, n, c, h + sum(ph), w + sum(pw), kh, kw, ho, wo)
    return _crop(dxp, ph, pw, h, w), dk, db


def conv2d_transpose(x, kernel, bias, out_hw):
    """Adjoint of :func:`conv2d` mapping ``ceil(H/2)`` back to ``H``."""
    n, c, h, w = x.shape
    c2, o, kh, kw = kernel.shape
    H, W = out_hw
    if c != c2:
        raise DimensionError(f"transposed conv expects {c2} input channels, got {c}")
    if (h, w) != (_down(H), _down(W)):
        raise DimensionError(f"input {h}x{w} cannot be upsampled to {H}x{W}")
    ph, pw = _same_pads(H, kh), _same_pads(W, kw)
    xmat = x.transpose(0, 2, 3, 1).reshape(-1, c)
    cols = xmat @ kernel.reshape(c, -1)
    yp = _col2im(cols, n, o, H + sum(ph), W + sum(pw), kh, kw, h, w)
    y = _crop(yp, ph, pw, H, W) + bias[None, :, None, None]
    return y, (xmat, x.shape, ph, pw)


def conv2d_transpose_backward(dy, kernel, cache):
    xmat, (n, c, h, w), ph, pw = cache
    _, o, kh, kw = kernel.shape
    cols = _im2col(_pad(dy, ph, pw), kh, kw, h, w)
    dx = (cols @ kernel.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    dk = (xmat.T @ cols).reshape(kernel.shape)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dk, db


# -- forward / backward through the stacks ------------------------------------


def _check_images(X, spec):
    X = np.asarray(X, dtype=np.float64)
    want = (1,) + spec.input_shape
    if X.ndim != 4 or X.shape[1:] != want:
        raise DimensionError(f"expected images of shape (n, {want[0]}, {want[1]}, {want[2]}), got {X.shape}")
    return X


def _encode(X, params):
    caches = []
    h = X
    spec = params.spec
    for i, layer in enumerate(spec.encoder):
        z, cache = conv2d(h, params.kernels[i], params.biases[i])
        h = np.maximum(z, 0.0) if layer.relu else z
        caches.append((cache, z if layer.relu else None))
    return h, caches


def _encode_backward(dh, params, caches):
    grads = {}
    for i in reversed(range(len(params.spec.encoder))):
        cache, z = caches[i]
        if z is not None:
            dh = dh * (z > 0)
        dh, dk, db = conv2d_backward(dh, params.kernels[i], cache)
        grads[f"layer{i}.kernel"], grads[f"layer{i}.bias"] = dk, db
    return grads


def _decode(latent, params):
    spec = params.spec
    shapes = spec.spatial_shapes()
    L = len(spec.encoder)
    caches = []
    h = latent
    for j, layer in enumerate(spec.decoder):
        idx = L + j
        z, cache = conv2d_transpose(h, params.kernels[idx], params.biases[idx], shapes[L - j - 1])
        h = np.maximum(z, 0.0) if layer.relu else z
        caches.append((cache, z if layer.relu else None))
    return h, caches


def _decode_backward(dy, params, caches):
    grads = {}
    L = len(params.spec.encoder)
    for j in reversed(range(len(params.spec.decoder))):
        cache, z = caches[j]
        if z is not None:
            dy = dy * (z > 0)
        idx = L + j
        dy, dk, db = conv2d_transpose_backward(dy, params.kernels[idx], cache)
        grads[f"layer{idx}.kernel"], grads[f"layer{idx}.bias"] = dk, db
    return dy, grads


def latent_to_features(latent):
    """(n, c, h, w) latent tensor -> (c*h*w, n) feature matrix."""
    return latent.reshape(latent.shape[0], -1).T


def encode(X, params):
    """Return ``(latent, Z)`` for a batch of images."""
    X = _check_images(X, params.spec)
    latent, _ = _encode(X, params)
    return latent, latent_to_features(latent)


def decode(latent, params):
    latent = np.asarray(latent, dtype=np.float64)
    want = params.spec.latent_shape
    if latent.ndim != 4 or latent.shape[1:] != want:
        raise DimensionError(f"expected latent of shape (n, {want}), got {latent.shape}")
    out, _ = _decode(latent, params)
    return out


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Settings for pre-training and joint fine-tuning.

    ``lambda1``/``lambda2`` may be zero here (plain autoencoder). The
    regularizer defaults to the entropy penalty; ``zero_diagonal=None``
    follows the regularizer's default as in :class:`SolverConfig`.
    """

    learning_rate: float = 1e-4
    pretrain_steps: int = 100
    finetune_steps: int = 100
    lambda1: float = 1.0
    lambda2: float = 10.0
    mode: str = DECOUPLED
    pretrain: bool = True
    seed: int = 0
    regularizer: str = MAX_ENTROPY
    epsilon: float = 1e-12
    zero_diagonal: bool = None

    def __post_init__(self):
        object.__setattr__(self, "regularizer", canonical_kind(self.regularizer))
        if self.mode not in (DECOUPLED, COUPLED):
            raise ValueError(f"mode must be {DECOUPLED!r} or {COUPLED!r}, got {self.mode!r}")
        if self.pretrain_steps < 0 or self.finetune_steps < 0:
            raise ValueError("step counts must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @property
    def zero_diag(self):
        return SolverConfig(zero_diagonal=self.zero_diagonal).resolved_zero_diagonal(self.regularizer)


@dataclass(frozen=True)
class LossComponents:
    total: float
    reconstruction: float
    self_expressive: float
    regularizer: float


@dataclass
class TrainHistory:
    total: list = field(default_factory=list)
    reconstruction: list = field(default_factory=list)
    self_expressive: list = field(default_factory=list)
    regularizer: list = field(default_factory=list)

    def append(self, lc):
        self.total.append(lc.total)
        self.reconstruction.append(lc.reconstruction)
        self.self_expressive.append(lc.self_expressive)
        self.regularizer.append(lc.regularizer)

    def __len__(self):
        return len(self.total)


def _reg_gradient(C, cfg):
    if cfg.lambda1 == 0:
        return np.zeros_like(C)
    if cfg.regularizer == MAX_ENTROPY:
        if np.any(C < cfg.epsilon):
            raise ValueError(f"entries of C must be >= epsilon={cfg.epsilon}")
        return cfg.lambda1 * (np.log(C) + 1.0)
    if cfg.regularizer == FROBENIUS:
        return 2.0 * cfg.lambda1 * C
    # l1 / nuclear are handled by the proximal step
    return np.zeros_like(C)


def loss_and_grads(X, params, C, cfg):
    """Loss components and gradients for the network parameters and C.

    Returns
    -------
    LossComponents
        ``self_expressive`` is ``||Z - Z C||^2`` and ``regularizer`` is
        ``R(C)``, both unweighted; ``total`` applies the weights.
    grads : dict
        Gradient per parameter tensor, keyed like ``NetworkParams.tensors``.
    grad_C : ndarray
    """
    X = _check_images(X, params.spec)
    n = X.shape[0]
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (n, n):
        raise DimensionError(f"C must be {n}x{n}, got {C.shape}")

    latent, enc_caches = _encode(X, params)
    Z = latent_to_features(latent)
    if cfg.mode == COUPLED:
        ZC = Z @ C
        dec_in = ZC.T.reshape(latent.shape)
    else:
        dec_in = latent
    Xr, dec_caches = _decode(dec_in, params)

    diff = Xr - X
    rec = 0.5 * float(np.sum(diff * diff))
    R = Z - (ZC if cfg.mode == COUPLED else Z @ C)
    se = float(np.sum(R * R))
    reg = regularizer_value(C, cfg.regularizer) if cfg.lambda1 != 0 else 0.0
    total = rec + cfg.lambda1 * reg + cfg.lambda2 * se
    if not np.isfinite(total):
        raise DivergenceError(0, total, "loss")

    d_dec_in, grads = _decode_backward(diff, params, dec_caches)
    dZ = 2.0 * cfg.lambda2 * (R - R @ C.T)
    grad_C = -2.0 * cfg.lambda2 * (Z.T @ R) + _reg_gradient(C, cfg)
    if cfg.mode == COUPLED:
        dZC = latent_to_features(d_dec_in)
        dZ += dZC @ C.T
        grad_C += Z.T @ dZC
        d_latent = dZ.T.reshape(latent.shape)
    else:
        d_latent = d_dec_in + dZ.T.reshape(latent.shape)
    grads.update(_encode_backward(d_latent, params, enc_caches))
    return LossComponents(total, rec, se, reg), grads, grad_C


def _adam_params(params, grads, states, lr):
    tensors = params.tensors()
    new = {}
    for name, value in tensors.items():
        new[name], states[name] = adam_step(value, grads[name], states[name], lr)
    return NetworkParams.from_tensors(params.spec, new)


def _adam_states(params):
    return {name: AdamState.zeros(t.shape) for name, t in params.tensors().items()}


def pretrain(X, params, cfg):
    """Train on reconstruction alone for ``cfg.pretrain_steps`` steps."""
    if cfg.pretrain_steps < 1:
        raise ValueError("pretrain needs pretrain_steps >= 1")
    X = _check_images(X, params.spec)
    states = _adam_states(params)
    history = TrainHistory()
    for step in range(1, cfg.pretrain_steps + 1):
        latent, enc_caches = _encode(X, params)
        Xr, dec_caches = _decode(latent, params)
        diff = Xr - X
        rec = 0.5 * float(np.sum(diff * diff))
        if not np.isfinite(rec):
            raise DivergenceError(step, rec, "loss")
        history.append(LossComponents(rec, rec, 0.0, 0.0))
        d_latent, grads = _decode_backward(diff, params, dec_caches)
        grads.update(_encode_backward(d_latent, params, enc_caches))
        params = _adam_params(params, grads, states, cfg.learning_rate)
    return params, history


def train_joint(X, params, C, cfg):
    """Fine-tune network and C together on the full batch with ADAM.

    After each step C goes through the same feasibility map as the affinity
    solver (epsilon floor for the entropy penalty, prox for l1 / nuclear).
    """
    X = _check_images(X, params.spec)
    C = np.array(C, dtype=np.float64)
    zero_diag = cfg.zero_diag
    spec = _reg_spec_for_projection(cfg)
    states = _adam_states(params)
    c_state = AdamState.zeros(C.shape)
    history = TrainHistory()
    for step in range(1, cfg.finetune_steps + 1):
        try:
            losses, grads, grad_C = loss_and_grads(X, params, C, cfg)
        except DivergenceError as exc:
            raise DivergenceError(step, exc.value, "loss") from None
        history.append(losses)
        params = _adam_params(params, grads, states, cfg.learning_rate)
        C, c_state = adam_step(C, grad_C, c_state, cfg.learning_rate)
        C = project(C, spec, cfg.learning_rate, cfg.epsilon, zero_diag)
    return params, C, history


@dataclass(frozen=True)
class _ProjectionSpec:
    kind: str
    lambda1: float


def _reg_spec_for_projection(cfg):
    return _ProjectionSpec(cfg.regularizer, cfg.lambda1)


def initial_affinity(n, cfg):
    """Uniform ``1/n`` start mapped through the feasibility map."""
    return project(uniform_affinity(n), _reg_spec_for_projection(cfg), 0.0, cfg.epsilon, cfg.zero_diag)


@dataclass
class FitResult:
    params: NetworkParams
    C: np.ndarray
    pretrain_history: TrainHistory
    finetune_history: TrainHistory


def fit(X, spec, cfg):
    """Build, optionally pre-train, then fine-tune. Seeds come from ``cfg.seed``."""
    X = _check_images(X, spec)
    params = build_network(spec, cfg.seed)
    pre_hist = TrainHistory()
    if cfg.pretrain and cfg.pretrain_steps > 0:
        params, pre_hist = pretrain(X, params, cfg)
    C0 = initial_affinity(X.shape[0], cfg)
    params, C, hist = train_joint(X, params, C0, cfg)
    logger.debug("fit: %d pretrain + %d finetune steps, mode=%s", len(pre_hist), len(hist), cfg.mode)
    return FitResult(params, C, pre_hist, hist)


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(path, params):
    """Write parameters as ``MESCNET1`` + uint32 tensor count, then per tensor
    (kernel then bias, layers in spec order) a uint32 rank, uint32 dims and
    little-endian float64 payload."""
    chunks = [CHECKPOINT_MAGIC]
    tensors = []
    for k, b in zip(params.kernels, params.biases):
        tensors += [k, b]
    chunks.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        chunks.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, spec):
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC or len(data) < 12:
        raise MalformedHeaderError(f"{path}: missing MESCNET1 header")
    (count,) = struct.unpack_from("<I", data, 8)
    if count != 2 * len(spec.layers):
        raise FormatError(f"{path}: {count} tensors, spec needs {2 * len(spec.layers)}")
    pos = 12
    tensors = []
    for _ in range(count):
        if pos + 4 > len(data):
            raise PayloadLengthError(pos + 4, len(data), path)
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if ndim > 8 or pos + 4 * ndim > len(data):
            raise MalformedHeaderError(f"{path}: bad tensor header at byte {pos - 4}")
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        nbytes = 8 * int(np.prod(shape))
        if pos + nbytes > len(data):
            raise PayloadLengthError(pos + nbytes, len(data), path)
        tensors.append(np.frombuffer(data, "<f8", int(np.prod(shape)), pos).reshape(shape).astype(np.float64))
        pos += nbytes
    if pos != len(data):
        raise PayloadLengthError(pos, len(data), path)
    params = NetworkParams(spec, tensors[0::2], tensors[1::2])
    for layer, k, b in zip(spec.layers, params.kernels, params.biases):
        if k.shape != layer.kernel_shape or b.shape != (layer.out_channels,):
            raise FormatError(f"{path}: tensor shapes do not match the network spec")
    return params
