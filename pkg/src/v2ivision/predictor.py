"""Compact residual CNN regressor trained from scratch.

Architecture (channels-last, input ``(N, H, W, C)``)::

    stem   conv3x3/2  C -> 8, ReLU
    block1 conv3x3/2  8 -> 16, ReLU, conv3x3/1 16 -> 16   + conv1x1/2 skip, ReLU
    block2 conv3x3/2 16 -> 32, ReLU, conv3x3/1 32 -> 32   + conv1x1/2 skip, ReLU
    4x4 adaptive average pool -> 512 features -> linear -> 1

All parameters live in one flat vector; per-layer arrays are views into it,
which keeps the optimizer and the checkpoint format trivial. The network
regresses a standardized label; :func:`forward` maps back to label units.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from ._accel import keep_heap
from .errors import ContractError, DivergenceError, FormatError

log = logging.getLogger(__name__)

TARGETS = ("pl_db", "k_db", "rms_ds_ns")
POOL_GRID = (4, 4)
STEM, MID, OUT = 8, 16, 32

# name, kernel, stride, pad, in-channel source ("input" or int), out channels
_CONVS = (
    ("stem", 3, 2, 1, "input", STEM),
    ("b1c1", 3, 2, 1, STEM, MID),
    ("b1c2", 3, 1, 1, MID, MID),
    ("b1proj", 1, 2, 0, STEM, MID),
    ("b2c1", 3, 2, 1, MID, OUT),
    ("b2c2", 3, 1, 1, OUT, OUT),
    ("b2proj", 1, 2, 0, MID, OUT),
)
_CONV_GEOM = {name: (k, s, p) for name, k, s, p, _, _ in _CONVS}


def layer_shapes(in_channels):
    shapes = []
    for name, k, _, _, cin, cout in _CONVS:
        cin = in_channels if cin == "input" else cin
        shapes.append((name + ".w", (cin * k * k, cout)))
        shapes.append((name + ".b", (cout,)))
    nfeat = POOL_GRID[0] * POOL_GRID[1] * OUT
    shapes.append(("fc.w", (nfeat,)))
    shapes.append(("fc.b", (1,)))
    return shapes


def architecture_id(in_channels, height, width):
    desc = ";".join(f"{n}:{'x'.join(map(str, s))}" for n, s in layer_shapes(in_channels))
    desc += f";input={height}x{width}x{in_channels};pool={POOL_GRID};relu"
    return hashlib.sha256(desc.encode()).digest()


@dataclass
class ModelParams:
    vector: np.ndarray
    in_channels: int = 1
    height: int = 108
    width: int = 192
    rng_seed: int = 0
    views: dict = field(init=False, repr=False)

    def __post_init__(self):
        expected = sum(int(np.prod(s)) for _, s in layer_shapes(self.in_channels))
        if self.vector.ndim != 1 or self.vector.size != expected:
            raise ContractError(f"parameter vector has {self.vector.size} entries, architecture needs {expected}")
        self.views = {}
        off = 0
        for name, shape in layer_shapes(self.in_channels):
            size = int(np.prod(shape))
            self.views[name] = self.vector[off : off + size].reshape(shape)
            off += size

    def __getitem__(self, name):
        return self.views[name]

    @property
    def dtype(self):
        return self.vector.dtype

    def copy(self):
        return ModelParams(self.vector.copy(), self.in_channels, self.height, self.width, self.rng_seed)

    def astype(self, dtype):
        return ModelParams(self.vector.astype(dtype), self.in_channels, self.height, self.width, self.rng_seed)


def init_params(in_channels=1, height=108, width=192, seed=0, dtype=np.float32, zero=False):
    """Fan-in scaled uniform weights (He bound ``sqrt(6 / fan_in)``), zero biases."""
    shapes = layer_shapes(in_channels)
    vec = np.zeros(sum(int(np.prod(s)) for _, s in shapes), dtype=dtype)
    params = ModelParams(vec, in_channels, height, width, seed)
    if zero:
        return params
    rng = np.random.default_rng(seed)
    for name, shape in shapes:
        if name.endswith(".b"):
            continue
        fan_in = shape[0]
        bound = np.sqrt(6.0 / fan_in) if name != "fc.w" else np.sqrt(3.0 / fan_in)
        params[name][...] = rng.uniform(-bound, bound, size=shape)
    return params


def pool_matrix(n_in, n_out):
    """Row ``i`` averages input cells ``[floor(i*n/m), ceil((i+1)*n/m))``."""
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


_POOL_CACHE = {}


def _pool_operator(h, w, dtype):
    """``(16, h*w)`` matrix taking a flattened ``(h, w)`` map to the 4x4 grid."""
    key = (h, w, np.dtype(dtype).str)
    if key not in _POOL_CACHE:
        ph = pool_matrix(h, POOL_GRID[0])
        pw = pool_matrix(w, POOL_GRID[1])
        _POOL_CACHE[key] = np.kron(ph, pw).astype(dtype)
    return _POOL_CACHE[key]


# --------------------------------------------------------------------------
# layers


def _conv(x, params, name):
    k, s, p = _CONV_GEOM[name]
    cols = kernels.im2col(x, k, s, p)
    n, ho, wo, kk = cols.shape
    w = params[name + ".w"]
    out = cols.reshape(-1, kk) @ w
    out += params[name + ".b"]
    return out.reshape(n, ho, wo, w.shape[1]), cols


def _conv_back(dout, cols, x_shape, params, name, grads, need_dx=True):
    k, s, p = _CONV_GEOM[name]
    w = params[name + ".w"]
    d2 = dout.reshape(-1, w.shape[1])
    c2 = cols.reshape(-1, w.shape[0])
    grads[name + ".w"][...] = c2.T @ d2
    grads[name + ".b"][...] = np.ones(d2.shape[0], dtype=d2.dtype) @ d2
    if not need_dx:
        return None
    dcols = (d2 @ w.T).reshape(cols.shape)
    return kernels.col2im(dcols, x_shape, k, s, p)


def _check_input(params, x):
    if x.ndim == 3 and params.in_channels == 1:
        x = x[..., None]
    if x.ndim != 4 or x.shape[1:] != (params.height, params.width, params.in_channels):
        raise ContractError(
            f"input shape {x.shape[1:] if x.ndim == 4 else x.shape} does not match architecture "
            f"{(params.height, params.width, params.in_channels)}"
        )
    return np.asarray(x, dtype=params.dtype)


def _forward(params, x, keep=False):
    x = _check_input(params, x)
    cache = {"x": x}
    a0, cache["stem"] = _conv(x, params, "stem")
    np.maximum(a0, 0, out=a0)

    z, cache["b1c1"] = _conv(a0, params, "b1c1")
    h1 = np.maximum(z, 0)
    z2, cache["b1c2"] = _conv(h1, params, "b1c2")
    sk, cache["b1proj"] = _conv(a0, params, "b1proj")
    a1 = np.maximum(z2 + sk, 0)

    z, cache["b2c1"] = _conv(a1, params, "b2c1")
    h2 = np.maximum(z, 0)
    z2, cache["b2c2"] = _conv(h2, params, "b2c2")
    sk, cache["b2proj"] = _conv(a1, params, "b2proj")
    a2 = np.maximum(z2 + sk, 0)

    pool = _pool_operator(a2.shape[1], a2.shape[2], params.dtype)
    n = len(x)
    feat = np.matmul(pool, a2.reshape(n, -1, OUT)).reshape(n, -1)
    out = feat @ params["fc.w"] + params["fc.b"][0]
    if keep:
        cache.update(a0=a0, h1=h1, a1=a1, h2=h2, a2=a2, pool=pool, feat=feat)
        return out, cache
    return out


def forward_standardized(params, x):
    """Raw network output (standardized label scale), shape ``(N,)``."""
    return _forward(params, x)


def forward(params, x, label_mean=0.0, label_std=1.0):
    """Predictions in label units for a batch ``(N, H, W[, C])`` or a single grid."""
    single = np.ndim(x) == 2 or (np.ndim(x) == 3 and x.shape[-1] == params.in_channels and params.in_channels > 1)
    xb = np.asarray(x)[None] if single else np.asarray(x)
    z = _forward(params, xb).astype(np.float64)
    y = label_mean + label_std * z
    return float(y[0]) if single else y


def loss(preds, labels):
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape or preds.size < 1:
        raise ContractError(f"loss needs equal non-empty vectors, got {preds.shape} and {labels.shape}")
    return float(np.mean((labels - preds) ** 2))


def backward(params, x, targets, scale=1.0):
    """Loss ``scale * mean((f(x) - targets)^2)`` and its gradient.

    ``targets`` are on the standardized scale. Returns ``(loss, grad)`` with
    ``grad`` a :class:`ModelParams` laid out like ``params``.
    """
    out, c = _forward(params, x, keep=True)
    t = np.asarray(targets, dtype=params.dtype)
    if t.shape != out.shape:
        raise ContractError(f"{t.shape[0] if t.ndim else 'scalar'} targets for a batch of {out.shape[0]}")
    n = out.shape[0]
    resid = out - t
    loss_val = scale * float(np.mean(resid.astype(np.float64) ** 2))
    grads = ModelParams(np.zeros_like(params.vector), params.in_channels, params.height, params.width)

    dout = (2.0 * scale / n) * resid
    grads["fc.w"][...] = c["feat"].T @ dout
    grads["fc.b"][...] = dout.sum()
    dfeat = np.outer(dout, params["fc.w"]).astype(params.dtype)
    da2 = np.matmul(c["pool"].T, dfeat.reshape(n, -1, OUT)).reshape(c["a2"].shape)

    # block2
    dz = da2 * (c["a2"] > 0)
    da1 = _conv_back(dz, c["b2proj"], c["a1"].shape, params, "b2proj", grads)
    dh2 = _conv_back(dz, c["b2c2"], c["h2"].shape, params, "b2c2", grads)
    dh2 *= c["h2"] > 0
    da1 += _conv_back(dh2, c["b2c1"], c["a1"].shape, params, "b2c1", grads)

    # block1
    dz = da1 * (c["a1"] > 0)
    da0 = _conv_back(dz, c["b1proj"], c["a0"].shape, params, "b1proj", grads)
    dh1 = _conv_back(dz, c["b1c2"], c["h1"].shape, params, "b1c2", grads)
    dh1 *= c["h1"] > 0
    da0 += _conv_back(dh1, c["b1c1"], c["a0"].shape, params, "b1c1", grads)

    da0 *= c["a0"] > 0
    _conv_back(da0, c["stem"], c["x"].shape, params, "stem", grads, need_dx=False)

    if not np.all(np.isfinite(grads.vector)):
        for name, g in grads.views.items():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in layer {name.split('.')[0]}")
    return loss_val, grads


# --------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive-moment optimizer on a flat parameter vector."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float32):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, vector, grad):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * grad * grad
        step = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        vector -= (step * self.m / (np.sqrt(self.v) + self.eps)).astype(vector.dtype)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 60
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    target: str = "pl_db"
    label_standardize: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ContractError("learning_rate must be >= 0")
        if self.target not in TARGETS:
            raise ContractError(f"unknown target {self.target!r}, expected one of {TARGETS}")


@dataclass
class TrainedModel:
    params: ModelParams
    target: str
    label_mean: float
    label_std: float
    training_curve: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_loss(self):
        return min(v for _, v in self.training_curve) if self.training_curve else float("nan")

    def predict(self, images, batch_size=256):
        return predict_run(self, images, batch_size=batch_size)


def to_input(images):
    """uint8 images (0..255) or bool masks -> float32 network input."""
    images = np.asarray(images)
    if images.dtype == np.bool_:
        return images.astype(np.float32)
    if images.dtype == np.uint8:
        return images.astype(np.float32) * np.float32(1.0 / 255.0)
    return images.astype(np.float32)


def _batched_outputs(params, images, batch_size):
    out = np.empty(len(images), dtype=np.float64)
    for lo in range(0, len(images), batch_size):
        out[lo : lo + batch_size] = _forward(params, to_input(images[lo : lo + batch_size]))
    return out


def train(images, labels, train_idx, val_idx, cfg: TrainConfig, in_channels=None, progress=None):
    """Fit one regressor on ``images[train_idx]`` and keep the best-val-loss epoch.

    ``images`` is ``(M, H, W)`` or ``(M, H, W, C)``; ``labels`` is ``(M,)`` in
    label units.
    """
    keep_heap()
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    if train_idx.size == 0 or val_idx.size == 0:
        raise ContractError("train and validation splits must be non-empty")
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[..., None]
    m, h, w, c = images.shape
    if in_channels is not None and in_channels != c:
        raise ContractError(f"images have {c} channels, expected {in_channels}")
    labels = np.asarray(labels, dtype=np.float64)

    y_train = labels[train_idx]
    if cfg.label_standardize:
        mean = float(np.mean(y_train))
        std = float(np.std(y_train))
        if not std > 0:
            std = 1.0
    else:
        mean, std = 0.0, 1.0
    z = ((labels - mean) / std).astype(np.float32)

    params = init_params(c, h, w, seed=cfg.rng_seed)
    opt = Adam(params.vector.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = np.random.default_rng([cfg.rng_seed, 1])
    best = params.copy()
    best_val, best_epoch = np.inf, -1
    curve = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(train_idx)
        total = 0.0
        for b, lo in enumerate(range(0, order.size, cfg.batch_size)):
            idx = np.sort(order[lo : lo + cfg.batch_size])
            loss_val, grads = backward(params, to_input(images[idx]), z[idx])
            if not np.isfinite(loss_val):
                raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
            total += loss_val * idx.size
            opt.step(params.vector, grads.vector)
        train_loss = total / order.size
        val_loss = loss(_batched_outputs(params, images[val_idx], 256), z[val_idx].astype(np.float64))
        curve.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best = params.copy()
        if progress is not None:
            progress(epoch, train_loss, val_loss)
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
    return TrainedModel(best, cfg.target, mean, std, curve, best_epoch)


def predict_run(model: TrainedModel, images, batch_size=256):
    """Predictions in label units, one per image, order preserved."""
    keep_heap()
    images = np.asarray(images)
    if images.ndim == 3 and model.params.in_channels == 1:
        images = images[..., None]
    if len(images) == 0:
        return np.empty(0)
    z = _batched_outputs(model.params, images, batch_size)
    return model.label_mean + model.label_std * z


# --------------------------------------------------------------------------
# checkpoint: header + flat little-endian f32 parameters

_CKPT_MAGIC = b"V2IC"
_CKPT_HEAD = struct.Struct("<4sI32s16sddIIIQ")


def save_checkpoint(model: TrainedModel, path):
    p = model.params
    head = _CKPT_HEAD.pack(
        _CKPT_MAGIC,
        1,
        architecture_id(p.in_channels, p.height, p.width),
        model.target.encode().ljust(16, b"\0"),
        model.label_mean,
        model.label_std,
        p.in_channels,
        p.height,
        p.width,
        p.vector.size,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(p.vector.astype("<f4").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEAD.size:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, version, arch, target, mean, std, c, h, w, n = _CKPT_HEAD.unpack_from(raw)
    if magic != _CKPT_MAGIC or version != 1:
        raise FormatError(f"{path}: not a model checkpoint")
    if arch != architecture_id(c, h, w):
        raise FormatError(f"{path}: architecture hash mismatch")
    body = raw[_CKPT_HEAD.size :]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: expected {n} parameters, found {len(body) // 4}")
    vec = np.frombuffer(body, dtype="<f4").astype(np.float32)
    params = ModelParams(vec, c, h, w)
    return TrainedModel(params, target.rstrip(b"\0").decode(), mean, std)
