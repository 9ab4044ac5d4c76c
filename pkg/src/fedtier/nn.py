"""Minimal CNN engine: tensors as float64 numpy arrays, manual
backpropagation, and SGD with momentum.

The architecture is the classic two-conv MNIST net: conv(5x5) -> maxpool(2)
-> relu -> conv(5x5) -> maxpool(2) -> relu -> dense -> relu -> dense ->
log-softmax. All arithmetic is 64-bit; everything is pure (callers own
their arrays) and deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatchError
from .rng import philox

if TYPE_CHECKING:
    from .data import LabeledSet

KERNEL = 5
POOL = 2
INPUT_SIDE = 28
NUM_CLASSES = 10


@dataclass(frozen=True)
class CnnArch:
    """Channel/width knobs of the two-conv net; (10, 20, 50) is SimpleCNN."""

    conv1_channels: int = 10
    conv2_channels: int = 20
    hidden_units: int = 50

    @property
    def flat_features(self) -> int:
        # 28 -conv5-> 24 -pool-> 12 -conv5-> 8 -pool-> 4
        side = ((INPUT_SIDE - KERNEL + 1) // POOL - KERNEL + 1) // POOL
        return self.conv2_channels * side * side

    def param_layout(self) -> list[tuple[str, tuple[int, ...]]]:
        c1, c2, h = self.conv1_channels, self.conv2_channels, self.hidden_units
        return [
            ("conv1.weight", (c1, 1, KERNEL, KERNEL)),
            ("conv1.bias", (c1,)),
            ("conv2.weight", (c2, c1, KERNEL, KERNEL)),
            ("conv2.bias", (c2,)),
            ("fc1.weight", (h, self.flat_features)),
            ("fc1.bias", (h,)),
            ("fc2.weight", (NUM_CLASSES, h)),
            ("fc2.bias", (NUM_CLASSES,)),
        ]

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.param_layout())


SIMPLE_CNN = CnnArch(10, 20, 50)


def tiny_arch() -> CnnArch:
    """Shrunken variant (2 conv channels, 8 hidden units) for gradient checks."""
    return CnnArch(2, 4, 8)


@dataclass
class ModelParams:
    """Ordered, named parameter set; the unit of training and aggregation."""

    entries: list[tuple[str, np.ndarray]]

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(t.shape)) for name, t in self.entries]

    def copy(self) -> "ModelParams":
        return ModelParams([(name, t.copy()) for name, t in self.entries])

    def tensor(self, name: str) -> np.ndarray:
        for n, t in self.entries:
            if n == name:
                return t
        raise KeyError(name)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.5
    batch_size: int = 64
    local_epochs: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")


def zeros_like(params: ModelParams) -> ModelParams:
    return ModelParams([(name, np.zeros_like(t)) for name, t in params.entries])


def check_same_layout(*params: ModelParams) -> None:
    ref = params[0].layout()
    for p in params[1:]:
        if p.layout() != ref:
            raise ShapeMismatchError(f"parameter layouts differ: {p.layout()} vs {ref}")


def _check_arch(params: ModelParams, arch: CnnArch) -> None:
    if params.layout() != arch.param_layout():
        raise ShapeMismatchError(
            f"params do not match architecture: {params.layout()} vs {arch.param_layout()}"
        )


def init_params(arch: CnnArch, seed: int) -> ModelParams:
    """Uniform weights on [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases.

    Tensors are drawn in layout order from a single Philox stream keyed with
    the seed, so equal seeds give bit-identical parameters.
    """
    gen = philox(seed)
    entries: list[tuple[str, np.ndarray]] = []
    for name, shape in arch.param_layout():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            entries.append((name, gen.uniform(-bound, bound, size=shape)))
        else:
            entries.append((name, np.zeros(shape)))
    return ModelParams(entries)


# ---------------------------------------------------------------------------
# Layer primitives (im2col convolution, 2x2 max pooling, dense, log-softmax)
# ---------------------------------------------------------------------------

def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    n, _, h, wd = x.shape
    out_c = w.shape[0]
    ho, wo = h - KERNEL + 1, wd - KERNEL + 1
    win = sliding_window_view(x, (KERNEL, KERNEL), axis=(2, 3))
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, -1)
    out = cols @ w.reshape(out_c, -1).T + b
    return out.reshape(n, ho, wo, out_c).transpose(0, 3, 1, 2), cols


def _conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray,
                   x_shape: tuple[int, ...], need_dx: bool = True):
    n, c, h, wd = x_shape
    out_c = w.shape[0]
    ho, wo = h - KERNEL + 1, wd - KERNEL + 1
    dflat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, out_c)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dflat @ w.reshape(out_c, -1)).reshape(n, ho, wo, c, KERNEL, KERNEL)
    dx = np.zeros(x_shape)
    for i in range(KERNEL):
        for j in range(KERNEL):
            dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x: np.ndarray):
    n, c, h, wd = x.shape
    h2, w2 = h // POOL, wd // POOL
    win = x.reshape(n, c, h2, POOL, w2, POOL).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, POOL * POOL)
    idx = win.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout: np.ndarray, idx: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    n, c, h, wd = x_shape
    h2, w2 = h // POOL, wd // POOL
    dwin = np.zeros((n, c, h2, w2, POOL * POOL))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, c, h2, w2, POOL, POOL).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_pass(params: ModelParams, batch: np.ndarray, keep_cache: bool):
    w1, b1, w2, b2, fw1, fb1, fw2, fb2 = (t for _, t in params.entries)
    a1, cols1 = _conv_forward(batch, w1, b1)
    p1, idx1 = _pool_forward(a1)
    r1 = np.maximum(p1, 0.0)
    a2, cols2 = _conv_forward(r1, w2, b2)
    p2, idx2 = _pool_forward(a2)
    r2 = np.maximum(p2, 0.0)
    flat = r2.reshape(batch.shape[0], -1)
    h = flat @ fw1.T + fb1
    rh = np.maximum(h, 0.0)
    logits = rh @ fw2.T + fb2
    logp = _log_softmax(logits)
    if not keep_cache:
        return logp, None
    cache = dict(cols1=cols1, a1=a1, idx1=idx1, p1=p1, cols2=cols2, a2=a2,
                 idx2=idx2, p2=p2, r1=r1, flat=flat, h=h, rh=rh)
    return logp, cache


def forward(params: ModelParams, batch: np.ndarray, arch: CnnArch = SIMPLE_CNN) -> np.ndarray:
    """Row-wise log-probabilities for a (N, 1, 28, 28) batch."""
    _check_arch(params, arch)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != (1, INPUT_SIDE, INPUT_SIDE):
        raise ShapeMismatchError(f"expected (N, 1, 28, 28) batch, got {batch.shape}")
    logp, _ = _forward_pass(params, batch, keep_cache=False)
    return logp


def loss_and_gradients(params: ModelParams, batch: np.ndarray, labels,
                       arch: CnnArch = SIMPLE_CNN) -> tuple[float, ModelParams]:
    """Mean negative log-likelihood over the batch and its gradients.

    Gradients carry the same (name, shape) layout as the parameters.
    """
    _check_arch(params, arch)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != (1, INPUT_SIDE, INPUT_SIDE):
        raise ShapeMismatchError(f"expected (N, 1, 28, 28) batch, got {batch.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n = batch.shape[0]
    if labels.shape != (n,):
        raise ShapeMismatchError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
        raise ValueError("labels must lie in [0, 9]")

    w1, b1, w2, b2, fw1, fb1, fw2, fb2 = (t for _, t in params.entries)
    logp, cache = _forward_pass(params, batch, keep_cache=True)
    loss = float(-logp[np.arange(n), labels].mean())

    # d loss / d logits for mean NLL after log-softmax
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    d_fw2 = dlogits.T @ cache["rh"]
    d_fb2 = dlogits.sum(axis=0)
    dh = (dlogits @ fw2) * (cache["h"] > 0)
    d_fw1 = dh.T @ cache["flat"]
    d_fb1 = dh.sum(axis=0)
    dr2 = (dh @ fw1).reshape(cache["p2"].shape) * (cache["p2"] > 0)
    da2 = _pool_backward(dr2, cache["idx2"], cache["a2"].shape)
    dr1, d_w2, d_b2 = _conv_backward(da2, cache["cols2"], w2, cache["r1"].shape)
    dp1 = dr1 * (cache["p1"] > 0)
    da1 = _pool_backward(dp1, cache["idx1"], cache["a1"].shape)
    _, d_w1, d_b1 = _conv_backward(da1, cache["cols1"], w1, batch.shape, need_dx=False)

    grads = ModelParams([
        ("conv1.weight", d_w1), ("conv1.bias", d_b1),
        ("conv2.weight", d_w2), ("conv2.bias", d_b2),
        ("fc1.weight", d_fw1), ("fc1.bias", d_fb1),
        ("fc2.weight", d_fw2), ("fc2.bias", d_fb2),
    ])
    return loss, grads


def sgd_momentum_step(params: ModelParams, grads: ModelParams, velocity: ModelParams,
                      cfg: TrainConfig) -> tuple[ModelParams, ModelParams]:
    """v' = momentum * v + g; w' = w - lr * v'. Pure: returns fresh arrays."""
    check_same_layout(params, grads, velocity)
    new_params = []
    new_velocity = []
    for (name, w), (_, g), (_, v) in zip(params.entries, grads.entries, velocity.entries):
        v_next = cfg.momentum * v + g
        new_velocity.append((name, v_next))
        new_params.append((name, w - cfg.learning_rate * v_next))
    return ModelParams(new_params), ModelParams(new_velocity)


def train_local(params: ModelParams, dataset: "LabeledSet", cfg: TrainConfig,
                arch: CnnArch = SIMPLE_CNN) -> tuple[ModelParams, int]:
    """Shuffled mini-batch SGD for cfg.local_epochs epochs over the dataset.

    The shuffle is drawn from Philox keyed with cfg.seed; the result is
    bit-deterministic for equal seeds. Returns (new params, sample count).
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    gen = philox(cfg.seed)
    current = params
    velocity = zeros_like(params)
    for _ in range(cfg.local_epochs):
        order = gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            _, grads = loss_and_gradients(current, dataset.images[take], dataset.labels[take], arch)
            current, velocity = sgd_momentum_step(current, grads, velocity, cfg)
    return current, n


def evaluate_accuracy(params: ModelParams, testset: "LabeledSet",
                      arch: CnnArch = SIMPLE_CNN, chunk: int = 512) -> float:
    """Fraction of samples whose argmax log-probability matches the label.

    np.argmax breaks ties toward the lowest class index.
    """
    n = len(testset)
    if n == 0:
        raise ValueError("cannot evaluate on an empty testset")
    correct = 0
    for start in range(0, n, chunk):
        logp = forward(params, testset.images[start:start + chunk], arch)
        correct += int((logp.argmax(axis=1) == testset.labels[start:start + chunk]).sum())
    return correct / n
