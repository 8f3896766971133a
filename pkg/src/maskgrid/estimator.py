"""Small trainable mask-grid estimator with hand-derived gradients.

A pointwise two-layer network (tanh hidden, sigmoid output) maps each
(frame, bin) of the mixture to a grid row. It exists to make the loss
conditioning of nearest-cell vs. Gaussian targets observable during real
optimization at desk scale, and to produce imperfect encodings for decoder
robustness tests. All gradients are written out by hand and checked against
finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import CodingTensor, SpatialGrid
from .errors import ShapeError, TrainingError
from .stft import Spectrogram

FEATURE_NORM_EPS = 1e-8


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def features(mixture: Spectrogram) -> np.ndarray:
    """Per-(t, k) input features, shape (T, K, 2C + 1).

    The channel vector Y_tk is divided by its Euclidean norm plus a small
    epsilon, split into real and imaginary parts, and concatenated with the
    normalized bin index k/K. Scale-invariant in the mixture level; the
    complex part has norm at most 1.
    """
    if mixture.channels < 2:
        raise ShapeError(f"need at least 2 channels, got {mixture.channels}")
    y = np.transpose(mixture.values, (1, 2, 0))
    norm = np.linalg.norm(y, axis=2, keepdims=True)
    y = y / (norm + FEATURE_NORM_EPS)
    t, k = y.shape[:2]
    bin_index = np.broadcast_to(np.arange(k) / k, (t, k))[:, :, None]
    return np.concatenate([y.real, y.imag, bin_index], axis=2)


@dataclass(frozen=True)
class EstimatorParams:
    """Weights of the two-layer network; shapes fix all dimensions."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int = 0

    def __post_init__(self):
        w1, b1 = np.asarray(self.w1, float), np.asarray(self.b1, float)
        w2, b2 = np.asarray(self.w2, float), np.asarray(self.b2, float)
        if w1.ndim != 2 or w2.ndim != 2:
            raise ShapeError("weight matrices must be 2-D")
        if b1.shape != (w1.shape[1],) or b2.shape != (w2.shape[1],):
            raise ShapeError("bias shapes do not match weight matrices")
        if w1.shape[1] != w2.shape[0]:
            raise ShapeError(f"hidden dims differ: {w1.shape[1]} vs {w2.shape[0]}")
        for a in (w1, b1, w2, b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[1]


def init_params(input_dim: int, hidden_dim: int, output_dim: int,
                seed: int = 0, output_bias: float = 0.0) -> EstimatorParams:
    """Random initialization; output_bias shifts the sigmoid operating point.

    A strongly negative output_bias starts the network near the zero
    estimate, the evaluation point of the conditioning analysis.
    """
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), (input_dim, hidden_dim))
    w2 = rng.normal(0.0, 0.01, (hidden_dim, output_dim))
    return EstimatorParams(w1, np.zeros(hidden_dim), w2,
                           np.full(output_dim, float(output_bias)), seed)


@dataclass(frozen=True)
class Gradients:
    """Parameter gradients with the same shapes as EstimatorParams."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def l1_norm(self) -> float:
        return float(sum(np.abs(a).sum() for a in (self.w1, self.b1, self.w2, self.b2)))


def forward(params: EstimatorParams, feats: np.ndarray,
            grid: SpatialGrid) -> CodingTensor:
    """Network output as an estimated coding tensor, values in (0, 1)."""
    t, k, f = feats.shape
    if f != params.input_dim:
        raise ShapeError(f"feature dim {f} != input dim {params.input_dim}")
    if grid.theta_count != params.output_dim:
        raise ShapeError(f"grid {grid.theta_count} != output dim {params.output_dim}")
    x = feats.reshape(t * k, f)
    h = np.tanh(x @ params.w1 + params.b1)
    y = _sigmoid(h @ params.w2 + params.b2)
    return CodingTensor(y.reshape(t, k, grid.theta_count), grid, "estimated")


def backward(params: EstimatorParams, feats: np.ndarray,
             target: CodingTensor) -> tuple:
    """Mean-MSE loss and its analytic parameter gradients.

    The loss is the mean of (output - target)^2 over every (t, k, cell),
    backpropagated through the sigmoid and tanh by hand.

    Returns:
        (Gradients, loss).

    Raises:
        TrainingError: loss is not finite.
    """
    t, k, f = feats.shape
    if target.values.shape != (t, k, params.output_dim):
        raise ShapeError(f"target shape {target.values.shape} does not match "
                         f"({t}, {k}, {params.output_dim})")
    x = feats.reshape(t * k, f)
    tgt = target.values.reshape(t * k, params.output_dim)
    h = np.tanh(x @ params.w1 + params.b1)
    y = _sigmoid(h @ params.w2 + params.b2)
    diff = y - tgt
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss in backward pass")
    dz2 = (2.0 / diff.size) * diff * y * (1.0 - y)
    gw2 = h.T @ dz2
    gb2 = dz2.sum(axis=0)
    dh = dz2 @ params.w2.T
    dz1 = dh * (1.0 - h * h)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return Gradients(gw1, gb1, gw2, gb2), loss


@dataclass(frozen=True)
class TrainConfig:
    """SGD schedule: initial rate decayed stepwise, early stop on patience."""

    learning_rate: float = 0.001
    decay_factor: float = 0.63
    decay_every_epochs: int = 10
    epochs: int = 100
    batch_size: int = 5
    target_kind: str = "mwslc"
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError(f"decay factor must be in (0, 1), got {self.decay_factor}")
        if min(self.epochs, self.batch_size, self.patience,
               self.decay_every_epochs) < 1:
            raise ValueError("epochs, batch size, patience, decay interval "
                             "must be at least 1")

    def rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_every_epochs)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    learning_rate: float
    train_loss: float
    val_loss: float
    grad_norm: float


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch log plus the early-stop outcome."""

    epochs: tuple
    best_epoch: int
    stopped_early: bool

    HISTORY_COLUMNS = ("epoch", "learning_rate", "train_loss", "val_loss",
                       "grad_norm")

    def as_table(self):
        return [{c: getattr(e, c) for c in self.HISTORY_COLUMNS}
                for e in self.epochs]


def _as_feature_pairs(scenes):
    pairs = []
    for mixture, target in scenes:
        feats = mixture if isinstance(mixture, np.ndarray) else features(mixture)
        pairs.append((feats, target))
    return pairs


def _mean_loss(params, pairs):
    return float(np.mean([backward(params, f, t)[1] for f, t in pairs]))


def train(train_scenes, val_scenes, cfg: TrainConfig,
          params: EstimatorParams | None = None,
          grid: SpatialGrid | None = None,
          hidden_dim: int = 64) -> tuple:
    """Mini-batch SGD over scenes; returns best-validation params + history.

    Scenes are (mixture Spectrogram or precomputed features, target
    CodingTensor) pairs. Reproducible bit-for-bit for a fixed config seed:
    shuffling uses its own generator and batch gradients are averaged in
    list order.

    Raises:
        TrainingError: empty splits, or loss turning non-finite (the epoch
            index is named in the message).
    """
    train_pairs = _as_feature_pairs(train_scenes)
    val_pairs = _as_feature_pairs(val_scenes)
    if not train_pairs or not val_pairs:
        raise TrainingError("need non-empty training and validation splits")
    if params is None:
        feats0, target0 = train_pairs[0]
        out_grid = grid if grid is not None else target0.grid
        params = init_params(feats0.shape[2], hidden_dim,
                             out_grid.theta_count, seed=cfg.seed)

    rng = np.random.default_rng(cfg.seed)
    best = params
    best_val = _mean_loss(params, val_pairs)
    best_epoch = -1
    bad_epochs = 0
    stopped = False
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.rate_at(epoch)
        order = rng.permutation(len(train_pairs))
        epoch_losses = []
        epoch_norms = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = None
            for idx in batch:
                feats, target = train_pairs[idx]
                try:
                    grads, loss = backward(params, feats, target)
                except TrainingError as err:
                    raise TrainingError(f"{err} at epoch {epoch}") from err
                epoch_losses.append(loss)
                if acc is None:
                    acc = [grads.w1, grads.b1, grads.w2, grads.b2]
                else:
                    for a, g in zip(acc, (grads.w1, grads.b1, grads.w2, grads.b2)):
                        a += g
            scale = 1.0 / batch.size
            epoch_norms.append(Gradients(*[a * scale for a in acc]).l1_norm())
            params = EstimatorParams(
                params.w1 - lr * scale * acc[0],
                params.b1 - lr * scale * acc[1],
                params.w2 - lr * scale * acc[2],
                params.b2 - lr * scale * acc[3],
                params.seed)
        val_loss = _mean_loss(params, val_pairs)
        history.append(EpochStats(epoch, lr, float(np.mean(epoch_losses)),
                                  val_loss, float(np.mean(epoch_norms))))
        if val_loss < best_val:
            best_val = val_loss
            best = params
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped = True
                break
    return best, TrainHistory(tuple(history), best_epoch, stopped)


def corrupt_oracle(coding: CodingTensor, noise_std: float = 0.0,
                   blur_cells: int = 0, seed: int = 0) -> CodingTensor:
    """Degrade an oracle coding: circular blur over cells, then clipped noise.

    The blur is a moving average of radius blur_cells with wraparound; noise
    is Gaussian clipped to 5 standard deviations; the result is clipped to
    [0, 1]. Identity when both knobs are zero.
    """
    if noise_std < 0 or blur_cells < 0:
        raise ValueError("noise_std and blur_cells must be non-negative")
    values = coding.values
    theta = coding.grid.theta_count
    if blur_cells > 0:
        width = 2 * blur_cells + 1
        if width >= theta:
            values = np.broadcast_to(values.mean(axis=2, keepdims=True),
                                     values.shape).copy()
        else:
            acc = np.zeros_like(values)
            for off in range(-blur_cells, blur_cells + 1):
                acc += np.roll(values, off, axis=2)
            values = acc / width
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = np.clip(rng.normal(0.0, noise_std, values.shape),
                        -5.0 * noise_std, 5.0 * noise_std)
        values = values + noise
    if noise_std > 0 or blur_cells > 0:
        values = np.clip(values, 0.0, 1.0)
    return CodingTensor(values, coding.grid, coding.kind)
