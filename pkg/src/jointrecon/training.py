"""Denoising score matching training for the convolutional score net.

Each minibatch draws one ladder level per sample, perturbs the clean
pair with Gaussian noise of that level, and penalizes the scaled score
estimate against the injected noise:

    loss = mean over batch of || sigma * net(x + sigma z, sigma) + z ||^2

summed over all channels and pixels of a sample.  A zero network
therefore scores E||z||^2 = number of elements, which anchors the
expected starting loss.  Optimization is plain momentum SGD; every
random draw flows from labelled substreams of one seed, so identical
configs produce bit-identical checkpoints.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquire import load_manifest, load_sample, sample_dirs
from .errors import DivergenceError, ParameterError
from .grids import ImagePair, pair_to_channels
from .rng import RandomStream
from .schedule import NoiseSchedule
from .scorenet import ScoreNetParams, init_params, net_backward, net_forward

MODALITY_CHANNELS = {"joint": 3, "pet": 1, "mri": 2}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    seed: int = 0
    modality: str = "joint"
    base_width: int = 16
    momentum: float = 0.9
    # Per-channel loss weights, e.g. to stop a 2-channel modality from
    # soaking up two thirds of the gradient mass in a joint net.  None
    # means unweighted; weights that sum to the channel count keep the
    # zero-network loss anchor at the element count.
    channel_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.modality not in MODALITY_CHANNELS:
            raise ParameterError(f"modality must be one of {sorted(MODALITY_CHANNELS)}")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.channel_weights is not None:
            w = tuple(float(x) for x in self.channel_weights)
            if len(w) != MODALITY_CHANNELS[self.modality]:
                raise ParameterError(
                    f"channel_weights needs {MODALITY_CHANNELS[self.modality]} "
                    f"entries for modality {self.modality!r}, got {len(w)}"
                )
            if any(not x > 0 for x in w):
                raise ParameterError("channel_weights must all be positive")
            object.__setattr__(self, "channel_weights", w)


def pair_channels(pair: ImagePair, modality: str) -> np.ndarray:
    """Channel stack of one pair restricted to a modality view."""
    if modality == "joint":
        return pair_to_channels(pair)
    if modality == "pet":
        return pair.pet[None]
    if modality == "mri":
        return np.stack([pair.mri.real, pair.mri.imag])
    raise ParameterError(f"unknown modality {modality!r}")


def _perturb(batch: np.ndarray, schedule: NoiseSchedule, stream: RandomStream):
    b = batch.shape[0]
    levels = stream.integers(0, schedule.n_steps + 1, b)
    sigmas = np.array([schedule.sigma(int(i)) for i in levels])
    z = stream.normal(batch.size).reshape(batch.shape)
    noisy = batch + sigmas[:, None, None, None] * z
    return noisy, sigmas, z


def _channel_weight_column(weights, n_channels: int) -> np.ndarray | None:
    if weights is None:
        return None
    col = np.asarray(weights, dtype=np.float64).reshape(-1)
    if col.size != n_channels:
        raise ParameterError(f"expected {n_channels} channel weights, got {col.size}")
    if np.any(col <= 0):
        raise ParameterError("channel_weights must all be positive")
    return col[None, :, None, None]


def dsm_loss(params: ScoreNetParams, batch: np.ndarray, schedule: NoiseSchedule, stream: RandomStream, weights=None) -> float:
    """Denoising score matching loss of one batch (no gradient)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ParameterError("batch must be a nonempty (B, C, H, W) array")
    w = _channel_weight_column(weights, batch.shape[1])
    noisy, sigmas, z = _perturb(batch, schedule, stream)
    y, _ = net_forward(params, noisy, sigmas)
    resid = sigmas[:, None, None, None] * y.astype(np.float64) + z
    sq = resid**2 if w is None else w * resid**2
    return float(np.mean(np.sum(sq, axis=(1, 2, 3))))


def dsm_loss_and_grads(params: ScoreNetParams, batch: np.ndarray, schedule: NoiseSchedule, stream: RandomStream, weights=None):
    """Loss plus parameter gradients, sharing one noise draw.

    The returned loss is the per-sample sum over all elements (so a
    zero network scores the element count).  The gradients are of the
    per-element mean of that same quantity, which keeps useful
    learning rates in the usual 1e-3 neighbourhood.  ``weights``
    rescales each channel's share of both.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ParameterError("batch must be a nonempty (B, C, H, W) array")
    w = _channel_weight_column(weights, batch.shape[1])
    noisy, sigmas, z = _perturb(batch, schedule, stream)
    y, cache = net_forward(params, noisy, sigmas)
    resid = sigmas[:, None, None, None] * y.astype(np.float64) + z
    sq = resid**2 if w is None else w * resid**2
    loss = float(np.mean(np.sum(sq, axis=(1, 2, 3))))
    wresid = resid if w is None else w * resid
    dy = (2.0 / resid.size) * sigmas[:, None, None, None] * wresid
    grads = net_backward(params, cache, dy)
    return loss, grads


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    heldout_loss: float
    wall_seconds: float


def _load_split_channels(root: Path, manifest: dict, split: str, modality: str) -> np.ndarray | None:
    dirs = sample_dirs(root, manifest, split)
    if not dirs:
        return None
    stacks = [pair_channels(load_sample(d).truth, modality) for d in dirs]
    return np.stack(stacks)


def train_score(dataset_root, cfg: TrainConfig):
    """Train a score net on a dataset's train split.

    Returns (params, per-epoch log).  Held-out loss is measured on the
    test split with a fixed evaluation stream, so values are comparable
    across epochs; epoch 0 records the untrained network.
    """
    root = Path(dataset_root)
    manifest = load_manifest(root)
    train = _load_split_channels(root, manifest, "train", cfg.modality)
    if train is None:
        raise ParameterError("dataset has no train samples")
    heldout = _load_split_channels(root, manifest, "test", cfg.modality)

    params = init_params(
        MODALITY_CHANNELS[cfg.modality], cfg.schedule, cfg.seed, cfg.base_width
    )
    velocity = {
        name: (np.zeros_like(w), np.zeros_like(b))
        for name, (w, b) in params.layers.items()
    }
    master = RandomStream(cfg.seed, "train")

    def eval_loss(data: np.ndarray | None) -> float:
        if data is None:
            return float("nan")
        # child() rebuilds the stream from scratch, so every evaluation
        # sees the same perturbation draws and losses stay comparable.
        return dsm_loss(params, data, cfg.schedule, master.child("heldout-eval"), cfg.channel_weights)

    start = time.perf_counter()
    logs = [EpochLog(0, eval_loss(train), eval_loss(heldout), 0.0)]
    n = train.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        perm = master.child(f"epoch{epoch}/perm").permutation(n)
        batch_losses = []
        for k, lo in enumerate(range(0, n, cfg.batch_size)):
            batch = train[perm[lo : lo + cfg.batch_size]]
            noise = master.child(f"epoch{epoch}/batch{k}")
            loss, grads = dsm_loss_and_grads(params, batch, cfg.schedule, noise, cfg.channel_weights)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            batch_losses.append(loss)
            for name, (dw, db) in grads.items():
                w, b = params.layers[name]
                vw, vb = velocity[name]
                vw *= cfg.momentum
                vw -= cfg.learning_rate * dw
                vb *= cfg.momentum
                vb -= cfg.learning_rate * db
                w += vw
                b += vb
        train_mean = float(np.mean(batch_losses))
        heldout_loss = eval_loss(heldout)
        # The batch loss is evaluated before the update, so a blow-up on
        # the last batch of an epoch only shows here.
        if not np.isfinite(train_mean) or (heldout is not None and not np.isfinite(heldout_loss)):
            raise DivergenceError(f"non-finite loss after epoch {epoch}")
        logs.append(EpochLog(epoch, train_mean, heldout_loss, time.perf_counter() - start))
    return params, logs


def save_training_log(logs: list[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "heldout_loss", "wall_seconds"])
        for row in logs:
            writer.writerow([row.epoch, row.train_loss, row.heldout_loss, f"{row.wall_seconds:.3f}"])
