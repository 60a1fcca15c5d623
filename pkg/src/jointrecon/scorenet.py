"""Noise-conditional convolutional score network, in plain numpy.

A small 3-scale encoder-decoder estimates the score of the noise-smoothed
pair distribution.  The noise level enters as an extra input channel
holding the log-scaled level, normalized against the training schedule's
range.  The final layer is zero-initialized so an untrained network is
exactly the zero score.

Everything (convolutions, pooling, upsampling, backprop) is written out
by hand on arrays of shape (batch, channels, height, width); there is
no ML framework underneath.  Convolutions are 3x3, zero-padded, realized
as nine shifted GEMMs, which keeps both directions reasonably fast on a
single CPU core.  Arrays follow the parameter dtype: float32 for
training speed, float64 when gradients must survive finite-difference
scrutiny.

Heights and widths must be divisible by 4 (two pooling stages).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, GridFormatError, ParameterError
from .grids import ImagePair, pair_to_channels
from .rng import RandomStream
from .schedule import NoiseSchedule

LAYER_ORDER = ("enc1a", "enc1b", "enc2", "mid", "dec2", "dec1", "out")


def layer_shapes(img_channels: int, base_width: int) -> dict[str, tuple[tuple, tuple]]:
    """Weight and bias shapes per layer for the fixed architecture."""
    f = base_width
    cin = img_channels + 1
    return {
        "enc1a": ((f, cin, 3, 3), (f,)),
        "enc1b": ((f, f, 3, 3), (f,)),
        "enc2": ((2 * f, f, 3, 3), (2 * f,)),
        "mid": ((2 * f, 2 * f, 3, 3), (2 * f,)),
        "dec2": ((2 * f, 4 * f, 3, 3), (2 * f,)),
        "dec1": ((f, 3 * f, 3, 3), (f,)),
        "out": ((img_channels, f, 3, 3), (img_channels,)),
    }


@dataclass
class ScoreNetParams:
    """Network weights plus the schedule range they were trained for."""

    img_channels: int
    base_width: int
    sigma_min: float
    sigma_max: float
    seed: int
    layers: dict[str, tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        expected = layer_shapes(self.img_channels, self.base_width)
        if set(self.layers) != set(expected):
            raise ParameterError("layer set does not match the architecture")
        for name, (w, b) in self.layers.items():
            ws, bs = expected[name]
            if w.shape != ws or b.shape != bs:
                raise DimensionError(f"layer {name}: shapes {w.shape}/{b.shape} != {ws}/{bs}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ParameterError(f"layer {name} has non-finite parameters")

    @property
    def dtype(self):
        return self.layers["enc1a"][0].dtype


def param_count(params: ScoreNetParams) -> int:
    return sum(w.size + b.size for w, b in params.layers.values())


def init_params(
    img_channels: int,
    schedule: NoiseSchedule,
    seed: int,
    base_width: int = 16,
    dtype=np.float32,
) -> ScoreNetParams:
    """He-normal initialization, zero biases, zero final layer."""
    if img_channels < 1 or base_width < 1:
        raise ParameterError("channels and width must be positive")
    stream = RandomStream(seed, "scorenet-init")
    layers = {}
    for name, (ws, bs) in layer_shapes(img_channels, base_width).items():
        if name == "out":
            w = np.zeros(ws, dtype=dtype)
        else:
            fan_in = ws[1] * ws[2] * ws[3]
            std = np.sqrt(2.0 / fan_in)
            w = (std * stream.normal(int(np.prod(ws)))).reshape(ws).astype(dtype)
        layers[name] = (w, np.zeros(bs, dtype=dtype))
    return ScoreNetParams(
        img_channels, base_width, schedule.sigma_min, schedule.sigma_max, seed, layers
    )


def _conv3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    bsz, _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    acc = np.zeros((bsz, h, wd, w.shape[0]), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            acc += np.tensordot(xp[:, :, di : di + h, dj : dj + wd], w[:, :, di, dj], axes=([1], [1]))
    return acc.transpose(0, 3, 1, 2) + b[None, :, None, None]


def _conv3_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    bsz, _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    db = dy.sum(axis=(0, 2, 3))
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di : di + h, dj : dj + wd]
            dw[:, :, di, dj] = np.tensordot(dy, xs, axes=([0, 2, 3], [0, 2, 3]))
            dxp[:, :, di : di + h, dj : dj + wd] += np.tensordot(
                dy, w[:, :, di, dj], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def _elu_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Derivative recovered from the output: 1 above zero, y + 1 below.
    return dy * np.where(y > 0, 1.0, y + 1.0).astype(dy.dtype)


def _pool2(x: np.ndarray) -> np.ndarray:
    b, c, h, w = x.shape
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _pool2_backward(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * np.asarray(0.25, dtype=dy.dtype)


def _up2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def _up2_backward(dy: np.ndarray) -> np.ndarray:
    b, c, h, w = dy.shape
    return dy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def _sigma_channel(params: ScoreNetParams, sigmas: np.ndarray, shape) -> np.ndarray:
    span = np.log(params.sigma_max) - np.log(params.sigma_min)
    level = (np.log(sigmas) - np.log(params.sigma_min)) / span
    b, _, h, w = shape
    return np.broadcast_to(level[:, None, None, None], (b, 1, h, w)).astype(params.dtype)


def net_forward(params: ScoreNetParams, x: np.ndarray, sigmas: np.ndarray):
    """Batched forward pass; returns (scores, cache-for-backward)."""
    x = np.asarray(x, dtype=params.dtype)
    if x.ndim != 4 or x.shape[1] != params.img_channels:
        raise DimensionError(
            f"input shape {x.shape} incompatible with {params.img_channels} channels"
        )
    b, _, h, w = x.shape
    if h % 4 or w % 4:
        raise DimensionError(f"height/width must be divisible by 4, got {h}x{w}")
    sigmas = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    if sigmas.shape != (b,):
        raise DimensionError(f"need one sigma per batch element, got {sigmas.shape}")
    if np.any(sigmas <= 0):
        raise ParameterError("sigma must be positive")

    # The raw stack predicts the injected noise: its input is rescaled
    # to unit-ish variance and its output is divided by sigma to become
    # a score.  Both keep activations and gradients O(1) across the
    # whole ladder, which plain SGD needs.
    scale = np.sqrt(1.0 + sigmas**2)
    L = params.layers
    xn = x / scale[:, None, None, None].astype(params.dtype)
    t0 = np.concatenate([xn, _sigma_channel(params, sigmas, x.shape)], axis=1)
    a1 = _elu(_conv3(t0, *L["enc1a"]))
    a2 = _elu(_conv3(a1, *L["enc1b"]))
    p1 = _pool2(a2)
    a3 = _elu(_conv3(p1, *L["enc2"]))
    p2 = _pool2(a3)
    a4 = _elu(_conv3(p2, *L["mid"]))
    c2 = np.concatenate([_up2(a4), a3], axis=1)
    a5 = _elu(_conv3(c2, *L["dec2"]))
    c1 = np.concatenate([_up2(a5), a2], axis=1)
    a6 = _elu(_conv3(c1, *L["dec1"]))
    raw = _conv3(a6, *L["out"])
    y = raw / sigmas[:, None, None, None].astype(params.dtype)
    return y, (t0, a1, a2, p1, a3, p2, a4, c2, a5, c1, a6, sigmas)


def net_backward(params: ScoreNetParams, cache, dy: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients for a given output cotangent ``dy``."""
    t0, a1, a2, p1, a3, p2, a4, c2, a5, c1, a6, sigmas = cache
    L = params.layers
    two_f = 2 * params.base_width
    grads: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    dy = np.asarray(dy, dtype=params.dtype)
    dy = dy / sigmas[:, None, None, None].astype(params.dtype)
    da6, dw, db = _conv3_backward(a6, L["out"][0], dy)
    grads["out"] = (dw, db)
    dc1, dw, db = _conv3_backward(c1, L["dec1"][0], _elu_backward(da6, a6))
    grads["dec1"] = (dw, db)
    da5 = _up2_backward(dc1[:, :two_f])
    skip_a2 = dc1[:, two_f:]
    dc2, dw, db = _conv3_backward(c2, L["dec2"][0], _elu_backward(da5, a5))
    grads["dec2"] = (dw, db)
    da4 = _up2_backward(dc2[:, :two_f])
    skip_a3 = dc2[:, two_f:]
    dp2, dw, db = _conv3_backward(p2, L["mid"][0], _elu_backward(da4, a4))
    grads["mid"] = (dw, db)
    da3 = _pool2_backward(dp2) + skip_a3
    dp1, dw, db = _conv3_backward(p1, L["enc2"][0], _elu_backward(da3, a3))
    grads["enc2"] = (dw, db)
    da2 = _pool2_backward(dp1) + skip_a2
    da1, dw, db = _conv3_backward(a1, L["enc1b"][0], _elu_backward(da2, a2))
    grads["enc1b"] = (dw, db)
    _, dw, db = _conv3_backward(t0, L["enc1a"][0], _elu_backward(da1, a1))
    grads["enc1a"] = (dw, db)
    return grads


def score_net_forward(params: ScoreNetParams, noisy: ImagePair, sigma: float) -> ImagePair:
    """Score estimate for one joint pair at one noise level."""
    if params.img_channels != 3:
        raise DimensionError("joint forward needs a 3-channel network")
    x = pair_to_channels(noisy)[None]
    y, _ = net_forward(params, x, np.array([float(sigma)]))
    y = y[0].astype(np.float64)
    return ImagePair(y[0], y[1] + 1j * y[2])


class NetScore:
    """Sampler-facing adapter around trained parameters."""

    def __init__(self, params: ScoreNetParams):
        self.params = params
        self.channels = params.img_channels

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        y, _ = net_forward(self.params, x[None], np.array([float(sigma)]))
        return y[0].astype(np.float64)


def save_params(params: ScoreNetParams, directory) -> None:
    """Write params.json (descriptor) and params.bin (float32 payload)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    descriptor = {
        "schema": 1,
        "img_channels": params.img_channels,
        "base_width": params.base_width,
        "sigma_min": params.sigma_min,
        "sigma_max": params.sigma_max,
        "seed": params.seed,
        "layers": [
            {
                "name": name,
                "weight": list(params.layers[name][0].shape),
                "bias": list(params.layers[name][1].shape),
            }
            for name in LAYER_ORDER
        ],
    }
    (directory / "params.json").write_text(json.dumps(descriptor, indent=1) + "\n")
    chunks = []
    for name in LAYER_ORDER:
        w, b = params.layers[name]
        chunks.append(np.asarray(w, dtype="<f4").ravel())
        chunks.append(np.asarray(b, dtype="<f4").ravel())
    (directory / "params.bin").write_bytes(np.concatenate(chunks).tobytes())


def load_params(directory) -> ScoreNetParams:
    directory = Path(directory)
    try:
        descriptor = json.loads((directory / "params.json").read_text())
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise GridFormatError(f"bad checkpoint descriptor in {directory}: {exc}") from exc
    img_channels = int(descriptor["img_channels"])
    base_width = int(descriptor["base_width"])
    expected = layer_shapes(img_channels, base_width)
    raw = (directory / "params.bin").read_bytes()
    need = sum(
        int(np.prod(ws)) + int(np.prod(bs)) for ws, bs in expected.values()
    )
    if len(raw) != 4 * need:
        raise GridFormatError(
            f"checkpoint payload has {len(raw)} bytes, expected {4 * need}"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    layers = {}
    pos = 0
    for entry in descriptor["layers"]:
        name = entry["name"]
        ws, bs = expected[name]
        if tuple(entry["weight"]) != ws or tuple(entry["bias"]) != bs:
            raise GridFormatError(f"checkpoint layer {name} has unexpected shapes")
        wn = int(np.prod(ws))
        bn = int(np.prod(bs))
        w = flat[pos : pos + wn].reshape(ws).astype(np.float32)
        pos += wn
        b = flat[pos : pos + bn].reshape(bs).astype(np.float32)
        pos += bn
        layers[name] = (w, b)
    return ScoreNetParams(
        img_channels,
        base_width,
        float(descriptor["sigma_min"]),
        float(descriptor["sigma_max"]),
        int(descriptor["seed"]),
        layers,
    )
