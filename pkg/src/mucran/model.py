"""Encoder/regressor pair construction and the three trainable variants.

The encoder turns a volume into a feature vector through strided convolutions
and a final plain dense layer (no normalization) with a smooth activation. The
regressor maps features to the output rows through two dense layers and a
per-row softmax. All three variants share this structure; "baseline" emits only
the label row, "mucran" and "confounded" emit label plus confound rows and
differ only in how they are trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, InputError
from .nn import Conv3dStrided, Dense, Network, SmoothLeaky, SoftmaxRows
from .outputs import OutputArray, OutputLayout

VARIANTS = ("mucran", "baseline", "confounded")

DEFAULT_INPUT_DIM = 16
DEFAULT_FEATURE_WIDTH = 64
DEFAULT_CONV_CHANNELS = (4, 8, 16)


@dataclass
class ModelPair:
    """An encoder network, a regressor network, and how they are meant to train."""

    encoder: Network
    regressor: Network
    variant: str
    layout: OutputLayout
    input_dims: Tuple[int, int, int]
    feature_width: int
    conv_channels: Tuple[int, ...]
    seed: int

    @property
    def head_layout(self) -> OutputLayout:
        """Row structure actually emitted: full for mucran/confounded, label-only for baseline."""
        return self.layout.label_only() if self.variant == "baseline" else self.layout

    def n_params(self) -> int:
        return self.encoder.n_params() + self.regressor.n_params()


def _as_dims(input_dims: Union[int, Sequence[int]]) -> Tuple[int, int, int]:
    if isinstance(input_dims, (int, np.integer)):
        dims = (int(input_dims),) * 3
    else:
        dims = tuple(int(d) for d in input_dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"input dims must be three positive ints, got {dims}")
    return dims


def build(variant: str, layout: OutputLayout,
          input_dims: Union[int, Sequence[int]] = DEFAULT_INPUT_DIM,
          feature_width: int = DEFAULT_FEATURE_WIDTH,
          conv_channels: Sequence[int] = DEFAULT_CONV_CHANNELS,
          seed: int = 0, dtype=np.float32) -> ModelPair:
    """Deterministically construct a ModelPair for the given variant and layout."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    dims = _as_dims(input_dims)
    conv_channels = tuple(int(c) for c in conv_channels)
    if feature_width < 1 or (conv_channels and min(conv_channels) < 1):
        raise ConfigError("feature width and conv channels must be positive")
    rng = np.random.default_rng(seed)

    enc_layers = []
    in_ch, cur = 1, dims
    for out_ch in conv_channels:
        conv = Conv3dStrided(in_ch, out_ch, rng=rng, dtype=dtype)
        cur = conv.out_dims(cur)
        enc_layers += [conv, SmoothLeaky(dtype=dtype)]
        in_ch = out_ch
    flat = in_ch * int(np.prod(cur))
    enc_layers += [Dense(flat, feature_width, rng=rng, dtype=dtype),
                   SmoothLeaky(dtype=dtype)]
    encoder = Network(enc_layers, input_shape=(1,) + dims)

    arities = ((layout.label_arity,) if variant == "baseline" else layout.arities)
    out_width = sum(arities)
    reg_layers = [
        Dense(feature_width, feature_width, rng=rng, dtype=dtype),
        SmoothLeaky(dtype=dtype),
        Dense(feature_width, out_width, rng=rng, dtype=dtype),
        SoftmaxRows(arities, dtype=dtype),
    ]
    regressor = Network(reg_layers, input_shape=(feature_width,))

    return ModelPair(encoder, regressor, variant, layout, dims, feature_width,
                     conv_channels, seed)


def as_batch(pair: ModelPair, volumes: np.ndarray) -> np.ndarray:
    """Validate volumes against the pair and add batch/channel axes as needed."""
    v = np.asarray(volumes)
    if v.shape == pair.input_dims:
        v = v[None]
    if v.ndim == 2 and v.shape[1] == int(np.prod(pair.input_dims)):
        v = v.reshape((v.shape[0],) + pair.input_dims)
    if v.ndim != 4 or tuple(v.shape[1:]) != pair.input_dims:
        raise InputError(
            f"volumes of shape {np.asarray(volumes).shape} do not match "
            f"model input dims {pair.input_dims}"
        )
    return v[:, None]


def forward_flat(pair: ModelPair, volumes: np.ndarray) -> np.ndarray:
    """Batched probabilities as a flat (batch, width) matrix."""
    features = pair.encoder.forward(as_batch(pair, volumes))
    return pair.regressor.forward(features)


def predict(pair: ModelPair, volume: np.ndarray) -> OutputArray:
    """Per-row probability vectors for a single volume."""
    flat = forward_flat(pair, volume)
    return OutputArray.from_flat(flat[0], pair.head_layout)
