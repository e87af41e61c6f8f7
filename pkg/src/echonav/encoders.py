"""Linear frame and patch embeddings for the two sensory streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .errors import ConfigError, InputError, ShapeError
from .tensor import Tensor


@dataclass
class ObsConfig:
    F: int = 16          # frequency bins
    Tw: int = 8          # spectrogram frames
    Hv: int = 16
    Wv: int = 16
    patch: int = 4
    mode: str = "depth"  # depth | rgb

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("F", "Tw", "Hv", "Wv", "patch"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"obs.{name} must be >= 1")
        if self.mode not in ("depth", "rgb"):
            raise ConfigError(f"obs.mode must be 'depth' or 'rgb', got {self.mode!r}")
        if self.Hv % self.patch or self.Wv % self.patch:
            raise ConfigError(
                f"obs: image {self.Hv}x{self.Wv} is not divisible into {self.patch}x{self.patch} patches")

    @property
    def channels(self) -> int:
        return 1 if self.mode == "depth" else 3

    @property
    def n_regions(self) -> int:
        return (self.Hv // self.patch) * (self.Wv // self.patch)

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.channels


@dataclass
class Spectrogram:
    """Binaural magnitudes, shape ``[2, F, Tw]`` (left, right)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise InputError(f"spectrogram must be [2, F, Tw], got {self.data.shape}")
        if not np.all(np.isfinite(self.data)) or (self.data < 0).any():
            raise InputError("spectrogram magnitudes must be finite and nonnegative")

    @property
    def left(self) -> np.ndarray:
        return self.data[0]

    @property
    def right(self) -> np.ndarray:
        return self.data[1]


@dataclass
class EgoImage:
    """Egocentric image, ``[Hv, Wv, C]`` with values in [0, 1]; C is 1 (depth) or 3 (rgb)."""

    mode: str
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        want_c = 1 if self.mode == "depth" else 3
        if self.pixels.ndim != 3 or self.pixels.shape[2] != want_c:
            raise InputError(f"{self.mode} image must be [H, W, {want_c}], got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)) or self.pixels.min() < 0 or self.pixels.max() > 1:
            raise InputError("image values must lie in [0, 1]")


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, fan_in: int, fan_out: int, scale: float = 1.0) -> "LinearParams":
        return cls(tc.uniform_init(rng, (fan_in, fan_out), scale=scale),
                   Tensor(np.zeros(fan_out), requires_grad=True))

    def named(self):
        return [("w", self.w), ("b", self.b)]

    def __call__(self, x: Tensor) -> Tensor:
        return tc.linear(x, self.w, self.b)


def _batch(x, ndim: int) -> Tensor:
    if isinstance(x, Spectrogram):
        x = x.data
    elif isinstance(x, EgoImage):
        x = x.pixels
    x = tc.as_tensor(x)
    if x.ndim == ndim - 1:
        x = x.reshape((1,) + x.shape)
    return x


def encode_audio(spec, params: LinearParams, cfg: ObsConfig) -> Tensor:
    """``[B, 2, F, Tw]`` magnitudes to ``[B, Tw, d]`` frame features.

    Each frame is ``log1p`` compressed and its left and right bins are
    concatenated (left first) before projection.
    """
    x = _batch(spec, 4)
    B, ch, F, Tw = x.shape
    if ch != 2 or F != cfg.F or params.w.shape[0] != 2 * F:
        raise ShapeError(
            f"encode_audio: spectrogram {x.shape} incompatible with F={cfg.F} and weight {params.w.shape}")
    frames = tc.log1p(x).transpose(0, 3, 1, 2).reshape(B, Tw, 2 * F)
    return params(frames)


def patchify(img: Tensor, p: int) -> Tensor:
    """``[B, H, W, C]`` to ``[B, N, p*p*C]``, regions in row-major order."""
    B, H, W, C = img.shape
    if H % p or W % p:
        raise ConfigError(f"image {H}x{W} is not divisible into {p}x{p} patches")
    return (img.reshape(B, H // p, p, W // p, p, C)
               .transpose(0, 1, 3, 2, 4, 5)
               .reshape(B, (H // p) * (W // p), p * p * C))


def encode_visual(img, params: LinearParams, cfg: ObsConfig) -> Tensor:
    x = _batch(img, 4)
    if x.shape[3] != cfg.channels or params.w.shape[0] != cfg.patch_dim:
        raise ShapeError(f"encode_visual: image {x.shape} incompatible with weight {params.w.shape}")
    return params(patchify(x, cfg.patch))
