"""Self-Attention and audio-guided Guided-Attention blocks.

Both blocks share one transformer layout::

    mid = LayerNorm(query + MHA(query, context))
    out = LayerNorm(mid + FFN(mid)),   FFN(z) = ReLU(z W1 + b1) W2 + b2

Self-attention uses ``context = query``.  Guided attention takes its queries
from the visual regions and its keys/values from the self-attended audio
sequence, so the output keeps the visual shape ``B x N x d``.  Logits are
divided by ``sqrt(d)`` (the full model width) unless ``per_head_scale`` asks
for the conventional ``sqrt(d / h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class FusionConfig:
    d: int = 64
    h: int = 4
    d_ff: int = 128
    T: int = 8
    N: int = 16
    per_head_scale: bool = False
    # swaps roles: queries from audio, keys/values from vision
    audio_queries: bool = False
    ga_uses_visual_sa: bool = False
    sa_layers: int = 1
    ga_layers: int = 1
    positional: bool = False
    ln_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d", "h", "d_ff", "T", "N", "sa_layers", "ga_layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"fusion.{name} must be >= 1, got {getattr(self, name)}")
        if self.d % self.h:
            raise ConfigError(f"fusion.d ({self.d}) must be divisible by fusion.h ({self.h})")
        if self.ln_eps <= 0:
            raise ConfigError("fusion.ln_eps must be positive")

    @property
    def d_head(self) -> int:
        return self.d // self.h

    @property
    def scale(self) -> float:
        return math.sqrt(self.d_head if self.per_head_scale else self.d)


@dataclass
class AttentionParams:
    """Weights of one SA or GA layer.

    ``wq``/``wk``/``wv`` are ``d x d``; head ``i`` owns columns
    ``i*d/h:(i+1)*d/h``, i.e. ``W_i^Q = wq[:, i*dk:(i+1)*dk]``.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor

    @classmethod
    def init(cls, cfg: FusionConfig, rng: np.random.Generator) -> "AttentionParams":
        d, f = cfg.d, cfg.d_ff
        u = lambda shape: tc.uniform_init(rng, shape)
        return cls(
            wq=u((d, d)), wk=u((d, d)), wv=u((d, d)), wo=u((d, d)),
            w1=u((d, f)), b1=Tensor(np.zeros(f), requires_grad=True),
            w2=u((f, d)), b2=Tensor(np.zeros(d), requires_grad=True),
            ln1_g=Tensor(np.ones(d), requires_grad=True), ln1_b=Tensor(np.zeros(d), requires_grad=True),
            ln2_g=Tensor(np.ones(d), requires_grad=True), ln2_b=Tensor(np.zeros(d), requires_grad=True),
        )

    def named(self):
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]

    def head(self, i: int, dk: int) -> tuple:
        """Per-head ``(W_i^Q, W_i^K, W_i^V)`` as arrays."""
        cols = slice(i * dk, (i + 1) * dk)
        return self.wq.data[:, cols], self.wk.data[:, cols], self.wv.data[:, cols]


@dataclass
class AttentionTrace:
    layer: str
    weights: np.ndarray  # [B, h, queries, keys]
    extra: list = field(default_factory=list)

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=-1)


def _check3(x: Tensor, what: str, d: int, length: int | None = None) -> None:
    if x.ndim != 3 or x.shape[-1] != d or (length is not None and x.shape[1] != length):
        want = f"[B, {length if length is not None else 'L'}, {d}]"
        raise ShapeError(f"{what}: expected {want}, got {x.shape}")


def multi_head_attention(query: Tensor, context: Tensor, p: AttentionParams,
                         cfg: FusionConfig) -> tuple[Tensor, np.ndarray]:
    """Concatenated heads of ``softmax(q Wq (c Wk)^T / scale) c Wv``, projected by ``Wo``."""
    B, Lq, d = query.shape
    Lk = context.shape[1]
    if context.shape[0] != B:
        raise ShapeError(f"attention: batch mismatch between {query.shape} and {context.shape}")
    h, dk = cfg.h, cfg.d_head
    q = tc.linear(query, p.wq).reshape(B, Lq, h, dk).transpose(0, 2, 1, 3)
    k = tc.linear(context, p.wk).reshape(B, Lk, h, dk).transpose(0, 2, 3, 1)
    v = tc.linear(context, p.wv).reshape(B, Lk, h, dk).transpose(0, 2, 1, 3)
    weights = tc.softmax_lastdim(tc.matmul(q, k) * (1.0 / cfg.scale))
    heads = tc.matmul(weights, v).transpose(0, 2, 1, 3).reshape(B, Lq, d)
    return tc.linear(heads, p.wo), weights.data


def mhga(V: Tensor, A_sa: Tensor, p: AttentionParams, cfg: FusionConfig) -> Tensor:
    """Multi-head guided attention: visual queries over audio keys/values."""
    _check3(V, "mhga visual input", cfg.d, cfg.N)
    _check3(A_sa, "mhga audio context", cfg.d, cfg.T)
    out, _ = multi_head_attention(V, A_sa, p, cfg)
    return out


def ffn(Z: Tensor, p: AttentionParams) -> Tensor:
    if Z.shape[-1] != p.w1.shape[0]:
        raise ShapeError(f"ffn: input last dim {Z.shape[-1]} != {p.w1.shape[0]}")
    return tc.linear(tc.relu(tc.linear(Z, p.w1, p.b1)), p.w2, p.b2)


def _block(query: Tensor, context: Tensor, p: AttentionParams, cfg: FusionConfig, layer: str):
    att, weights = multi_head_attention(query, context, p, cfg)
    mid = tc.layer_norm(query + att, p.ln1_g, p.ln1_b, cfg.ln_eps)
    out = tc.layer_norm(mid + ffn(mid, p), p.ln2_g, p.ln2_b, cfg.ln_eps)
    return out, AttentionTrace(layer, weights)


def self_attention(X: Tensor, p: AttentionParams, cfg: FusionConfig,
                   layer: str = "sa") -> Tensor:
    _check3(X, "self_attention input", cfg.d)
    out, _ = _block(X, X, p, cfg, layer)
    return out


def self_attention_traced(X: Tensor, p: AttentionParams, cfg: FusionConfig,
                          layer: str = "sa") -> tuple[Tensor, AttentionTrace]:
    _check3(X, "self_attention input", cfg.d)
    return _block(X, X, p, cfg, layer)


def guided_attention_block(V: Tensor, A_sa: Tensor, p: AttentionParams, cfg: FusionConfig,
                           layer: str = "ga") -> tuple[Tensor, AttentionTrace]:
    """Audio-guided visual enhancement; returns ``(V_ga, trace)``.

    With ``cfg.audio_queries`` the roles swap and the block returns an
    audio-shaped ``B x T x d`` output instead.
    """
    _check3(V, "guided attention visual input", cfg.d, cfg.N)
    _check3(A_sa, "guided attention audio context", cfg.d, cfg.T)
    if V.shape[0] != A_sa.shape[0]:
        raise ShapeError(f"guided attention: batch mismatch {V.shape} vs {A_sa.shape}")
    if cfg.audio_queries:
        return _block(A_sa, V, p, cfg, layer)
    return _block(V, A_sa, p, cfg, layer)
