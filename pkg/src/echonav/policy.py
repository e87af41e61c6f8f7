"""The audio-guided visual perception policy.

Pipeline per step: encode both streams, self-attend the audio frames, let the
visual regions attend over that audio context (guided attention), mean-pool
each stream, concatenate, project to the GRU input, advance the GRU, and read
action logits and a state value off the hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .attention import (AttentionParams, AttentionTrace, FusionConfig, guided_attention_block,
                        self_attention_traced)
from .encoders import LinearParams, ObsConfig, encode_audio, encode_visual
from .errors import ConfigError, InputError, ShapeError
from .tensor import GRUParams, Tensor

ABLATIONS = ("full", "no_sa", "no_ga")
N_ACTIONS = 4


@dataclass
class PolicyConfig:
    dh: int = 128
    din: int = 128
    ablation: str = "full"
    actor_init_scale: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"policy.ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.dh < 1 or self.din < 1:
            raise ConfigError("policy.dh and policy.din must be >= 1")


@dataclass
class FusionParams:
    audio_sa: list = field(default_factory=list)
    visual_sa: list = field(default_factory=list)
    ga: list = field(default_factory=list)
    pos_audio: Tensor | None = None
    pos_visual: Tensor | None = None

    def named(self):
        out = []
        for group in ("audio_sa", "visual_sa", "ga"):
            for i, layer in enumerate(getattr(self, group)):
                out += [(f"{group}.{i}.{k}", t) for k, t in layer.named()]
        for name in ("pos_audio", "pos_visual"):
            if getattr(self, name) is not None:
                out.append((name, getattr(self, name)))
        return out


def agvp_fuse(audio: Tensor, visual: Tensor, params: FusionParams, cfg: FusionConfig,
              ablation: str = "full", return_trace: bool = False):
    """Fuse ``[B, T, d]`` audio and ``[B, N, d]`` visual features into ``[B, 2d]``."""
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    if audio.ndim != 3 or visual.ndim != 3 or audio.shape[0] != visual.shape[0]:
        raise ShapeError(f"agvp_fuse: audio {audio.shape} / visual {visual.shape} must be [B, T, d] / [B, N, d]")
    if audio.shape[1:] != (cfg.T, cfg.d) or visual.shape[1:] != (cfg.N, cfg.d):
        raise ShapeError(f"agvp_fuse: expected T={cfg.T}, N={cfg.N}, d={cfg.d}; got {audio.shape}, {visual.shape}")
    traces = []
    a, v = audio, visual
    if params.pos_audio is not None:
        a = a + params.pos_audio
    if params.pos_visual is not None:
        v = v + params.pos_visual
    if ablation != "no_sa":
        for i, layer in enumerate(params.audio_sa):
            a, tr = self_attention_traced(a, layer, cfg, f"audio_sa.{i}")
            traces.append(tr)
    for i, layer in enumerate(params.visual_sa):
        v, tr = self_attention_traced(v, layer, cfg, f"visual_sa.{i}")
        traces.append(tr)
    if ablation == "no_ga":
        fused = tc.concat([a.mean(axis=1), v.mean(axis=1)], axis=-1)
    elif cfg.audio_queries:
        g = a
        for i, layer in enumerate(params.ga):
            g, tr = guided_attention_block(v, g, layer, cfg, f"ga.{i}")
            traces.append(tr)
        fused = tc.concat([g.mean(axis=1), v.mean(axis=1)], axis=-1)
    else:
        g = v
        for i, layer in enumerate(params.ga):
            g, tr = guided_attention_block(g, a, layer, cfg, f"ga.{i}")
            traces.append(tr)
        fused = tc.concat([a.mean(axis=1), g.mean(axis=1)], axis=-1)
    return (fused, traces) if return_trace else fused


@dataclass
class PolicyState:
    hidden: np.ndarray  # [1, dh]
    step: int = 0

    @classmethod
    def initial(cls, dh: int) -> "PolicyState":
        return cls(np.zeros((1, dh)), 0)


@dataclass
class PolicyOutput:
    logits: Tensor   # [1, 4]
    value: float
    trace: list


class AGVPPolicy:
    """Parameters and forward passes of the full network.

    Parameters are drawn in a fixed order from ``seed``, so two policies built
    with the same configs and seed are bit-identical.
    """

    def __init__(self, fusion: FusionConfig, obs: ObsConfig, cfg: PolicyConfig | None = None, seed: int = 0):
        self.fusion, self.obs, self.cfg = fusion, obs, cfg or PolicyConfig()
        if fusion.T != obs.Tw or fusion.N != obs.n_regions:
            raise ConfigError(
                f"fusion T={fusion.T}, N={fusion.N} must match obs Tw={obs.Tw}, regions={obs.n_regions}")
        rng = np.random.default_rng(seed)
        d, ab = fusion.d, self.cfg.ablation
        self.audio_enc = LinearParams.init(rng, 2 * obs.F, d)
        self.visual_enc = LinearParams.init(rng, obs.patch_dim, d)
        fp = FusionParams()
        if fusion.positional:
            fp.pos_audio = tc.uniform_init(rng, (fusion.T, d), fan_in=d)
            fp.pos_visual = tc.uniform_init(rng, (fusion.N, d), fan_in=d)
        if ab != "no_sa":
            fp.audio_sa = [AttentionParams.init(fusion, rng) for _ in range(fusion.sa_layers)]
        if fusion.ga_uses_visual_sa:
            fp.visual_sa = [AttentionParams.init(fusion, rng) for _ in range(fusion.sa_layers)]
        if ab != "no_ga":
            fp.ga = [AttentionParams.init(fusion, rng) for _ in range(fusion.ga_layers)]
        self.fusion_params = fp
        dh, din = self.cfg.dh, self.cfg.din
        self.fuse = LinearParams.init(rng, 2 * d, din)
        self.gru = GRUParams(
            w_x=tc.uniform_init(rng, (din, 3 * dh), fan_in=dh),
            w_h=tc.uniform_init(rng, (dh, 3 * dh), fan_in=dh),
            b_x=Tensor(np.zeros(3 * dh), requires_grad=True),
            b_h=Tensor(np.zeros(3 * dh), requires_grad=True),
        )
        self.actor = LinearParams.init(rng, dh, N_ACTIONS, scale=self.cfg.actor_init_scale)
        self.critic = LinearParams.init(rng, dh, 1)
        for name, t in self.named_parameters():
            t.name = name

    # -- parameters ---------------------------------------------------------
    def named_parameters(self) -> list:
        out = [(f"audio_enc.{k}", t) for k, t in self.audio_enc.named()]
        out += [(f"visual_enc.{k}", t) for k, t in self.visual_enc.named()]
        out += self.fusion_params.named()
        out += [(f"fuse.{k}", t) for k, t in self.fuse.named()]
        out += [(f"gru.{k}", t) for k, t in self.gru.named()]
        out += [(f"actor.{k}", t) for k, t in self.actor.named()]
        out += [(f"critic.{k}", t) for k, t in self.critic.named()]
        return out

    def parameters(self) -> list:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            raise ShapeError(f"parameter names differ: missing {sorted(set(own) - set(state))}, "
                             f"unexpected {sorted(set(state) - set(own))}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {t.shape}")
            t.data = arr.copy()

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    # -- forward ------------------------------------------------------------
    def encode_fuse(self, spec, img, return_trace: bool = False):
        """Batched ``[B, 2, F, Tw]`` spectrograms and ``[B, H, W, C]`` images to ``[B, 2d]``."""
        audio = encode_audio(spec, self.audio_enc, self.obs)
        visual = encode_visual(img, self.visual_enc, self.obs)
        return agvp_fuse(audio, visual, self.fusion_params, self.fusion, self.cfg.ablation, return_trace)

    def heads(self, h: Tensor) -> tuple:
        return self.actor(h), self.critic(h).reshape(h.shape[0])

    def forward_step(self, spec, img, hidden, return_trace: bool = False):
        """One recurrent step for a batch; returns ``(logits, values, new_hidden[, traces])``."""
        fused, traces = self.encode_fuse(spec, img, return_trace=True)
        h = tc.gru_cell(self.fuse(fused), tc.as_tensor(hidden), self.gru)
        logits, values = self.heads(h)
        return (logits, values, h, traces) if return_trace else (logits, values, h)

    def act(self, spec: np.ndarray, img: np.ndarray, hidden: np.ndarray):
        """Graph-free batched step for rollouts: ``(logits, values, new_hidden)`` as arrays."""
        with tc.no_grad():
            logits, values, h = self.forward_step(spec, img, hidden)
        return logits.data, values.data, h.data

    def evaluate_sequences(self, spec: np.ndarray, img: np.ndarray, h0: np.ndarray, starts: np.ndarray):
        """Replay ``L`` steps of ``B`` sequences with BPTT.

        ``spec``/``img`` are ``[L, B, ...]``; ``starts[t, b]`` is 1 where an
        episode begins at step ``t`` (the hidden state is zeroed there).
        Returns logits ``[L*B, 4]`` and values ``[L*B]`` in time-major order.
        """
        L, B = starts.shape
        fused = self.encode_fuse(spec.reshape((L * B,) + spec.shape[2:]),
                                 img.reshape((L * B,) + img.shape[2:]))
        x = self.fuse(fused).reshape(L, B, self.cfg.din)
        keep = 1.0 - starts.astype(np.float64)
        hs = tc.gru_sequence(x, tc.as_tensor(h0), self.gru, keep)
        return self.heads(hs.reshape(L * B, self.cfg.dh))


def _validate_obs(spec: np.ndarray, img: np.ndarray) -> None:
    if not (np.all(np.isfinite(spec)) and np.all(np.isfinite(img))):
        raise InputError("observation contains non-finite values")


def policy_step(obs, state: PolicyState, policy: AGVPPolicy) -> tuple:
    """Single-environment step from a ``world.Observation``."""
    spec = np.asarray(obs.spectrogram.data)[None]
    img = np.asarray(obs.image.pixels)[None]
    _validate_obs(spec, img)
    if state.hidden.shape != (1, policy.cfg.dh):
        raise ShapeError(f"policy_step: hidden {state.hidden.shape} != (1, {policy.cfg.dh})")
    logits, values, h, traces = policy.forward_step(spec, img, state.hidden, return_trace=True)
    out = PolicyOutput(logits, float(values.data[0]), traces)
    return out, PolicyState(h.data.copy(), state.step + 1)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_action(logits, rng: np.random.Generator | None = None, greedy: bool = False) -> tuple:
    """Categorical draw from ``softmax(logits)``; returns ``(action, log_prob)``.

    Greedy mode takes the argmax (first index on ties) and ignores ``rng``.
    """
    logits = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64).reshape(-1)
    logp = log_softmax(logits)
    if greedy:
        a = int(np.argmax(logits))
    else:
        cdf = np.cumsum(np.exp(logp))
        a = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))
    return a, float(logp[a])


def sample_actions(logits: np.ndarray, rngs, greedy: bool = False) -> tuple:
    """Row-wise :func:`sample_action` with one generator per row."""
    acts, logps = zip(*(sample_action(row, r, greedy) for row, r in zip(logits, rngs)))
    return np.array(acts, dtype=np.int64), np.array(logps)
