"""Recurrent PPO: rollouts, GAE, the clipped update, evaluation and the training loop."""

from __future__ import annotations

import json
import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .config import PPOHyper, RunConfig
from .errors import EchoNavError, TrainingDiverged
from .metrics import EpisodeResult, summarize
from .policy import AGVPPolicy, sample_actions
from .world import NavEnv, SoundSplits, generate_episode, parse_split, scene_for_seed, scene_pool

log = logging.getLogger(__name__)


class EnvironmentFault(EchoNavError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass
class RolloutBuffer:
    """Time-major ``[L, E, ...]`` arrays for ``E`` environments over ``L`` steps."""

    spec: np.ndarray
    img: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    starts: np.ndarray      # 1 where the observation opens an episode
    hiddens: np.ndarray     # hidden state fed into each step
    last_values: np.ndarray
    logs: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def num_envs(self) -> int:
        return self.actions.shape[1]

    def validate(self) -> None:
        L, E = self.actions.shape
        for name in ("logp", "values", "rewards", "dones", "starts"):
            if getattr(self, name).shape != (L, E):
                raise ValueError(f"buffer field {name} has shape {getattr(self, name).shape}, expected {(L, E)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("buffer values must be finite")

    @classmethod
    def concat_envs(cls, parts: list) -> "RolloutBuffer":
        arrays = {name: np.concatenate([getattr(p, name) for p in parts], axis=1)
                  for name in ("spec", "img", "actions", "logp", "values", "rewards", "dones", "starts", "hiddens")}
        last = np.concatenate([p.last_values for p in parts])
        return cls(**arrays, last_values=last, logs=[rec for p in parts for rec in p.logs])


def _stack_obs(observations) -> tuple:
    return (np.stack([o.spectrogram.data for o in observations]),
            np.stack([o.image.pixels for o in observations]))


class EnvPool:
    """Environments stepped in lockstep, with per-env action generators and hidden states."""

    def __init__(self, cfg: RunConfig, split: str, seeds: list):
        self.envs, self.action_rngs = [], []
        for ss in seeds:
            env_ss, act_ss = _children(ss)
            self.envs.append(NavEnv(cfg.world, cfg.obs, split, env_ss, cfg.reward))
            self.action_rngs.append(np.random.default_rng(act_ss))
        self.obs = [env.reset() for env in self.envs]
        self.hidden = np.zeros((len(self.envs), cfg.policy.dh))
        self.starts = np.ones(len(self.envs))

    @classmethod
    def for_training(cls, cfg: RunConfig) -> "EnvPool":
        return cls(cfg, cfg.run.train_split, env_seeds(cfg.run.seed, cfg.run.num_envs))

    def collect(self, policy: AGVPPolicy, horizon: int) -> RolloutBuffer:
        E = len(self.envs)
        spec0, img0 = _stack_obs(self.obs)
        buf = RolloutBuffer(
            spec=np.empty((horizon,) + spec0.shape), img=np.empty((horizon,) + img0.shape),
            actions=np.empty((horizon, E), dtype=np.int64), logp=np.empty((horizon, E)),
            values=np.empty((horizon, E)), rewards=np.empty((horizon, E)), dones=np.empty((horizon, E)),
            starts=np.empty((horizon, E)), hiddens=np.empty((horizon, E, self.hidden.shape[1])),
            last_values=np.empty(E))
        for t in range(horizon):
            spec, img = _stack_obs(self.obs)
            buf.spec[t], buf.img[t] = spec, img
            buf.starts[t] = self.starts
            buf.hiddens[t] = self.hidden
            logits, values, h = policy.act(spec, img, self.hidden)
            actions, logp = sample_actions(logits, self.action_rngs)
            buf.actions[t], buf.logp[t], buf.values[t] = actions, logp, values
            for i, env in enumerate(self.envs):
                try:
                    obs, reward, done, info = env.step(actions[i])
                    if done:
                        buf.logs.append(info["log"])
                        obs = env.reset()
                except Exception as exc:
                    raise EnvironmentFault(f"environment {i} failed at rollout step {t}: {exc}", t) from exc
                self.obs[i] = obs
                buf.rewards[t, i] = reward
                buf.dones[t, i] = float(done)
                if done:
                    h[i] = 0.0
            self.hidden = h
            self.starts = buf.dones[t].copy()
        spec, img = _stack_obs(self.obs)
        _, buf.last_values[:], _ = policy.act(spec, img, self.hidden)
        return buf


def _children(ss: np.random.SeedSequence) -> tuple:
    # spawn() is stateful; deriving from the spawn key keeps reused seed objects reproducible
    return tuple(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,), pool_size=ss.pool_size)
                 for k in range(2))


def env_seeds(seed: int, n: int) -> list:
    return np.random.SeedSequence([int(seed), 0xE2F]).spawn(n)


def collect_rollouts(envs, policy: AGVPPolicy, horizon: int) -> RolloutBuffer:
    """``horizon`` steps from every environment of ``envs`` (an ``EnvPool`` or ``ParallelEnvPool``)."""
    buf = envs.collect(policy, horizon)
    buf.validate()
    return buf


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float,
                normalize: bool = True) -> tuple:
    """Generalized advantage estimates and returns for ``[L, ...]`` arrays.

    ``returns`` use the raw advantages; the advantages themselves are
    normalized to zero mean and unit variance when there is more than one.
    """
    rewards, values, dones = (np.asarray(a, dtype=np.float64) for a in (rewards, values, dones))
    L = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    running = np.zeros_like(next_value)
    for t in range(L - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    returns = adv + values
    if normalize and adv.size > 1:
        adv = adv - adv.mean()
        std = adv.std()
        if std > 1e-12:
            adv = adv / std
    return adv, returns


def _segments(L: int, E: int, minibatches: int) -> tuple:
    chunks = math.ceil(minibatches / E)
    seg_len = L // chunks
    return [(e, c * seg_len) for c in range(chunks) for e in range(E)], seg_len


def ppo_loss(policy: AGVPPolicy, buf: RolloutBuffer, segs, seg_len: int, adv, returns, hyper: PPOHyper):
    envs = np.array([e for e, _ in segs])
    t0s = np.array([t for _, t in segs])
    rows = t0s[None, :] + np.arange(seg_len)[:, None]          # [seg_len, B]
    cols = np.broadcast_to(envs[None, :], rows.shape)
    starts = buf.starts[rows, cols].copy()
    logits, values = policy.evaluate_sequences(buf.spec[rows, cols], buf.img[rows, cols],
                                               buf.hiddens[t0s, envs], starts)
    actions = buf.actions[rows, cols].reshape(-1)
    old_logp = buf.logp[rows, cols].reshape(-1)
    a = adv[rows, cols].reshape(-1)
    ret = returns[rows, cols].reshape(-1)

    logp_all = tc.log_softmax_lastdim(logits)
    logp = logp_all[np.arange(actions.size), actions]
    ratio = tc.exp(logp - old_logp)
    surr = tc.minimum(ratio * a, tc.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * a)
    policy_loss = -surr.mean()
    err = values - ret
    value_loss = (err * err).mean()
    entropy = -(tc.exp(logp_all) * logp_all).sum(axis=-1).mean()
    loss = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy
    r = ratio.data
    stats = {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "clip_frac": float(np.mean(np.abs(r - 1.0) > hyper.clip_eps)),
        "approx_kl": float(np.mean((r - 1.0) - np.log(r))),
    }
    return loss, stats


def ppo_update(policy: AGVPPolicy, optimizer: tc.Adam, buf: RolloutBuffer, hyper: PPOHyper,
               rng: np.random.Generator, update: int = 0) -> dict:
    """Clipped-surrogate epochs over minibatches of whole sequence segments."""
    adv, returns = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values, hyper.gamma, hyper.lam)
    segs, seg_len = _segments(buf.horizon, buf.num_envs, hyper.minibatches)
    params = policy.parameters()
    totals, count, first_clip = {}, 0, None
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(segs))
        for mb, idx in enumerate(np.array_split(order, min(hyper.minibatches, len(segs)))):
            loss, stats = ppo_loss(policy, buf, [segs[i] for i in idx], seg_len, adv, returns, hyper)
            if not np.isfinite(loss.item()):
                dump = {"update": update, "epoch": epoch, "minibatch": mb, **stats,
                        "param_norms": {n: float(np.linalg.norm(t.data)) for n, t in policy.named_parameters()}}
                raise TrainingDiverged(f"non-finite PPO loss at update {update}, epoch {epoch}, minibatch {mb}", dump)
            optimizer.zero_grad()
            tc.backward(loss)
            stats["grad_norm"] = tc.clip_grad_norm(params, hyper.max_grad_norm)
            optimizer.step()
            if first_clip is None:
                first_clip = stats["clip_frac"]
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    report = {k: v / count for k, v in totals.items()}
    report["first_clip_frac"] = first_clip
    report["adv_mean"] = float(adv.mean())
    report["adv_var"] = float(adv.var())
    return report


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_episodes(cfg: RunConfig, split: str, episodes: int, seed: int) -> list:
    """A fixed, seed-determined list of episodes for ``split``."""
    rng = np.random.default_rng([int(seed), 0xE7A1])
    sounds = SoundSplits.from_world(cfg.world)
    pool = scene_pool(cfg.world, split)
    grids = {}
    out = []
    for _ in range(episodes):
        s = pool[int(rng.integers(len(pool)))]
        if s not in grids:
            grids[s] = scene_for_seed(s, cfg.world)
        out.append(generate_episode(grids[s], rng, split, sounds, cfg.world.min_geodesic, cfg.world.max_steps))
    return out


def evaluate_policy(policy: AGVPPolicy, cfg: RunConfig, split: str, episodes: int, seed: int,
                    greedy: bool = True) -> tuple:
    """Run ``episodes`` episodes; returns ``(EpisodeResult list, episode-log records)``."""
    parse_split(split)
    plan = eval_episodes(cfg, split, episodes, seed)
    logs = [None] * len(plan)
    batch = cfg.run.eval_batch
    for lo in range(0, len(plan), batch):
        ids = list(range(lo, min(lo + batch, len(plan))))
        envs = [NavEnv(cfg.world, cfg.obs, split, [seed, i], cfg.reward) for i in ids]
        obs = [env.reset(plan[i], noise_seed=[int(seed), i, 1]) for env, i in zip(envs, ids)]
        rngs = [np.random.default_rng([int(seed), i, 2]) for i in ids]
        hidden = np.zeros((len(ids), cfg.policy.dh))
        live = list(range(len(ids)))
        while live:
            spec, img = _stack_obs([obs[j] for j in live])
            logits, _, h = policy.act(spec, img, hidden[live])
            acts, _ = sample_actions(logits, [rngs[j] for j in live], greedy=greedy)
            still = []
            for k, j in enumerate(live):
                o, _, done, info = envs[j].step(acts[k])
                hidden[j] = h[k]
                obs[j] = o
                if done:
                    logs[ids[j]] = info["log"]
                else:
                    still.append(j)
            live = still
    return [EpisodeResult.from_log(r) for r in logs], logs


# ---------------------------------------------------------------------------
# parallel rollout workers
# ---------------------------------------------------------------------------

def _worker_main(conn, cfg_dict: dict, split: str, seeds: list):
    from .config import from_dict

    cfg = from_dict(cfg_dict)
    pool = EnvPool(cfg, split, seeds)
    policy = AGVPPolicy(cfg.fusion, cfg.obs, cfg.policy, seed=cfg.run.seed)
    while True:
        msg = conn.recv()
        if msg[0] == "close":
            break
        _, state, horizon = msg
        try:
            policy.load_state_dict(state)
            conn.send(("ok", pool.collect(policy, horizon)))
        except Exception as exc:  # forwarded to the parent
            conn.send(("error", exc))


class ParallelEnvPool:
    """Environments split across worker processes, each holding a policy replica."""

    def __init__(self, cfg: RunConfig, split: str, seeds: list, workers: int):
        ctx = mp.get_context("fork")
        groups = [list(g) for g in np.array_split(np.arange(len(seeds)), workers) if len(g)]
        self.conns, self.procs = [], []
        for g in groups:
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_worker_main, args=(child, cfg.to_dict(), split, [seeds[i] for i in g]),
                               daemon=True)
            proc.start()
            self.conns.append(parent)
            self.procs.append(proc)

    def collect(self, policy: AGVPPolicy, horizon: int) -> RolloutBuffer:
        state = policy.state_dict()
        for c in self.conns:
            c.send(("collect", state, horizon))
        parts = []
        for c in self.conns:
            status, payload = c.recv()
            if status == "error":
                raise payload
            parts.append(payload)
        return RolloutBuffer.concat_envs(parts)

    def close(self) -> None:
        for c in self.conns:
            c.send(("close",))
        for p in self.procs:
            p.join(timeout=5)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    policy: AGVPPolicy
    records: list
    optimizer: tc.Adam


def make_policy(cfg: RunConfig) -> AGVPPolicy:
    return AGVPPolicy(cfg.fusion, cfg.obs, cfg.policy, seed=cfg.run.seed)


def train(cfg: RunConfig, out_dir=None, progress=None) -> TrainResult:
    """Alternate rollout collection and PPO updates for ``cfg.run.updates`` iterations.

    With ``out_dir`` set, writes ``metrics.jsonl`` (one record per update) and
    ``checkpoint.bin``.
    """
    from .checkpoint import save_checkpoint

    cfg.validate()
    policy = make_policy(cfg)
    optimizer = tc.Adam(policy.parameters(), lr=cfg.ppo.lr, eps=cfg.ppo.adam_eps)
    update_rng = np.random.default_rng([cfg.run.seed, 0x0DD])
    workers = 1 if cfg.run.deterministic else min(cfg.run.workers, cfg.run.num_envs)
    seeds = env_seeds(cfg.run.seed, cfg.run.num_envs)
    pool = (ParallelEnvPool(cfg, cfg.run.train_split, seeds, workers) if workers > 1
            else EnvPool(cfg, cfg.run.train_split, seeds))
    metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("")
    records = []
    val = {"val_spl": None, "val_sr": None, "val_sna": None}
    try:
        for update in range(cfg.run.updates):
            buf = collect_rollouts(pool, policy, cfg.ppo.horizon)
            report = ppo_update(policy, optimizer, buf, cfg.ppo, update_rng, update)
            finished = [EpisodeResult.from_log(r) for r in buf.logs]
            record = {
                "update": update + 1,
                "env_steps": (update + 1) * cfg.ppo.horizon * cfg.run.num_envs,
                "mean_reward": float(buf.rewards.mean()),
                "episodes": len(finished),
                "train_sr": summarize(finished)["sr"] if finished else None,
                **{k: report[k] for k in ("policy_loss", "value_loss", "entropy", "clip_frac",
                                          "approx_kl", "grad_norm")},
            }
            evaluated = cfg.run.val_interval and ((update + 1) % cfg.run.val_interval == 0
                                                  or update + 1 == cfg.run.updates)
            if evaluated and cfg.run.val_episodes:
                results, _ = evaluate_policy(policy, cfg, cfg.run.val_split, cfg.run.val_episodes,
                                             seed=cfg.run.seed + 1)
                s = summarize(results)
                val = {"val_spl": s["spl"], "val_sr": s["sr"], "val_sna": s["sna"]}
                record.update(val)
            else:
                record.update({k: None for k in val})
            records.append(record)
            if metrics_path is not None:
                with open(metrics_path, "a") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            if progress is not None:
                progress(record)
            log.info("update %d reward %.4f train_sr %s", update + 1, record["mean_reward"], record["train_sr"])
    finally:
        if isinstance(pool, ParallelEnvPool):
            pool.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.bin", policy, cfg, {"updates": cfg.run.updates})
    return TrainResult(policy, records, optimizer)
