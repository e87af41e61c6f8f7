import dataclasses

import numpy as np
import pytest

from echonav import tensor as tc
from echonav.checkpoint import read_checkpoint
from echonav.config import PPOHyper
from echonav.errors import ConfigError, TrainingDiverged
from echonav.policy import log_softmax
from echonav.ppo import (EnvironmentFault, EnvPool, ParallelEnvPool, RolloutBuffer, _segments, collect_rollouts,
                         compute_gae, env_seeds, eval_episodes, evaluate_policy, make_policy, ppo_loss,
                         ppo_update, train)
from echonav.world import SoundSplits


def gae_by_sums(rewards, values, dones, bootstrap, gamma, lam):
    """Each advantage as an explicit truncated sum of discounted TD errors."""
    L = len(rewards)
    nxt = np.append(values[1:], bootstrap)
    delta = [rewards[t] + gamma * nxt[t] * (1 - dones[t]) - values[t] for t in range(L)]
    adv = []
    for t in range(L):
        total, w = 0.0, 1.0
        for k in range(t, L):
            total += w * delta[k]
            if dones[k]:
                break
            w *= gamma * lam
        adv.append(total)
    return np.array(adv)


def buffers_equal(a: RolloutBuffer, b: RolloutBuffer) -> bool:
    return all(np.array_equal(getattr(a, f.name), getattr(b, f.name))
               for f in dataclasses.fields(RolloutBuffer) if f.name != "logs") and a.logs == b.logs


class TestGAE:
    def test_terminal_single_step(self):
        adv, ret = compute_gae([2.0], [0.5], [1.0], 9.0, 0.99, 0.95, normalize=False)
        assert adv[0] == 1.5 and ret[0] == 2.0

    def test_bootstrap_single_step(self):
        adv, _ = compute_gae([1.0], [0.0], [0.0], 2.0, 0.5, 0.95, normalize=False)
        assert adv[0] == 2.0

    def test_three_step_recursion(self):
        r, v, d = np.array([1.0, 0.0, 2.0]), np.array([0.5, 0.2, 0.1]), np.array([0.0, 0.0, 0.0])
        adv, _ = compute_gae(r, v, d, 0.3, 0.9, 0.8, normalize=False)
        d2 = 2.0 + 0.9 * 0.3 - 0.1
        d1 = 0.0 + 0.9 * 0.1 - 0.2
        d0 = 1.0 + 0.9 * 0.2 - 0.5
        expected = [d0 + 0.72 * d1 + 0.72 ** 2 * d2, d1 + 0.72 * d2, d2]
        np.testing.assert_allclose(adv, expected, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_explicit_sums_with_episode_breaks(self, seed):
        r = np.random.default_rng(seed)
        L = 12
        rewards, values = r.normal(size=L), r.normal(size=L)
        dones = (r.random(L) < 0.25).astype(float)
        adv, ret = compute_gae(rewards, values, dones, 0.7, 0.97, 0.9, normalize=False)
        np.testing.assert_allclose(adv, gae_by_sums(rewards, values, dones, 0.7, 0.97, 0.9), atol=1e-12)
        np.testing.assert_allclose(ret, adv + values, atol=1e-15)

    def test_batched_columns_independent(self, rng):
        rewards, values = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
        dones = (rng.random((6, 3)) < 0.3).astype(float)
        boot = rng.normal(size=3)
        adv, _ = compute_gae(rewards, values, dones, boot, 0.99, 0.95, normalize=False)
        for e in range(3):
            col, _ = compute_gae(rewards[:, e], values[:, e], dones[:, e], boot[e], 0.99, 0.95, normalize=False)
            np.testing.assert_array_equal(adv[:, e], col)

    def test_normalization(self, rng):
        rewards, values = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        dones = np.zeros((8, 2))
        raw, raw_ret = compute_gae(rewards, values, dones, np.zeros(2), 0.99, 0.95, normalize=False)
        adv, ret = compute_gae(rewards, values, dones, np.zeros(2), 0.99, 0.95)
        assert abs(adv.mean()) < 1e-12 and abs(adv.std() - 1) < 1e-12
        np.testing.assert_array_equal(ret, raw_ret)

    def test_constant_advantages_not_divided(self):
        adv, _ = compute_gae([1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 0.0, 0.9, 0.9)
        np.testing.assert_array_equal(adv, 0.0)

    def test_single_advantage_left_raw(self):
        adv, _ = compute_gae([3.0], [1.0], [1.0], 0.0, 0.9, 0.9)
        assert adv[0] == 2.0


class TestSegments:
    def test_one_chunk_per_env(self):
        segs, seg_len = _segments(8, 4, 2)
        assert seg_len == 8 and segs == [(0, 0), (1, 0), (2, 0), (3, 0)]

    def test_envs_split_into_chunks(self):
        segs, seg_len = _segments(8, 2, 4)
        assert seg_len == 4 and sorted(segs) == [(0, 0), (0, 4), (1, 0), (1, 4)]


class TestRollouts:
    def test_logp_replays_policy(self, tiny_cfg):
        policy = make_policy(tiny_cfg)
        pool = EnvPool.for_training(tiny_cfg)
        buf = collect_rollouts(pool, policy, 1)
        logits, values, _ = policy.act(buf.spec[0], buf.img[0], buf.hiddens[0])
        lp = log_softmax(logits)[np.arange(2), buf.actions[0]]
        np.testing.assert_array_equal(buf.logp[0], lp)
        np.testing.assert_array_equal(buf.values[0], values)
        np.testing.assert_array_equal(buf.starts[0], 1.0)

    def test_done_resets_hidden(self, tiny_cfg):
        policy = make_policy(tiny_cfg)
        buf = collect_rollouts(EnvPool.for_training(tiny_cfg), policy, 30)
        ends = np.argwhere(buf.dones[:-1] == 1.0)
        assert len(ends) > 0
        for t, e in ends:
            np.testing.assert_array_equal(buf.hiddens[t + 1, e], 0.0)
            assert buf.starts[t + 1, e] == 1.0
        assert len(buf.logs) == int(buf.dones.sum())

    def test_bit_identical_with_same_seeds(self, tiny_cfg):
        a = collect_rollouts(EnvPool.for_training(tiny_cfg), make_policy(tiny_cfg), 12)
        b = collect_rollouts(EnvPool.for_training(tiny_cfg), make_policy(tiny_cfg), 12)
        assert buffers_equal(a, b)

    def test_env_seeds_distinct(self):
        first = [np.random.default_rng(s).integers(1 << 62) for s in env_seeds(0, 4)]
        assert len(set(first)) == 4

    def test_environment_fault_reports_step(self, tiny_cfg, monkeypatch):
        pool = EnvPool.for_training(tiny_cfg)
        calls = {"n": 0}
        real = pool.envs[1].step

        def flaky(action):
            calls["n"] += 1
            if calls["n"] == 3:
                raise RuntimeError("sensor fault")
            return real(action)

        monkeypatch.setattr(pool.envs[1], "step", flaky)
        with pytest.raises(EnvironmentFault) as info:
            collect_rollouts(pool, make_policy(tiny_cfg), 5)
        assert info.value.step == 2

    def test_parallel_pool_matches_serial(self, tiny_cfg):
        seeds = env_seeds(0, 2)
        policy = make_policy(tiny_cfg)
        serial = collect_rollouts(EnvPool(tiny_cfg, "heard_train", seeds), policy, 10)
        par = ParallelEnvPool(tiny_cfg, "heard_train", seeds, workers=2)
        try:
            parallel = collect_rollouts(par, policy, 10)
        finally:
            par.close()
        # env streams are identical; policy floats differ only by BLAS rounding across batch shapes
        for name in ("spec", "img", "actions", "rewards", "dones", "starts"):
            np.testing.assert_array_equal(getattr(serial, name), getattr(parallel, name))
        for name in ("logp", "values", "hiddens", "last_values"):
            np.testing.assert_allclose(getattr(serial, name), getattr(parallel, name), rtol=0, atol=1e-12)
        assert serial.logs == parallel.logs


class TestLoss:
    def _setup(self, cfg, horizon=8):
        policy = make_policy(cfg)
        buf = collect_rollouts(EnvPool.for_training(cfg), policy, horizon)
        return policy, buf

    def test_fresh_policy_ratio_one(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg)
        adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values, 0.99, 0.95)
        segs, seg_len = _segments(8, 2, 2)
        _, stats = ppo_loss(policy, buf, segs, seg_len, adv, ret, tiny_cfg.ppo)
        assert stats["clip_frac"] == 0.0
        assert abs(stats["approx_kl"]) < 1e-12
        assert stats["policy_loss"] == pytest.approx(-adv.mean(), abs=1e-12)
        assert stats["value_loss"] == pytest.approx(np.mean((buf.values - ret) ** 2), abs=1e-12)

    def test_loss_gradient(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg, horizon=4)
        adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values, 0.99, 0.95)
        segs, seg_len = _segments(4, 2, 2)
        params = [policy.named_parameters()[0][1], dict(policy.named_parameters())["critic.w"]]
        err = tc.grad_check_all(lambda: ppo_loss(policy, buf, segs, seg_len, adv, ret, tiny_cfg.ppo)[0], params,
                                eps=1e-5)
        assert err < 1e-5

    def test_negative_clip_rejected(self):
        with pytest.raises(ConfigError):
            PPOHyper(clip_eps=-0.1)

    def test_zero_clip_freezes_policy_term(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg)
        hyper = dataclasses.replace(tiny_cfg.ppo, clip_eps=0.0, value_coef=0.0, entropy_coef=0.0)
        adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values, 0.99, 0.95)
        segs, seg_len = _segments(8, 2, 2)
        for _, t in policy.named_parameters():
            t.data = t.data * 1.01
        loss, stats = ppo_loss(policy, buf, segs, seg_len, adv, ret, hyper)
        # every ratio away from 1 is clipped, so the surrogate is the pessimistic bound
        assert stats["clip_frac"] == 1.0
        assert np.isfinite(loss.item())

    def test_update_prefers_advantaged_action(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg, horizon=16)
        buf.rewards = (buf.actions == 1).astype(float)
        buf.dones[:] = 1.0
        buf.values[:] = 0.0
        before = np.exp(log_softmax(policy.act(buf.spec[0], buf.img[0], buf.hiddens[0])[0]))[:, 1]
        hyper = dataclasses.replace(tiny_cfg.ppo, lr=1e-2, epochs=4, entropy_coef=0.0)
        opt = tc.Adam(policy.parameters(), lr=hyper.lr)
        ppo_update(policy, opt, buf, hyper, np.random.default_rng(0))
        after = np.exp(log_softmax(policy.act(buf.spec[0], buf.img[0], buf.hiddens[0])[0]))[:, 1]
        assert np.all(after > before)

    def test_first_minibatch_unclipped(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg)
        report = ppo_update(policy, tc.Adam(policy.parameters(), lr=1e-3), buf, tiny_cfg.ppo,
                            np.random.default_rng(0))
        assert report["first_clip_frac"] == 0.0
        assert abs(report["adv_mean"]) < 1e-12 and report["adv_var"] == pytest.approx(1.0)

    def test_nan_reward_diverges(self, tiny_cfg):
        policy, buf = self._setup(tiny_cfg)
        buf.rewards[3, 0] = np.nan
        with pytest.raises(TrainingDiverged) as info:
            ppo_update(policy, tc.Adam(policy.parameters()), buf, tiny_cfg.ppo, np.random.default_rng(0), update=7)
        assert info.value.dump["update"] == 7 and "param_norms" in info.value.dump


class TestTrain:
    def test_zero_updates_checkpoint_is_init(self, tiny_cfg, tmp_path):
        tiny_cfg.run.updates = 0
        result = train(tiny_cfg, tmp_path)
        state, _, meta = read_checkpoint(tmp_path / "checkpoint.bin")
        init = make_policy(tiny_cfg).state_dict()
        assert meta["updates"] == 0 and result.records == []
        assert all(np.array_equal(state[k], init[k]) for k in init)

    def test_one_update_bit_identical(self, tiny_cfg, tmp_path):
        train(tiny_cfg, tmp_path / "a")
        train(tiny_cfg, tmp_path / "b")
        for name in ("checkpoint.bin", "metrics.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_records(self, tiny_cfg):
        tiny_cfg.run.updates = 2
        tiny_cfg.run.val_interval = 2
        tiny_cfg.run.val_episodes = 2
        seen = []
        records = train(tiny_cfg, progress=seen.append).records
        assert seen == records and [r["update"] for r in records] == [1, 2]
        assert records[0]["val_sr"] is None and records[1]["val_sr"] is not None
        assert records[1]["env_steps"] == 2 * 8 * 2

    def test_parameters_change(self, tiny_cfg):
        trained = train(tiny_cfg).policy.state_dict()
        init = make_policy(tiny_cfg).state_dict()
        assert any(not np.array_equal(trained[k], init[k]) for k in init)

    def test_parallel_workers(self, tiny_cfg):
        tiny_cfg.run.updates = 2
        serial = train(tiny_cfg).records
        tiny_cfg.run.deterministic = False
        tiny_cfg.run.workers = 2
        parallel = train(tiny_cfg).records
        assert [r["episodes"] for r in parallel] == [r["episodes"] for r in serial]
        assert parallel[0]["mean_reward"] == serial[0]["mean_reward"]

    def test_deterministic_mode_forces_one_worker(self, tiny_cfg, tmp_path):
        train(tiny_cfg, tmp_path / "a")
        tiny_cfg.run.workers = 2
        train(tiny_cfg, tmp_path / "b")
        a, _, _ = read_checkpoint(tmp_path / "a" / "checkpoint.bin")
        b, _, _ = read_checkpoint(tmp_path / "b" / "checkpoint.bin")
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestEvaluation:
    def test_plan_is_deterministic(self, tiny_cfg):
        a = eval_episodes(tiny_cfg, "unheard_test", 6, 3)
        b = eval_episodes(tiny_cfg, "unheard_test", 6, 3)
        assert a == b
        held_out = set(SoundSplits.from_world(tiny_cfg.world).test)
        assert all(ep.sound_class in held_out for ep in a)

    def test_results_repeat_and_batching_is_irrelevant(self, tiny_cfg):
        policy = make_policy(tiny_cfg)
        r1, logs1 = evaluate_policy(policy, tiny_cfg, "heard_test", 5, seed=4)
        tiny_cfg.run.eval_batch = 2
        r2, logs2 = evaluate_policy(policy, tiny_cfg, "heard_test", 5, seed=4)
        assert r1 == r2 and logs1 == logs2

    def test_sampled_evaluation_runs(self, tiny_cfg):
        results, logs = evaluate_policy(make_policy(tiny_cfg), tiny_cfg, "heard_val", 3, seed=0, greedy=False)
        assert len(results) == 3 and all(1 <= r.action_count <= 20 for r in results)
