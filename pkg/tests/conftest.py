import numpy as np
import pytest

from echonav.attention import AttentionParams, FusionConfig
from echonav.config import load_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_fusion():
    return FusionConfig(d=8, h=2, d_ff=12, T=3, N=4)


@pytest.fixture
def small_params(small_fusion):
    return AttentionParams.init(small_fusion, np.random.default_rng(5))


TINY_OVERRIDES = [
    "world.layout='open'", "world.min_size=7", "world.max_size=7", "world.max_steps=20",
    "fusion.d=8", "fusion.h=2", "fusion.d_ff=8", "fusion.T=4", "fusion.N=4",
    "obs.F=4", "obs.Tw=4", "obs.Hv=8", "obs.Wv=8", "obs.patch=4",
    "policy.dh=8", "policy.din=8",
    "ppo.horizon=8", "ppo.epochs=1", "ppo.minibatches=2",
    "run.num_envs=2", "run.updates=1", "run.val_interval=0", "run.val_episodes=0", "run.eval_batch=4",
]


@pytest.fixture
def tiny_cfg():
    """A run config small enough to train for a few updates inside a unit test."""
    return load_config(None, TINY_OVERRIDES)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then fail the test if the criterion was missed."""

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
