"""Shared fixtures: small seeded systems that keep the suite fast."""

from __future__ import annotations

import numpy as np
import pytest

from hbfopt.channel import generate_channel
from hbfopt.config import ClusterParams, ExperimentSpec, SolverControls, SystemConfig
from hbfopt.digital import update_combiners, update_weights
from hbfopt.driver import initialize
from hbfopt.variants import InitStrategy


def small_system(**changes) -> SystemConfig:
    base = dict(
        n_tx=16,
        n_rx=8,
        n_tx_rf=4,
        n_rx_rf=2,
        n_streams=2,
        n_subcarriers=8,
        snr_db=-6.0,
        cluster=ClusterParams(n_clusters=3, n_rays=4),
        controls=SolverControls(outer_cap=6),
    )
    base.update(changes)
    return SystemConfig(**base)


def random_state(channel, config, seed):
    """RandomIni state with MMSE combiners and matching weights."""
    state = initialize(channel, config, InitStrategy.RANDOM, seed)
    state = update_combiners(channel, state, config)
    return update_weights(channel, state, config)


@pytest.fixture
def config() -> SystemConfig:
    return small_system()


@pytest.fixture
def channel(config):
    return generate_channel(config, seed=3)


@pytest.fixture
def state(channel, config):
    return random_state(channel, config, seed=3)


@pytest.fixture
def tiny_config() -> SystemConfig:
    return SystemConfig(n_tx=8, n_rx=4, n_tx_rf=2, n_rx_rf=2, n_streams=2, n_subcarriers=4, snr_db=-6.0)


@pytest.fixture
def tiny_spec() -> ExperimentSpec:
    return ExperimentSpec(
        system=small_system(n_subcarriers=4, controls=SolverControls(outer_cap=3)),
        snr_grid=[-6.0, 0.0],
        variants=["wmmse-ei", "mmse-ei"],
        n_realizations=3,
        init_strategy="random",
        concurrency=2,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
