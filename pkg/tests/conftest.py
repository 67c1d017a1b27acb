import numpy as np
import pytest

from csipred.channel_sim import ChannelSequence, SimConfig, generate_sequence


@pytest.fixture
def small_config():
    return SimConfig(n_tx=4, n_rx=2, n_subbands=8, n_paths=4, seed=7)


@pytest.fixture
def small_sequence(small_config):
    return generate_sequence(small_config, 30.0, 40)


def make_sequence_from_array(tensors, config, speed=30.0):
    """Wrap an explicit tensor stack as a ChannelSequence for dataset tests."""
    return ChannelSequence(np.asarray(tensors), speed, config.sample_period, config)
