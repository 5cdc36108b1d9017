import numpy as np
import pytest

from corrodet import model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_arch(input_size=8):
    return model.ArchConfig(
        stem_channels=2, stage_channels=[2, 3], blocks_per_stage=1, input_size=input_size
    )


def random_image_array(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
