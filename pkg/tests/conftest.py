import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_records():
    """Eight constant-free synthetic grayscale records."""
    from odlr.synth import synth_records

    return synth_records(8, channels=1, seed=99)
