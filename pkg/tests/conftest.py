import os

import hypothesis
import numpy as np
import pytest
import torch

np.seterr(all="warn")

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(12345)
