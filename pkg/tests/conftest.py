"""Shared fixtures: one session-wide body model and small synthetic cases."""

import numpy as np
import pytest

from mvrectify.bodymodel.blendshape import build_default_model
from mvrectify.bodymodel.synth import synthesize_identity


@pytest.fixture(scope="session")
def body_model():
    return build_default_model()


@pytest.fixture(scope="session")
def tiny_sample(body_model):
    # 6 refs at 32px keeps every consumer test under a second
    return synthesize_identity(42, body_model, n_refs=6, resolution=32)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
