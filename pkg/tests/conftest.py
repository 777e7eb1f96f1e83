import json
from pathlib import Path

import numpy as np
import pytest

from p300kit.epochs import EpochSet

GOLDEN_DIR = Path(__file__).parent / "golden"


def load_golden(name: str):
    return json.loads((GOLDEN_DIR / name).read_text())


@pytest.fixture
def golden():
    return load_golden


def make_epochs(n=12, channels=3, samples=20, rate=256.0, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, channels, samples))
    if labels is None:
        labels = (np.arange(n) % 2).astype(np.int64)
    return EpochSet(data, np.asarray(labels), rate)


@pytest.fixture
def epochs_factory():
    return make_epochs
