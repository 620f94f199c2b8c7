"""Test configuration helpers for the VQCFD toolkit."""
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure the repository root is importable so top-level modules resolve
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

CALIBRATIONS = ROOT / "calibrations"
CONFIGS = ROOT / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def kolkata_path():
    return str(CALIBRATIONS / "kolkata_like_synthetic.json")


@pytest.fixture
def mumbai_path():
    return str(CALIBRATIONS / "mumbai_like_synthetic.json")
