import math
import sys
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from dicke_algebra import BellCoefficients, MeasurementParams  # noqa: E402

SEED = 20240611


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def reference_params():
    return MeasurementParams(math.pi / 6, 5 * math.pi / 6)


@pytest.fixture
def reference_alpha():
    """-2 S0 + S00/2 - S01 + S11/2, maximally violated at (pi/6, 5pi/6)."""
    return BellCoefficients(2, np.array([-2.0, 0.0, 0.5, -1.0, 0.5]))


@pytest.fixture
def quarter_params():
    return MeasurementParams(math.pi / 4, -math.pi / 4)


@pytest.fixture
def quarter_alpha():
    return BellCoefficients(2, np.array([-2.0, 0.0, 0.5, 1.0, 0.5]))
