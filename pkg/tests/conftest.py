import numpy as np
import pytest

# Discrete three-action case shared by the guardian and theory tests:
# accepted = {a1, a2}, rejected agent mass F = 0.7.
MIX_EXPERT = (0.6, 0.3, 0.1)
MIX_AGENT = (0.1, 0.2, 0.7)
MIX_ETA = 0.25
MIX_EXPECTED = (0.52, 0.41, 0.07)


@pytest.fixture
def mix_fixture():
    return np.array(MIX_AGENT), np.array(MIX_EXPERT), MIX_ETA, np.array(MIX_EXPECTED)
