import numpy as np
import pytest
import torch

from posefuse3d_ki.body import default_camera, default_template
from posefuse3d_ki.dataset import MotionSpec, generate_clip


@pytest.fixture(scope="session")
def template():
    return default_template()


@pytest.fixture(scope="session")
def camera64():
    return default_camera((64, 64))


@pytest.fixture(scope="session")
def clip25(template, camera64):
    """One 25-frame clip with moderate motion, shared across tests."""
    return generate_clip(3, MotionSpec(), camera64, template, 25)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    np.random.seed(0)
