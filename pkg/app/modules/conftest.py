import os

import numpy as np
import pytest

os.environ.setdefault("RASNET_ENV", "testing")

from app import create_app  # noqa: E402
from app.modules.dataset.models import Sample, SyntheticSpec  # noqa: E402
from app.modules.dataset.services import DatasetService, normalize_image  # noqa: E402
from app.modules.evaluation.models import GroundTruthMask  # noqa: E402
from app.modules.network.models import NetworkSpec  # noqa: E402
from app.modules.network.services import NetworkService  # noqa: E402


@pytest.fixture(scope="session")
def test_app():
    """Create and configure a new app instance for each test session."""
    return create_app("testing")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_spec():
    """A toy network small enough for per-test forward/backward passes."""
    return NetworkSpec.toy(stage_channels=(4, 8, 8, 8, 8), side_channels=4, global_channels=8)


@pytest.fixture
def tiny_model(tiny_spec):
    return NetworkService().build_network(tiny_spec, seed=0)


@pytest.fixture
def synthetic_spec():
    return SyntheticSpec(count=4, size=64, seed=1)


@pytest.fixture
def synthetic_sample(synthetic_spec):
    image, mask = DatasetService().render_synthetic(synthetic_spec, "img00000")
    return Sample(image=normalize_image(image), mask=GroundTruthMask.from_uint8(mask), stem="img00000")


@pytest.fixture
def dataset_dir(tmp_path, synthetic_spec):
    root = tmp_path / "data"
    DatasetService().generate_synthetic(synthetic_spec, str(root))
    return root
