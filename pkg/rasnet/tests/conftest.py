import json
import os

import pytest

os.environ.setdefault("RASNET_ENV", "testing")

from click.testing import CliRunner  # noqa: E402

from rasnet.cli import cli  # noqa: E402

TINY_RUN_CONFIG = {
    "network": {"backbone": "toy", "stage_channels": [4, 8, 8, 8, 8], "side_channels": 4, "global_channels": 8},
    "training": {"max_iterations": 1, "iter_size": 1, "log_interval": 0, "augment": False, "seed": 0},
    "evaluation": {"beta2": 0.3, "mode": "aggregate"},
}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def invoke(runner):
    def run(*args):
        return runner.invoke(cli, [str(arg) for arg in args])

    return run


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_RUN_CONFIG))
    return path


@pytest.fixture
def cli_dataset(invoke, tmp_path):
    root = tmp_path / "data"
    result = invoke("gen-data", "--out", root, "--count", 3, "--seed", 4)
    assert result.exit_code == 0, result.output
    return root
