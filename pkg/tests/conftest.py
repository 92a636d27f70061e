import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from pausetts.config import ModelConfig  # noqa: E402
from pausetts.synthetic import make_synthetic_corpus, tiny_config  # noqa: E402
from pausetts.trainer import load_examples  # noqa: E402


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory, tiny_cfg):
    return make_synthetic_corpus(tmp_path_factory.mktemp("syn"), tiny_cfg, n_utts=8, seed=0)


@pytest.fixture(scope="session")
def synthetic_examples(synthetic_manifest, tiny_cfg):
    return load_examples(synthetic_manifest, tiny_cfg)


@pytest.fixture
def small_model_cfg():
    return ModelConfig(d_model=16, n_heads=2, n_blocks=1, dropout=0.0, n_speakers=3, n_mels=12, n_bins=8)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
