import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))
torch.set_num_threads(1)

from stmae.config import RunConfig, config_from_dict  # noqa: E402
from stmae.datasets import make_benchmark  # noqa: E402

REPO = Path(__file__).resolve().parents[1]


def tiny_config(tmp: Path, **overrides) -> RunConfig:
    """A configuration small enough to train in a few seconds."""
    d = RunConfig().to_dict()
    d["run_dir"] = str(tmp / "run")
    d["data"]["train_root"] = str(tmp / "data" / "train")
    d["data"]["test_root"] = str(tmp / "data" / "test")
    d["model"].update(resolution=32, memory_items=4, k_top=2, disc_channels=[4, 4, 4])
    d["model"]["encoder"].update(channels=[4, 8, 8, 8], feature_channels=8)
    d["schedule"].update(batch_size=4, pretrain_epochs=2, main_epochs=2)
    d["synth"] = make_benchmark(seed=1, n_train=2, n_test=2, train_frames=10, test_frames=16,
                                sprites_per_video=1, resolution=32, anomaly_span=(8, 11))
    cfg = config_from_dict(d)
    return cfg.replace(**overrides) if overrides else cfg


@pytest.fixture
def tiny(tmp_path):
    return tiny_config(tmp_path)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
