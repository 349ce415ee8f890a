import pytest

from eglab.dataio import GenConfig
from eglab.harness import ExperimentConfig
from eglab.seqmodel import TrainConfig


@pytest.fixture
def tiny_config(tmp_path):
    """A run small enough for unit tests: a few dozen utterances, two hidden units."""
    return ExperimentConfig(
        gen=GenConfig(alphabet_size=4, feature_dim=4, max_len=3, silence_fraction=0.2),
        n_seed=8, n_pool=16, n_test=8, hidden_dim=2,
        train=TrainConfig(epochs=2, batch_size=4),
        query_fractions=[0.25, 0.5], seeds=[0], output_dir=str(tmp_path / "run"),
    )


TINY_CONFIG_JSON = {
    "gen": {"alphabet_size": 4, "feature_dim": 4, "max_len": 3, "silence_fraction": 0.2},
    "n_seed": 8, "n_pool": 16, "n_test": 8, "hidden_dim": 2,
    "train": {"epochs": 2, "batch_size": 4},
    "query_fractions": [0.25, 0.5],
}


def pytest_terminal_summary(terminalreporter):
    verdicts = getattr(terminalreporter.config, "acceptance_verdicts", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, name, detail in sorted(verdicts):
        terminalreporter.write_line(f"[{number:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
