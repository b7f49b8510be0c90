import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from toxspans.model import EncoderConfig, TrainConfig, train  # noqa: E402
from toxspans.synth import SynthConfig, generate  # noqa: E402

torch.set_num_threads(1)

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SynthConfig(train_size=400, dev_size=60, test_size=60, seed=11))


@pytest.fixture(scope="session")
def tiny_tc_checkpoints(small_corpus):
    enc = EncoderConfig(embedding_dim=16, hidden_dim=16, max_len=48, stride=12, dropout_rate=0.0, seed=1)
    tc = TrainConfig(batch_size=16, epochs=3, learning_rate=3e-2)
    return train(small_corpus["train"], small_corpus["dev"], "TC", enc, tc)
