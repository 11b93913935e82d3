from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spanslot.encoders import ToyEncoder
from spanslot.synthetic import generate_synthetic_corpus


@pytest.fixture(scope="session")
def synth_train():
    return generate_synthetic_corpus(200, 7, split="train")


@pytest.fixture(scope="session")
def synth_test():
    return generate_synthetic_corpus(200, 8, split="test")


@pytest.fixture(scope="session")
def synth_encoder(synth_train):
    return ToyEncoder.fit([u.text for u in synth_train], dim=32, seed=0)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {verdict}: {name}", flush=True)
