import numpy as np
import pytest

from bvgibbs.model import (
    REFERENCE_PRIOR,
    REFERENCE_SUMMARY,
    compute_sufficient_stats,
    synthesize_matching_dataset,
)


@pytest.fixture(scope="session")
def ref_data():
    return synthesize_matching_dataset(**REFERENCE_SUMMARY, seed=2024)


@pytest.fixture(scope="session")
def ref_stats(ref_data):
    return compute_sufficient_stats(ref_data)


@pytest.fixture(scope="session")
def ref_prior():
    return REFERENCE_PRIOR


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
