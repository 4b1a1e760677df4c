import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kdelinalg import KernelSpec
from kdelinalg.data import generate

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def gauss():
    return KernelSpec()


@pytest.fixture
def blobs():
    return generate("gaussian_blobs", {"n": 120, "d": 3}, seed=1)


def random_points(seed, n, d, scale=1.0):
    return np.random.default_rng(seed).normal(scale=scale, size=(n, d))


ACCEPTANCE_LINES: list[str] = []


def verdict(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
