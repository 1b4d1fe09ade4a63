import math
from contextlib import contextmanager

import numpy as np
import pytest

from hall_lab.model import ModelConfig

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@contextmanager
def _record(num: int, label: str):
    try:
        yield
    except BaseException as exc:
        _CRITERIA.setdefault(num, []).append((False, f"{label}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"))
        raise
    _CRITERIA.setdefault(num, []).append((True, label))


@pytest.fixture
def criterion():
    """``with criterion(n, label):`` records one PASS/FAIL entry for acceptance criterion n."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entries = _CRITERIA[num]
        ok = all(e[0] for e in entries)
        detail = "; ".join(("" if e[0] else "FAILED ") + e[1] for e in entries)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {detail}")


@pytest.fixture(scope="session")
def clean16():
    return ModelConfig.landau(1.0, 16, math.sqrt(0.12))


@pytest.fixture(scope="session")
def small_clean():
    return ModelConfig.landau(1.0, 4, 0.5)


@pytest.fixture(scope="session")
def disordered16():
    return ModelConfig.from_lattice(1.0, 10, 12, math.sqrt(0.12), u_amp=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
