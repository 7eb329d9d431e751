import numpy as np
import pytest

from polalign.optics import ApparatusConfig, aligned_settings
from polalign.quantum import BellKind, random_su2


def make_apparatus(seed=None, visibility=1.0, source=BellKind.PHI_PLUS, pair_rate=160.0, **kw):
    """Apparatus with identity optics (seed None) or a seeded random fiber draw."""
    if seed is not None:
        rng = np.random.default_rng(seed)
        kw.setdefault("fiber_unitary", [random_su2(rng) for _ in range(4)])
        kw.setdefault("pre_split_unitary", [random_su2(rng) for _ in range(2)])
    return ApparatusConfig(
        source=source,
        visibility=visibility,
        pair_rate=pair_rate,
        singles_rate_base=(1.2e5, 1.2e5),
        **kw,
    )


@pytest.fixture
def ideal():
    config = make_apparatus()
    return config, aligned_settings(config)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary, then return the flag for asserting."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
