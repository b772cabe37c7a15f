import numpy as np
import pytest

from eaisim.model import Dipole, DipoleSystem, chain_positions, ring_positions

# criterion id -> list of (part, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


def make_chain(count, spacing, alpha, f0=300.0, gamma=20.0):
    return DipoleSystem(tuple(Dipole.from_ghz(p, f0, gamma, alpha) for p in chain_positions(count, spacing)))


def make_ring(count, side, alpha, f0=300.0, gamma=20.0):
    return DipoleSystem(tuple(Dipole.from_ghz(p, f0, gamma, alpha) for p in ring_positions(count, side)))


@pytest.fixture
def pair():
    return make_chain(2, 0.1, 0.005)


@pytest.fixture
def five_chain():
    return make_chain(5, 0.1, 0.005)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c)):
        parts = ACCEPTANCE[cid]
        ok = all(p for _, p, _ in parts)
        failed = [f"{name} ({detail})" for name, p, detail in parts if not p]
        line = f"criterion {cid}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " - " + "; ".join(failed)
        tr.write_line(line)
