import numpy as np
import pytest

from mimoisi.channel import FrameParams, generate_channel, simulate_frame
from mimoisi.modulation import Modulation

BPSK = Modulation("bpsk", 2)
QAM4 = Modulation("qam", 4)
QAM16 = Modulation("qam", 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_frame(rng, n_t=2, n_r=2, L=1, K=2, mod=BPSK, snr_db=10.0, add_noise=True):
    taps = generate_channel(n_t, n_r, L, rng)
    x = mod.random_symbols(K * n_t, rng)
    model = simulate_frame(taps, FrameParams(K, L, mod), x, snr_db, rng, add_noise=add_noise)
    return x, model


ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion, then assert it."""

    def _report(n, ok, detail):
        ACCEPTANCE_LINES[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[n])
        assert ok, detail

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
