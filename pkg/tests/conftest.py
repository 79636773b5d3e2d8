import numpy as np
import pytest

from seqllr.channel import ChannelEstimate
from seqllr.harness import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_pd(rng, n, floor=0.5):
    A = complex_gaussian(rng, (n, n))
    return A @ A.conj().T + floor * np.eye(n)


def scalar_estimate(h_hat=1.0):
    """Single AP, single antenna, single UE, perfect CSI."""
    H_hat = np.array([[[h_hat]]], dtype=complex)
    zeros = np.zeros((1, 1, 1, 1), dtype=complex)
    return ChannelEstimate(H_hat=H_hat, R_hat=zeros + 1, R_tilde=zeros, Psi=None)


@pytest.fixture
def make_instance():
    def _make(constellation_id, K, L, N, seed=0, **kwargs):
        return random_instance(constellation_id, K, L, N, np.random.default_rng(seed), **kwargs)

    return _make


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
