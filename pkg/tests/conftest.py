import numpy as np
import pytest

from spectra.channel import ChannelSpec


def random_spec(rng, K, M, alpha_scale=1.0, budget=(0.5, 5.0), weights=None):
    b = rng.dirichlet(np.ones(M) * 2.0)
    b[-1] = 1.0 - b[:-1].sum()
    alpha = rng.uniform(0, alpha_scale, (M, K, K))
    noise = rng.uniform(0.2, 2.0, (M, K))
    w = rng.uniform(0.5, 2.0, K) if weights is None else weights
    p = rng.uniform(*budget, K)
    return ChannelSpec(b, alpha, noise, w, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""
    def _report(number, name, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
