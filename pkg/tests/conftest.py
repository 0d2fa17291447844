import numpy as np
import pytest
from hypothesis import settings

from noisespec.spectra import LorentzianTerm, SpectrumModel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


def random_term(rng, B=(0.1, 10.0), d=(0.0, 20.0), wc=(0.1, 10.0)):
    return LorentzianTerm(rng.uniform(*B), rng.uniform(*d), rng.uniform(*wc))


def random_model(rng, n_terms=3):
    return SpectrumModel(tuple(random_term(rng) for _ in range(n_terms)))


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
