import functools

import numpy as np
import pytest
from hypothesis import settings

from orbopt.oracle import FciSpace, build_hubbard, fci_ground_state
from orbopt.workflows import model_ground_state

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_acceptance():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def hubbard_state(sites, u, na, nb, basis="mo", pbc=False):
    return model_ground_state(build_hubbard(sites, 1.0, u, pbc), na, nb, basis)


@pytest.fixture(scope="session")
def hubbard6():
    """6-site open chain, U=4, half filling, MO basis: ``(hamiltonian, FciResult)``."""
    return hubbard_state(6, 4.0, 3, 3)


@pytest.fixture(scope="session")
def hubbard2_site():
    h = build_hubbard(2, 1.0, 4.0)
    return h, fci_ground_state(h, 1, 1)


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_statevector(rng, n=4, na=2, nb=2, n_dets=None, normalize=True):
    space = FciSpace(n, na, nb)
    v = rng.standard_normal(space.dim) * rng.random(space.dim) ** 3
    if n_dets is not None:
        v[rng.permutation(space.dim)[n_dets:]] = 0.0
    v /= np.linalg.norm(v) if normalize else np.linalg.norm(v) * 1.3
    return space.to_statevector(v)
