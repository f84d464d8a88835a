import numpy as np
import pytest

from maxlow import (
    GridDomain,
    MaterialLaw,
    assemble,
)


def mixed_label(center, axis):
    return 1 if center[0] > 0 else 2


@pytest.fixture(scope="session")
def law_unit():
    return MaterialLaw()


@pytest.fixture(scope="session")
def law_aniso():
    # smooth symmetric perturbation on a 10^3 grid, uniformly PD
    shape = (10, 10, 10)
    hat = np.zeros((*shape, 3, 3))
    xs = np.arange(shape[0]) / shape[0]
    for d in range(3):
        hat[..., d, d] = 0.4 * np.sin(2 * np.pi * xs + d)[:, None, None]
    off = 0.1 * np.cos(np.pi * xs)[:, None, None]
    hat[..., 0, 1] = hat[..., 1, 0] = off
    return MaterialLaw(eps0=1.0, mu0=1.0, eps_hat=hat, mu_hat=hat.copy())


@pytest.fixture(scope="session")
def mixed_domain():
    obst = np.zeros((8, 8, 8), dtype=bool)
    obst[3:5, 3:5, 3:5] = True
    return GridDomain.build((8, 8, 8), 0.5, obstacle=obst, label=mixed_label)


@pytest.fixture(scope="session")
def cavity_domain():
    obst = np.zeros((10, 10, 10), dtype=bool)
    obst[4:6, 4:6, 4:6] = True
    return GridDomain.build((10, 10, 10), 0.5, obstacle=obst, label=1)


@pytest.fixture(scope="session")
def ring_domain():
    act = np.ones((10, 10, 4), dtype=bool)
    act[3:7, 3:7, :] = False
    return GridDomain.build((10, 10, 4), 0.5, obstacle=~act, label=1)


@pytest.fixture(scope="session")
def solid_domain():
    return GridDomain.build((8, 8, 8), 0.5, label=1)


@pytest.fixture(scope="session")
def op_cavity(cavity_domain, law_unit):
    op = assemble(cavity_domain, law_unit)
    op.spectral()  # warm the cache once per session
    return op


@pytest.fixture(scope="session")
def op_mixed(mixed_domain, law_unit):
    return assemble(mixed_domain, law_unit)
