import numpy as np
import pytest

import switchdyn as sd

Q_SYM = np.array([[-1.0, 1.0], [1.0, -1.0]])
Q_ASYM = np.array([[-1.0, 1.0], [2.0, -2.0]])


@pytest.fixture(scope="session")
def lorenz():
    return sd.build_model("lorenz-switch")


@pytest.fixture(scope="session")
def lorenz_lin(lorenz):
    return sd.linearize_at_origin(lorenz)


@pytest.fixture(scope="session")
def sirs():
    return sd.build_model("sirs")


def triangular_2d(b, c, d, q=Q_SYM):
    mats = tuple(np.array([[b[i], 0.0], [c[i], d[i]]]) for i in range(len(b)))
    return sd.LinearSwitchedSystem(k=2, matrices=mats, q_matrix=np.asarray(q, float))


def rk4(step=5e-3):
    return sd.IntegratorConfig(method="rk4-fixed", step=step)
