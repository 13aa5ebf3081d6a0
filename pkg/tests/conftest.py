import numpy as np
import pytest

from fermikit import (
    ClassParams,
    InteractionModel,
    TrigField,
    make_dispersion,
)

CANONICAL_PARAMS = ClassParams(delta0=0.1, g0=0.5, G0=10.0, omega0=0.5)


@pytest.fixture(scope="session")
def circle():
    """Wrapped quadratic at mu = 0.5: a unit-circle Fermi surface."""
    return make_dispersion("wrapped-quadratic", {"mu": 0.5})


@pytest.fixture(scope="session")
def cosine_interaction():
    return InteractionModel(
        family="smooth",
        spatial_field=TrigField([(1, 0, 1.0, "cos"), (0, 1, 1.0, "cos")]),
    )


@pytest.fixture(scope="session")
def class_params():
    return CANONICAL_PARAMS


def random_points(rng, n):
    return rng.uniform(-np.pi, np.pi, size=(n, 2))
