import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "bosegp",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("bosegp")


@pytest.fixture(scope="session")
def square_well():
    from bosegp.scattering import RadialPotential, solve_scattering

    return solve_scattering(RadialPotential.square_well(10.0, 1.0))


@pytest.fixture(scope="session")
def soft_well():
    """Square well with a = 0.238..., below the torus feasibility bound."""
    from bosegp.scattering import RadialPotential, solve_scattering

    return solve_scattering(RadialPotential.square_well(2.0, 1.0))

