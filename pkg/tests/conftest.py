import pytest

from picertify.system import build_nonholonomic_example, random_finite_problem


@pytest.fixture(scope="session")
def nonholonomic_grid():
    return build_nonholonomic_example(0.86)


@pytest.fixture(scope="session")
def random_problems():
    return [random_finite_problem(50, 5, seed) for seed in range(20)]
