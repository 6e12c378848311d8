import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import pinched_curvature, radial_bvp

from lorentz_embed.metric import make_hyperbolic, make_radial_from_curvature
from lorentz_embed.grid import PolarGrid
from lorentz_embed.solver import DirichletProblem, solve_dirichlet
from lorentz_embed.embed import build_embedding


@pytest.fixture(scope="session")
def pinched_metric():
    K, Kp, Kpp = pinched_curvature()
    return make_radial_from_curvature(K, 9.5, k_prime=Kp, k_double_prime=Kpp)


@pytest.fixture(scope="session")
def pinched_oracle_l3(pinched_metric):
    K, _, _ = pinched_curvature()
    b = 1.0 / (2.0 * pinched_metric.bounds.c2_of_radius(3.0))
    return radial_bvp(K, 3.0, b, pinched_metric.bounds.c1)


@pytest.fixture(scope="session")
def pinched_solve_64(pinched_metric):
    return solve_dirichlet(DirichletProblem(pinched_metric, PolarGrid(64, 64, 3.0)))


@pytest.fixture(scope="session")
def pinched_solve_128(pinched_metric):
    return solve_dirichlet(DirichletProblem(pinched_metric, PolarGrid(128, 128, 3.0)))


@pytest.fixture(scope="session")
def pinched_solve_l4(pinched_metric):
    return solve_dirichlet(DirichletProblem(pinched_metric, PolarGrid(64, 64, 4.0)))


@pytest.fixture(scope="session")
def model_solve_128():
    return solve_dirichlet(DirichletProblem(make_hyperbolic(1.0), PolarGrid(128, 128, 2.0)))


@pytest.fixture(scope="session")
def model_embedding(model_solve_128):
    return build_embedding(model_solve_128, l_obs=1.5)


@pytest.fixture(scope="session")
def pinched_embedding_64(pinched_solve_64):
    return build_embedding(pinched_solve_64, l_obs=2.0)


@pytest.fixture(scope="session")
def pinched_embedding_128(pinched_solve_128):
    return build_embedding(pinched_solve_128, l_obs=2.0)
