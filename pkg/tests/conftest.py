"""Shared fixtures: the 10-point reference game is expensive to build
(1024 trainings), so it is materialized once per session."""

import numpy as np
import pytest

import robustval as rv
from robustval.experiments import frozen_table_oracle, synthetic_game


@pytest.fixture(scope="session")
def desk_game():
    """Frozen score table of the 10-point Gaussian logistic game (seed 7)."""
    oracle, _, _ = synthetic_game(10, 7)
    return frozen_table_oracle(oracle)


@pytest.fixture(scope="session")
def desk_exact_banzhaf(desk_game):
    return rv.exact_semivalue(desk_game, rv.make_weights("banzhaf", 10))


def random_table(n: int, rng: np.random.Generator) -> rv.TableOracle:
    """A random utility with scores in [0, 1]."""
    return rv.TableOracle(rng.uniform(0.0, 1.0, size=1 << n), n)
