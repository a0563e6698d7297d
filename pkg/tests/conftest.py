import numpy as np
import pytest

from canon_lti.priors import EigenPriorSpec
from canon_lti.sysgen import random_stable_system


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_system(d_x, seed, sigma_state=0.0, sigma_obs=0.5):
    """Well-conditioned random minimal SISO system with its noise spec."""
    sys, noise, _ = random_stable_system(
        d_x,
        EigenPriorSpec.polar_uniform(d_x),
        seed=seed,
        sigma_state=sigma_state,
        sigma_obs=sigma_obs,
    )
    return sys, noise


def random_similarity(d_x, rng, cond_max=1e3):
    """Random invertible matrix with condition number below cond_max."""
    while True:
        T = rng.normal(size=(d_x, d_x))
        if np.linalg.cond(T) < cond_max:
            return T
