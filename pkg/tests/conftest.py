"""Shared fixtures: small synthetic datasets and generators."""

import numpy as np
import pytest

from bicnet.simulate import SimScenario, gen_dataset
from bicnet.types import Dimensions


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def make_tiny_scenario(seed=0, n_regions=4, n_factors=2, n_subjects=2,
                       n_times=(40, 30), fraction=1.0, mu=None, phi=0.9,
                       delta2=0.25, sigma2=1.0, **kw):
    """Small scenario builder; fraction=None suppresses the default support."""
    dims = Dimensions(n_regions=n_regions, n_factors=n_factors,
                      n_subjects=n_subjects, n_times=tuple(n_times))
    if fraction is not None:
        kw.setdefault("nonsparsity", np.full(n_subjects, fraction))
    return SimScenario(
        dims=dims,
        mu_true=np.zeros(n_factors) if mu is None else mu,
        phi_true=np.array(phi),
        delta2_true=np.array(delta2),
        sigma2_true=np.array(sigma2),
        seed=seed,
        **kw,
    )


@pytest.fixture
def tiny_scenario():
    """Factory fixture so tests can override individual scenario fields."""
    return make_tiny_scenario


@pytest.fixture
def tiny_dataset():
    """4 regions, 2 factors, 2 subjects, two short conditions."""
    return gen_dataset(make_tiny_scenario())
