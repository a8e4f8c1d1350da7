"""Shared fixtures: small synthetic datasets."""

import numpy as np
import pytest

from qdist.shared.datasets import RepeatedMeasuresDataset, SubjectRecord
from qdist.simulate import ScenarioSpec, generate


def make_dataset(n=40, n_obs=60, seed=0, binary=False, covariate=False, feature="x"):
    """Normal samples with random location and scale; outcome depends on both."""
    rng = np.random.default_rng(seed)
    loc = rng.normal(size=n)
    scale = rng.uniform(0.5, 2.0, size=n)
    signal = loc + 0.8 * scale
    if binary:
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-(signal - signal.mean())))).astype(float)
        y[:2] = [0.0, 1.0]
    else:
        y = signal + 0.3 * rng.normal(size=n)
    subjects = tuple(
        SubjectRecord(
            subject_id=f"s{i:03d}",
            outcome=float(y[i]),
            covariates={"age": float(rng.normal())} if covariate else {},
            observations={feature: loc[i] + scale[i] * rng.normal(size=n_obs)},
        )
        for i in range(n)
    )
    return RepeatedMeasuresDataset(subjects=subjects)


@pytest.fixture
def gaussian_dataset():
    return make_dataset()


@pytest.fixture
def binary_dataset():
    return make_dataset(n=60, seed=1, binary=True)


@pytest.fixture
def simulated():
    """A small beta-family cohort with a sin-shaped coefficient function."""
    spec = ScenarioSpec(
        name="small", n_subjects=60, n_obs=(40, 80), distribution="beta",
        mechanism="beta_curve", curve="sin", noise=0.2, seed=3,
    )
    return generate(spec)
