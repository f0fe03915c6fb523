import dataclasses

import pytest

from pexsim import SimulationConfig, simulate_cohorts


def no_pe_config(seed: int = 1, **kw) -> SimulationConfig:
    return dataclasses.replace(SimulationConfig(seed=seed, **kw), pe_beta5=())


def pe_config(seed: int = 1, **kw) -> SimulationConfig:
    return SimulationConfig(seed=seed, **kw)


@pytest.fixture(scope="session")
def no_pe_dataset():
    return simulate_cohorts(no_pe_config(seed=1))


@pytest.fixture(scope="session")
def pe_dataset():
    return simulate_cohorts(pe_config(seed=1))
