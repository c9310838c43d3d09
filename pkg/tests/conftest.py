import os

import pytest
from hypothesis import settings

from xduct import planner
from xduct.params import packaged_data_path, reference_card

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# CODATA 2018 exact / recommended values, typed in independently of scipy.
H_PLANCK = 6.62607015e-34
HBAR = H_PLANCK / (2 * 3.141592653589793)
K_BOLTZMANN = 1.380649e-23


@pytest.fixture(scope="session")
def card():
    return reference_card()


@pytest.fixture(scope="session")
def comb():
    return planner.load_comb(packaged_data_path("comb.json"))


@pytest.fixture(scope="session")
def m2o():
    return planner.load_flux_model(packaged_data_path("m2o.json"))
