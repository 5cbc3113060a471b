import pytest

from ionchain.pipeline import Pipeline
from ionchain.units import reference_config


@pytest.fixture(scope="session")
def yb24():
    """The 24-ion chain, built once per session."""
    pipe = Pipeline(reference_config())
    pipe.form  # build everything up front
    return pipe


@pytest.fixture(scope="session")
def small():
    """Stable 2-, 3- and 4-ion chains with the default trap."""
    return {n: Pipeline(reference_config().with_ions(n)) for n in (2, 3, 4)}
